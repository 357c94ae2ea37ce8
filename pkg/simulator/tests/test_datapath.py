import numpy as np
from django.test import SimpleTestCase

from simulator.exceptions import ShapeError
from simulator.services.config_service import synth_tensor
from simulator.services.datapath import (
    ArrayState,
    LayerOperands,
    accumulate_dense,
    compute_guard_flags,
    run_layer,
    step,
)
from simulator.services.mapper import LayerSpec, Tile, schedule_tile
from simulator.services.oracle import reference_accumulations, reference_conv
from simulator.services.quantcore import QTensor
from simulator.services.selftest_service import (
    check_case,
    compare_accumulations,
    random_conv_case,
    run_equivalence_suite,
)


def dense_layer(seed=0, zero_fraction=0.0, **kwargs):
    values = dict(kind='conv', in_channels=3, in_height=9, in_width=21, num_filters=18,
                  kernel_h=3, kernel_w=3, weight_bits=8, image_bits=8)
    values.update(kwargs)
    spec = LayerSpec(**values)
    weights = synth_tensor(spec.weight_dims, spec.weight_bits, zero_fraction, [seed, 1])
    image = synth_tensor(spec.image_dims, spec.image_bits, zero_fraction, [seed, 2])
    return spec, weights, image


class GuardTests(SimpleTestCase):

    def test_guard_flags(self):
        flags = compute_guard_flags(QTensor((4,), 4, 0, np.array([0, 3, 0, -1])))
        self.assertEqual(flags.bits.tolist(), [False, True, False, True])
        self.assertEqual(flags.nonzero, 2)
        self.assertEqual(flags.zero_fraction, 0.5)

    def test_zero_pixel_guards_its_row(self):
        spec = LayerSpec('conv', 1, 1, 16, num_filters=16, kernel_h=1, kernel_w=1)
        image = QTensor(spec.image_dims, 8, 0, np.r_[0, np.ones(15, dtype=int)])
        weights = QTensor(spec.weight_dims, 8, 0, np.ones(16, dtype=int))
        schedule = schedule_tile(spec, Tile(0, 0, 16, 0, 16, 0, 0))
        event = next(iter(schedule))
        operands = LayerOperands.from_tensors(image, weights)
        _, cycle = step(ArrayState(), event, True, operands)
        # Column 0 sits on lane 15: one lane of 16 MACs is gated.
        self.assertEqual(cycle.macs_guarded, 16)
        self.assertEqual(cycle.macs_executed, 240)
        self.assertEqual(cycle.pixel_fetches_guarded, 1)
        self.assertEqual(cycle.flag_bits, 32)
        _, unguarded = step(ArrayState(), event, False, operands)
        self.assertEqual((unguarded.macs_executed, unguarded.macs_guarded), (256, 0))

    def test_all_zero_weights_suppress_everything(self):
        spec, _, image = dense_layer()
        weights = QTensor(spec.weight_dims, 8, 0, np.zeros(int(np.prod(spec.weight_dims)), dtype=int))
        run = run_layer(spec, weights, image, guarding=True)
        self.assertEqual(run.stats.macs_executed, 0)
        self.assertEqual(run.stats.macs_guarded, spec.useful_macs)
        self.assertEqual(run.stats.weight_fetches_guarded, run.stats.weight_fetches)
        self.assertFalse(run.output(weights, image).data.any())

    def test_guarded_share_follows_operand_sparsity(self):
        spec = LayerSpec(kind='conv', in_channels=8, in_height=18, in_width=34, num_filters=32,
                         kernel_h=3, kernel_w=3, weight_bits=8, image_bits=8)
        weights = synth_tensor(spec.weight_dims, 8, 0.4, 31)
        image = synth_tensor(spec.image_dims, 8, 0.7, 32)
        stats = run_layer(spec, weights, image, guarding=True).stats
        slots = stats.macs_executed + stats.macs_guarded
        self.assertGreaterEqual(slots, 10 ** 6)
        expected = 1 - (1 - 0.4) * (1 - 0.7)
        self.assertAlmostEqual(stats.macs_guarded / slots / expected, 1.0, delta=0.03)


class RunLayerTests(SimpleTestCase):

    def test_matches_reference(self):
        spec, weights, image = dense_layer(zero_fraction=0.4, padding=1, groups=3)
        run = run_layer(spec, weights, image)
        expected = reference_conv(spec, weights, image)
        self.assertTrue(np.array_equal(run.output(weights, image).data, expected.data))
        self.assertTrue(run.complete)
        self.assertEqual(run.blocks_run, len(run.schedule.groups()))

    def test_guarding_changes_energy_not_cycles_or_results(self):
        spec, weights, image = dense_layer(seed=4, zero_fraction=0.6, stride_h=2)
        on = run_layer(spec, weights, image, guarding=True)
        off = run_layer(spec, weights, image, guarding=False)
        self.assertEqual(on.stats.cycles, off.stats.cycles)
        self.assertTrue(np.array_equal(on.accumulators, off.accumulators))
        self.assertGreater(on.stats.macs_guarded, 0)
        self.assertLess(on.stats.sram_reads, off.stats.sram_reads)
        self.assertEqual(on.stats.active_macs, off.stats.macs_executed)

    def test_counts_match_prediction(self):
        spec, weights, image = dense_layer(seed=5, zero_fraction=0.3, padding=1)
        run = run_layer(spec, weights, image, guarding=True)
        self.assertEqual(run.stats.cycles, run.predicted.cycles)
        self.assertEqual(run.stats.useful_macs, spec.useful_macs)
        self.assertEqual(run.stats.active_macs, spec.useful_macs)
        self.assertEqual(run.stats.word_fetches, run.predicted.word_fetches)
        self.assertEqual(run.stats.sram_reads, run.stats.word_fetches - run.stats.fetches_guarded)
        self.assertEqual(run.stats.flag_bits, 32 * run.stats.cycles)

    def test_without_guarding_restates_counters(self):
        spec, weights, image = dense_layer(seed=6, zero_fraction=0.5)
        on = run_layer(spec, weights, image, guarding=True).stats
        off = run_layer(spec, weights, image, guarding=False).stats
        restated = on.without_guarding()
        self.assertEqual(restated.macs_executed, off.macs_executed)
        self.assertEqual(restated.sram_reads, off.sram_reads)
        self.assertEqual(restated.flag_bits, 0)

    def test_sampled_groups(self):
        spec, weights, image = dense_layer(seed=7, zero_fraction=0.2)
        full = run_layer(spec, weights, image)
        part = run_layer(spec, weights, image, groups=[0, 2])
        self.assertFalse(part.complete)
        self.assertEqual(part.blocks_run, 2)
        self.assertLess(part.stats.cycles, full.stats.cycles)
        # Replayed blocks hold the same accumulations as the full run.
        mask = part.accumulators != 0
        self.assertTrue(np.array_equal(part.accumulators[mask], full.accumulators[mask]))

    def test_dense_accumulation_matches_cycle_model(self):
        spec, weights, image = dense_layer(seed=8, zero_fraction=0.3, padding=1, stride_h=2, stride_v=2)
        run = run_layer(spec, weights, image)
        self.assertTrue(np.array_equal(accumulate_dense(spec, weights, image), run.accumulators))

    def test_operand_shape_checked(self):
        spec, weights, image = dense_layer()
        with self.assertRaises(ShapeError):
            run_layer(spec, weights, image.with_data(image.data[:27], dims=(1, 3, 9)))


class EquivalenceTests(SimpleTestCase):

    def test_random_layers_bit_identical(self):
        result = run_equivalence_suite(cases=200, seed=2024)
        self.assertEqual(result.cases, 200)
        self.assertEqual(result.mismatches, [])

    def test_extreme_widths(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            case = random_conv_case(rng, max_dim=12)
            self.assertIsNone(check_case(case))

    def test_corrupted_accumulations_are_caught(self):
        rng = np.random.default_rng(5)
        case = random_conv_case(rng, max_dim=10)
        expected = reference_accumulations(case.spec, case.weights, case.image)
        while not expected.any():
            case = random_conv_case(rng, max_dim=10)
            expected = reference_accumulations(case.spec, case.weights, case.image)
        self.assertIsNone(compare_accumulations(expected, expected.copy()))
        self.assertIsNotNone(compare_accumulations(expected, expected + (expected != 0)))

    def test_case_outputs_are_not_saturated(self):
        rng = np.random.default_rng(6)
        for _ in range(20):
            case = random_conv_case(rng, max_dim=12)
            out = reference_conv(case.spec, case.weights, case.image)
            self.assertEqual(out.bits, 16)
            self.assertLess(int(np.abs(out.data).max(initial=0)), (1 << 15) - 1, case.describe())
