import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from simulator.services.config_service import synth_tensor
from simulator.services.datapath import accumulate_dense, run_layer
from simulator.services.mapper import LayerSpec, predict_stats
from simulator.services.oracle import reference_accumulations, reference_output
from simulator.services.quantcore import QTensor

logger = logging.getLogger(__name__)

KERNELS = (1, 3, 5, 11)
BIT_WIDTHS = (1, 2, 4, 7, 8, 9, 16)
HORIZONTAL_STRIDES = (1, 2, 4)
MAX_DIM = 32


@dataclass(frozen=True)
class ConvCase:
    spec: LayerSpec
    weights: QTensor
    image: QTensor

    def describe(self) -> str:
        s = self.spec
        return (f'{s.in_channels}x{s.in_height}x{s.in_width} K{s.kernel_h} F{s.num_filters} '
                f'g{s.groups} s{s.stride_h}/{s.stride_v} p{s.padding} '
                f'{s.weight_bits}b/{s.image_bits}b')


@dataclass
class EquivalenceResult:
    cases: int = 0
    mismatches: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.mismatches


def random_conv_case(rng: np.random.Generator, max_dim: int = MAX_DIM,
                     max_cycles: int = 4000) -> ConvCase:
    """
    A small random convolution with random sparse operands. Layers whose
    schedule exceeds `max_cycles` are redrawn so a suite stays quick.
    """
    while True:
        kernel = int(rng.choice(KERNELS))
        padding = int(rng.integers(0, kernel // 2 + 1))
        low = max(1, kernel - 2 * padding)
        if low > max_dim:
            continue
        groups = int(rng.choice((1, 1, 2)))
        spec = LayerSpec(
            kind='conv',
            in_channels=groups * int(rng.integers(1, 4)),
            in_height=int(rng.integers(low, max_dim + 1)),
            in_width=int(rng.integers(low, max_dim + 1)),
            num_filters=groups * int(rng.integers(1, 21)),
            kernel_h=kernel,
            kernel_w=kernel,
            stride_h=int(rng.choice(HORIZONTAL_STRIDES)),
            stride_v=int(rng.integers(1, 3)),
            weight_bits=int(rng.choice(BIT_WIDTHS)),
            image_bits=int(rng.choice(BIT_WIDTHS)),
            padding=padding,
            groups=groups,
            name='case',
        )
        if predict_stats(spec).cycles <= max_cycles:
            break

    def operand(dims, bits) -> QTensor:
        return synth_tensor(dims, bits, float(rng.uniform(0.0, 0.9)),
                            int(rng.integers(0, 2 ** 31)),
                            str(rng.choice(('uniform', 'geometric'))),
                            int(rng.integers(-4, 5)))

    weights = operand(spec.weight_dims, spec.weight_bits)
    image = operand(spec.image_dims, spec.image_bits)
    # 16-bit outputs scaled so the largest sum stays clear of saturation.
    peak = int(np.abs(accumulate_dense(spec, weights, image)).max(initial=0))
    shift = max(0, peak.bit_length() - 14) + int(rng.integers(0, 2))
    spec = replace(spec, output_bits=16, output_exponent=weights.exponent + image.exponent + shift)
    return ConvCase(spec, weights, image)


def _same(a: QTensor, b: QTensor) -> bool:
    return (a.dims == b.dims and a.bits == b.bits and a.exponent == b.exponent
            and np.array_equal(a.data, b.data))


def compare_accumulations(expected_sums: np.ndarray, accumulators: np.ndarray) -> Optional[str]:
    if accumulators.shape != expected_sums.shape:
        return f'accumulator grid {accumulators.shape}, expected {expected_sums.shape}'
    wrong = int(np.count_nonzero(accumulators != expected_sums))
    if wrong:
        return f'{wrong} of {expected_sums.size} accumulations differ'
    return None


def check_case(case: ConvCase) -> Optional[str]:
    """None when the array model matches the reference with guarding on and off."""
    expected = reference_accumulations(case.spec, case.weights, case.image)
    for guarding in (False, True):
        run = run_layer(case.spec, case.weights, case.image, guarding=guarding)
        mismatch = compare_accumulations(expected, run.accumulators)
        if mismatch is None:
            output = run.output(case.weights, case.image)
            if not _same(output, reference_output(case.spec, expected, case.weights, case.image)):
                mismatch = 'array output words differ'
        if mismatch:
            return f"{case.describe()} guarding {'on' if guarding else 'off'}: {mismatch}"
    return None


def run_equivalence_suite(cases: int = 200, seed: int = 0, max_dim: int = MAX_DIM) -> EquivalenceResult:
    rng = np.random.default_rng(seed)
    result = EquivalenceResult()
    for _ in range(cases):
        case = random_conv_case(rng, max_dim)
        mismatch = check_case(case)
        result.cases += 1
        if mismatch:
            logger.error('Datapath differs from reference: %s', mismatch)
            result.mismatches.append(mismatch)
    logger.info('Equivalence suite: %d cases, %d mismatches', result.cases, len(result.mismatches))
    return result
