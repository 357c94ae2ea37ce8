import json
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from simulator.models import SimulationRun
from simulator.services.config_service import synth_tensor
from simulator.services.energymodel import (
    GUARD_MAC_SHARE,
    GUARD_SRAM_SHARE,
    OperatingPoint,
    PowerModel,
    layer_power,
)
from simulator.services.huffcodec import HuffStream
from simulator.services.quantcore import read_tensor, write_tensor
from simulator.tests.fixtures import bundled_runs

MODEL = PowerModel(0.03, 0.3, 1.2, GUARD_SRAM_SHARE, GUARD_MAC_SHARE)


def run(*args, **options):
    out = StringIO()
    call_command(*args, stdout=out, **options)
    return out.getvalue()


class SimulateCommandTests(TestCase):

    def test_machine_report_to_stdout(self):
        data = json.loads(run('simulate', 'lenet5', '--format', 'machine'))
        self.assertEqual(data['network'], 'lenet5')
        self.assertEqual([layer['name'] for layer in data['layers']], ['l1', 'l2'])
        self.assertGreater(data['totals']['fps'], 0)

    def test_report_to_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'lenet5.txt'
            output = run('simulate', 'lenet5', '--out', str(path))
            self.assertIn('Report written', output)
            self.assertIn('Total / avg.', path.read_text())

    def test_save_stores_run(self):
        output = run('simulate', 'lenet5', '--guarding', 'off', '--save', '--format', 'machine')
        self.assertIn('Saved run', output)
        stored = SimulationRun.objects.get()
        self.assertEqual((stored.network, stored.guarding), ('lenet5', 'off'))

    def test_bits_override(self):
        data = json.loads(run('simulate', 'lenet5', '--format', 'machine', '--bits-override', 'l2:8,8'))
        layer = data['layers'][1]
        self.assertEqual((layer['weight_bits'], layer['image_bits']), (8, 8))

    def test_unknown_config(self):
        with self.assertRaises(CommandError):
            run('simulate', 'vgg16')

    def test_override_of_unknown_layer(self):
        with self.assertRaisesMessage(CommandError, 'l9'):
            run('simulate', 'lenet5', '--bits-override', 'l9:8,8')


class CodecCommandTests(TestCase):

    def test_encode_then_decode(self):
        tensor = synth_tensor((4, 6, 6), 7, 0.6, 5, 'geometric', exponent=-3)
        with tempfile.TemporaryDirectory() as tmp:
            src, packed, restored = (Path(tmp) / name for name in ('t.qtsr', 't.huf', 'r.qtsr'))
            src.write_bytes(write_tensor(tensor))

            output = run('encode', str(src), str(packed))
            self.assertIn('144 7-bit words', output)
            self.assertEqual(HuffStream.from_bytes(packed.read_bytes()).count, 144)

            run('decode', str(packed), str(restored), '--dims', '4,6,6', '--exponent', '-3')
            result = read_tensor(restored.read_bytes())
        self.assertEqual((result.dims, result.bits, result.exponent), (tensor.dims, 7, -3))
        self.assertTrue(np.array_equal(result.data, tensor.data))

    def test_decode_rejects_bad_dims(self):
        tensor = synth_tensor((10,), 4, 0.5, 1)
        with tempfile.TemporaryDirectory() as tmp:
            src, packed = Path(tmp) / 't.qtsr', Path(tmp) / 't.huf'
            src.write_bytes(write_tensor(tensor))
            run('encode', str(src), str(packed))
            with self.assertRaises(CommandError):
                run('decode', str(packed), str(Path(tmp) / 'r.qtsr'), '--dims', '3,x')

    def test_encode_missing_file(self):
        with self.assertRaises(CommandError):
            run('encode', '/nonexistent/t.qtsr', '/nonexistent/t.huf')


class SelftestCommandTests(TestCase):

    def test_small_suite_passes(self):
        output = run('selftest', '--cases', '3', '--max-dim', '10')
        self.assertIn('3 layers bit-identical', output)


class CalibrateCommandTests(TestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        service = bundled_runs()
        entries = []
        for layer_name, overrides in (
            ('l1', {}),
            ('l2', {}),
            ('l1', {'guarding': False}),
            ('l2', {'guarding': False}),
            ('l1', {'voltage': 1.0}),
            ('l2', {'bits': 16, 'voltage': 1.1, 'guarding': False}),
        ):
            layer = service.layer_report('lenet5', layer_name)
            stats = layer.stats.without_guarding() if overrides.get('guarding') is False else layer.stats
            op = OperatingPoint(overrides.get('bits', max(layer.weight_bits, layer.image_bits)),
                                overrides.get('voltage', layer.voltage), layer.frequency)
            entries.append({
                'name': f'lenet5_{layer_name}_{len(entries)}',
                'config': 'lenet5',
                'layer': layer_name,
                'measured_mw': layer_power(stats, op, MODEL).total,
                **overrides,
            })
        cls.entries = entries

    def write_table(self, tmp, entries):
        path = Path(tmp) / 'anchors.json'
        path.write_text(json.dumps({'anchors': entries}))
        return path

    def test_fit_saves_model(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = self.write_table(tmp, self.entries)
            model_path = Path(tmp) / 'model.json'
            output = run('calibrate', str(table), '--out', str(model_path), '--leave-one-out')
            self.assertIn('Leave-one-out:', output)
            self.assertIn('Saved power model', output)
            self.assertIn('RMS relative error: 0.000', output)
            fitted = PowerModel.load(model_path)
        self.assertEqual(fitted.p_leak, MODEL.p_leak)
        self.assertAlmostEqual(fitted.c_mac, MODEL.c_mac, places=3)

    def test_dry_run_writes_nothing(self):
        with tempfile.TemporaryDirectory() as tmp:
            table = self.write_table(tmp, self.entries)
            model_path = Path(tmp) / 'model.json'
            output = run('calibrate', str(table), '--out', str(model_path), '--dry-run')
            self.assertIn('Dry run', output)
            self.assertFalse(model_path.exists())

    def test_inconsistent_anchors_fail(self):
        entries = [dict(entry, name=f'a{i}', layer='l1', measured_mw=(10.0 if i % 2 else 1000.0))
                   for i, entry in enumerate(self.entries[:1] * 4)]
        with tempfile.TemporaryDirectory() as tmp:
            table = self.write_table(tmp, entries)
            with self.assertRaisesMessage(CommandError, 'RMS'):
                run('calibrate', str(table), '--dry-run')
