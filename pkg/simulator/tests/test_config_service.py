import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from simulator.exceptions import ParseError, RangeError, ShapeChainError, ShapeError
from simulator.services.config_service import (
    TensorSource,
    apply_overrides,
    bundled_configs,
    load_config,
    load_tensor,
    parse_bits_override,
    parse_config,
    parse_voltage_override,
    synth_tensor,
)
from simulator.services.energymodel import OperatingPoint
from simulator.services.quantcore import QTensor, write_tensor, zero_fraction


def conv(name, channels, size, filters, **kwargs):
    layer = {
        'name': name, 'kind': 'conv', 'in_channels': channels, 'in_height': size, 'in_width': size,
        'num_filters': filters, 'kernel': 3, 'padding': 1,
        'weights': {'source': 'synthetic'}, 'image': {'source': 'synthetic'},
    }
    layer.update(kwargs)
    return layer


def config_text(*layers, **kwargs):
    data = {'network': 'tiny', 'frequency': 100e6, 'layers': list(layers)}
    data.update(kwargs)
    return json.dumps(data, indent=2)


class BundledConfigTests(SimpleTestCase):

    def test_bundled_names(self):
        self.assertEqual(bundled_configs(), ['alexnet', 'general16', 'lenet5'])

    def test_alexnet(self):
        config = load_config('alexnet')
        convs = config.conv_layers
        self.assertEqual([layer.name for layer in convs], ['l1', 'l2', 'l3', 'l4', 'l5'])
        self.assertEqual([(c.spec.weight_bits, c.spec.image_bits) for c in convs],
                         [(7, 4), (7, 7), (8, 9), (9, 8), (9, 8)])
        self.assertEqual([c.spec.voltage for c in convs], [0.85, 0.9, 0.92, 0.92, 0.92])
        self.assertEqual(config.frequency, 204e6)
        self.assertEqual(config.layer_named('pool1').spec.out_dims, (96, 27, 27))

    def test_lenet(self):
        convs = load_config('lenet5').conv_layers
        self.assertEqual([(c.spec.weight_bits, c.spec.image_bits) for c in convs], [(3, 1), (4, 6)])

    def test_timing_safe_layers(self):
        below = []
        for name in ('alexnet', 'lenet5'):
            for layer in load_config(name).conv_layers:
                spec = layer.spec
                if not OperatingPoint(spec.bits_effective, spec.voltage, spec.frequency).feasible:
                    below.append(f'{name}:{layer.name}')
        self.assertEqual(below, ['alexnet:l1', 'alexnet:l3', 'alexnet:l4', 'alexnet:l5',
                                 'lenet5:l1', 'lenet5:l2'])

    def test_unknown_config(self):
        with self.assertRaises(ParseError):
            load_config('vgg16')

    def test_unknown_layer(self):
        with self.assertRaises(ParseError):
            load_config('lenet5').layer_named('l9')


class ParseConfigTests(SimpleTestCase):

    def test_minimal(self):
        config = parse_config(config_text(conv('a', 2, 8, 4)))
        spec = config.layers[0].spec
        self.assertEqual(spec.out_dims, (4, 8, 8))
        self.assertEqual(spec.frequency, 100e6)
        self.assertIsNone(spec.voltage)
        self.assertEqual(config.options.mode, 'auto')

    def test_chain_with_pool_and_relu(self):
        text = config_text(
            conv('a', 2, 8, 4),
            {'kind': 'relu'},
            {'kind': 'maxpool', 'window': 2},
            conv('b', 4, 4, 4, image={'source': 'chain'}),
        )
        config = parse_config(text)
        self.assertEqual(config.layers[1].name, 'relu2')
        self.assertEqual(config.layers[2].spec.out_dims, (4, 4, 4))
        self.assertEqual(config.layers[3].image.source, 'chain')

    def test_mismatched_channels(self):
        with self.assertRaises(ShapeChainError) as ctx:
            parse_config(config_text(conv('a', 2, 8, 4), conv('b', 3, 8, 4)))
        self.assertEqual((ctx.exception.producer, ctx.exception.consumer), ('a', 'b'))

    def test_malformed_json_reports_line(self):
        with self.assertRaises(ParseError) as ctx:
            parse_config('{\n  "network": "x",\n  "layers": [,]\n}')
        self.assertEqual(ctx.exception.line, 3)

    def test_field_diagnostics(self):
        layer = conv('a', 2, 8, 4)
        del layer['num_filters']
        with self.assertRaises(ParseError) as ctx:
            parse_config(config_text(layer))
        self.assertEqual(ctx.exception.field, 'layers[0].num_filters')
        self.assertIsNotNone(ctx.exception.line)

    def test_bit_range_checked(self):
        with self.assertRaises(ParseError) as ctx:
            parse_config(config_text(conv('a', 2, 8, 4, weight_bits=17)))
        self.assertEqual(ctx.exception.field, 'layers[0].weight_bits')

    def test_first_layer_cannot_chain(self):
        with self.assertRaises(ParseError):
            parse_config(config_text(conv('a', 2, 8, 4, image={'source': 'chain'})))

    def test_file_source_needs_path(self):
        with self.assertRaises(ParseError):
            parse_config(config_text(conv('a', 2, 8, 4, weights={'source': 'file'})))


class TensorSourceTests(SimpleTestCase):

    def test_synth_all_zero(self):
        t = synth_tensor((10, 10), 8, 1.0, 0)
        self.assertFalse(t.data.any())

    def test_synth_zero_fraction(self):
        t = synth_tensor((100_000,), 7, 0.89, 1)
        self.assertLessEqual(abs(zero_fraction(t) - 0.89), 0.01)
        nonzero = t.data[t.data != 0]
        self.assertGreaterEqual(nonzero.min(), -64)
        self.assertLessEqual(nonzero.max(), 63)

    def test_synth_is_deterministic(self):
        a = synth_tensor((50, 50), 9, 0.3, [3, 4], 'geometric')
        b = synth_tensor((50, 50), 9, 0.3, [3, 4], 'geometric')
        self.assertTrue(np.array_equal(a.data, b.data))
        c = synth_tensor((50, 50), 9, 0.3, [3, 5], 'geometric')
        self.assertFalse(np.array_equal(a.data, c.data))

    def test_synth_one_bit(self):
        t = synth_tensor((1000,), 1, 0.5, 2)
        self.assertEqual(set(t.data.tolist()), {0, 1})

    def test_synth_rejects_fraction(self):
        with self.assertRaises(RangeError):
            synth_tensor((4,), 8, 1.5, 0)

    def test_file_source(self):
        tensor = QTensor((2, 3, 3), 6, -2, np.arange(18) - 9)
        with tempfile.TemporaryDirectory() as tmp:
            Path(tmp, 'img.qtsr').write_bytes(write_tensor(tensor))
            source = TensorSource('file', path='img.qtsr')
            loaded = load_tensor(source, (2, 3, 3), 6, 0, Path(tmp))
            self.assertTrue(np.array_equal(loaded.data, tensor.data))
            with self.assertRaises(ShapeError):
                load_tensor(source, (2, 9), 6, 0, Path(tmp))


class OverrideTests(SimpleTestCase):

    def test_parse_bits(self):
        self.assertEqual(parse_bits_override('l2:7,7;l3:8,9'), {'l2': (7, 7), 'l3': (8, 9)})
        with self.assertRaises(ParseError):
            parse_bits_override('l2=7')

    def test_parse_voltage(self):
        self.assertEqual(parse_voltage_override('l2:0.9; l3:1.0'), {'l2': 0.9, 'l3': 1.0})
        with self.assertRaises(ParseError):
            parse_voltage_override('l2:high')

    def test_apply(self):
        config = apply_overrides(load_config('alexnet'), frequency=100e6, guarding=False,
                                 bits={'l2': (16, 16)}, voltages={'l2': 1.1}, seed=9, mode='sampled')
        l2 = config.layer_named('l2').spec
        self.assertEqual((l2.weight_bits, l2.image_bits, l2.voltage), (16, 16, 1.1))
        self.assertEqual(config.frequency, 100e6)
        self.assertTrue(all(not c.spec.guarding and c.spec.frequency == 100e6 for c in config.conv_layers))
        self.assertEqual((config.options.seed, config.options.mode), (9, 'sampled'))

    def test_apply_rejects_unknown_layer(self):
        with self.assertRaises(ParseError):
            apply_overrides(load_config('lenet5'), bits={'l7': (4, 4)})

    def test_apply_rejects_invalid_width(self):
        with self.assertRaises(ParseError):
            apply_overrides(load_config('lenet5'), bits={'l1': (20, 4)})
