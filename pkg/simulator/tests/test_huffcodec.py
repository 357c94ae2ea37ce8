import math

import numpy as np
from django.test import SimpleTestCase

from simulator.exceptions import CorruptStream, RangeError
from simulator.services.config_service import synth_tensor
from simulator.services.huffcodec import (
    HuffStream,
    canonical_codes,
    compression_report,
    decode,
    encode,
    encode_tensor,
)
from simulator.services.oracle import empirical_entropy


class CanonicalCodeTests(SimpleTestCase):

    def test_codes_are_prefix_free_and_canonical(self):
        codes = canonical_codes({5: 1, 0: 2, 7: 3, 2: 3})
        self.assertEqual(codes, {5: (0b0, 1), 0: (0b10, 2), 2: (0b110, 3), 7: (0b111, 3)})

    def test_single_symbol_stream(self):
        stream = encode(np.zeros(100, dtype=int), 8)
        self.assertEqual(stream.lengths, {0: 1})
        self.assertEqual(stream.payload_bits, 100)
        self.assertTrue(np.array_equal(decode(stream), np.zeros(100)))

    def test_empty_stream(self):
        stream = encode(np.zeros(0, dtype=int), 4)
        self.assertEqual(stream.count, 0)
        self.assertEqual(decode(HuffStream.from_bytes(stream.to_bytes())).size, 0)


class RoundTripTests(SimpleTestCase):

    def test_lossless_across_widths(self):
        rng = np.random.default_rng(11)
        total = 0
        for bits in range(1, 17):
            for zero_fraction in (0.0, 0.5, 0.9):
                words = synth_tensor((21_000,), bits, zero_fraction, int(rng.integers(1 << 30))).data
                stream = HuffStream.from_bytes(encode(words, bits).to_bytes())
                self.assertTrue(np.array_equal(decode(stream), words), f'{bits} bits')
                total += words.size
        self.assertGreaterEqual(total, 10 ** 6)

    def test_skewed_distribution_uses_long_codes(self):
        # Fibonacci-like counts push the longest code past the lookup table.
        counts = [1, 1]
        while len(counts) < 24:
            counts.append(counts[-1] + counts[-2])
        words = np.repeat(np.arange(len(counts)), counts)
        np.random.default_rng(0).shuffle(words)
        stream = encode(words, 16)
        self.assertGreater(max(stream.lengths.values()), 20)
        self.assertTrue(np.array_equal(decode(stream), words))

    def test_rejects_out_of_range_words(self):
        with self.assertRaises(RangeError):
            encode(np.array([0, 8]), 4)


class CorruptionTests(SimpleTestCase):

    def setUp(self):
        self.words = synth_tensor((500,), 7, 0.6, 3).data
        self.blob = encode(self.words, 7).to_bytes()

    def test_bad_magic(self):
        with self.assertRaises(CorruptStream):
            HuffStream.from_bytes(b'HUF0' + self.blob[4:])

    def test_truncated_header_and_table(self):
        with self.assertRaises(CorruptStream):
            HuffStream.from_bytes(self.blob[:6])
        with self.assertRaises(CorruptStream):
            HuffStream.from_bytes(self.blob[:12])

    def test_truncated_payload(self):
        stream = HuffStream.from_bytes(self.blob)
        short = HuffStream(stream.bits, stream.count, stream.lengths, stream.payload[:len(stream.payload) // 2])
        with self.assertRaises(CorruptStream):
            decode(short)

    def test_kraft_violation(self):
        with self.assertRaises(CorruptStream):
            decode(HuffStream(4, 3, {0: 1, 1: 1, 2: 1}, b'\x00'))

    def test_overlong_code_length(self):
        with self.assertRaises(CorruptStream):
            decode(HuffStream(4, 2, {0: 1, 1: 40}, b'\x00'))

    def test_incomplete_code_reports_invalid_prefix(self):
        # Only "0" is a code: a payload of ones matches nothing.
        with self.assertRaises(CorruptStream):
            decode(HuffStream(4, 2, {0: 1, 3: 2}, b'\xff'))


class CompressionTests(SimpleTestCase):

    def test_sparse_activation_stream(self):
        # 7-bit image with 89% zeros, as AlexNet's second layer sees.
        tensor = synth_tensor((96, 27, 27), 7, 0.89, [0, 22])
        stream = encode_tensor(tensor)
        entropy = empirical_entropy(tensor.data, 7)
        self.assertLessEqual(stream.bits_per_symbol, entropy + 1)
        self.assertGreaterEqual(stream.payload_ratio, 3.5)
        self.assertGreater(stream.ratio, 3.0)

    def test_dense_stream_barely_compresses(self):
        tensor = synth_tensor((20_000,), 8, 0.0, 5)
        stream = encode_tensor(tensor)
        self.assertLess(stream.ratio, 1.05)

    def test_report(self):
        streams = [encode(np.zeros(1000, dtype=int), 8), encode(np.arange(-8, 8), 4)]
        raw = [s.raw_bytes for s in streams]
        report = compression_report(raw, streams)
        self.assertEqual(report.raw_bytes, 1008)
        self.assertEqual(report.compressed_bytes, sum(s.size_bytes for s in streams))
        self.assertAlmostEqual(report.ratios[0], streams[0].ratio)
        self.assertTrue(math.isclose(report.overall, 1008 / report.compressed_bytes))

    def test_single_stream_report_matches_ratio(self):
        stream = encode(synth_tensor((4000,), 6, 0.7, 8).data, 6)
        report = compression_report([stream.raw_bytes], [stream])
        self.assertAlmostEqual(report.overall, stream.ratio)

    def test_ratio_grows_with_sparsity(self):
        previous = 0.0
        for zero_fraction in (0.0, 0.2, 0.4, 0.6, 0.8, 0.95):
            ratio = encode_tensor(synth_tensor((50_000,), 8, zero_fraction, 17)).ratio
            self.assertGreaterEqual(ratio, previous, zero_fraction)
            previous = ratio

    def test_uniform_full_width_words_do_not_compress(self):
        words = np.random.default_rng(4).integers(-(1 << 15), 1 << 15, 300_000)
        stream = encode(words, 16)
        self.assertAlmostEqual(stream.payload_ratio, 1.0, delta=0.03)
