"""
Brute-force references for verification only.

Nothing here touches the schedule or the array model; everything is
recomputed from the layer geometry with plain loops.
"""
import math
from collections import Counter
from typing import TYPE_CHECKING

import numpy as np

from simulator.exceptions import AccumulatorOverflow
from simulator.services.quantcore import ACCUMULATOR_LIMIT, QTensor, requantize_array

if TYPE_CHECKING:
    from simulator.services.mapper import LayerSpec

LANES = 16


def reference_accumulations(spec: 'LayerSpec', weights: QTensor, image: QTensor) -> np.ndarray:
    """Exact 48-bit sums per output word, before requantization."""
    channels, height, width = image.dims
    filters = spec.num_filters
    per_group_c = channels // spec.groups
    per_group_f = filters // spec.groups
    out_h = (height + 2 * spec.padding - spec.kernel_h) // spec.stride_v + 1
    out_w = (width + 2 * spec.padding - spec.kernel_w) // spec.stride_h + 1
    img = image.data.tolist()
    ker = weights.data.tolist()

    sums = []
    for f in range(filters):
        group = f // per_group_f
        for oy in range(out_h):
            for ox in range(out_w):
                acc = 0
                for c in range(per_group_c):
                    plane = (group * per_group_c + c) * height * width
                    for ky in range(spec.kernel_h):
                        y = oy * spec.stride_v + ky - spec.padding
                        if y < 0 or y >= height:
                            continue
                        for kx in range(spec.kernel_w):
                            x = ox * spec.stride_h + kx - spec.padding
                            if x < 0 or x >= width:
                                continue
                            w = ker[((f * per_group_c + c) * spec.kernel_h + ky) * spec.kernel_w + kx]
                            acc += w * img[plane + y * width + x]
                            if abs(acc) >= ACCUMULATOR_LIMIT:
                                raise AccumulatorOverflow(f'Reference accumulation {acc} overflows')
                sums.append(acc)
    return np.array(sums, dtype=np.int64).reshape(filters, out_h, out_w)


def reference_conv(spec: 'LayerSpec', weights: QTensor, image: QTensor) -> QTensor:
    return reference_output(spec, reference_accumulations(spec, weights, image), weights, image)


def reference_output(spec: 'LayerSpec', sums: np.ndarray, weights: QTensor, image: QTensor) -> QTensor:
    exponent_sum = weights.exponent + image.exponent
    out_bits = spec.output_bits or spec.image_bits
    out_exponent = exponent_sum if spec.output_exponent is None else spec.output_exponent
    raw = requantize_array(sums, out_bits, out_exponent, exponent_sum)
    return QTensor(sums.shape, out_bits, out_exponent, raw)


def naive_fetch_count(spec: 'LayerSpec') -> int:
    """Operand words a 1D-SIMD machine without reuse needs: two per issued MAC slot."""
    out_h = (spec.in_height + 2 * spec.padding - spec.kernel_h) // spec.stride_v + 1
    out_w = (spec.in_width + 2 * spec.padding - spec.kernel_w) // spec.stride_h + 1
    filter_spans = math.ceil(spec.num_filters // spec.groups / LANES)
    column_spans = math.ceil(out_w / LANES)
    tiles = spec.groups * filter_spans * out_h * column_spans * (spec.in_channels // spec.groups)
    return 2 * LANES * LANES * tiles * spec.kernel_h * spec.kernel_w


def empirical_entropy(words, bits: int) -> float:
    mask = (1 << bits) - 1
    counts = Counter(int(w) & mask for w in words)
    total = sum(counts.values())
    if not total:
        return 0.0
    return -sum(n / total * math.log2(n / total) for n in counts.values())
