"""
Fixed-point words, saturating quantization, 48-bit accumulation and the
ReLU / max-pool vector operations of the fixed power domain.

Words of 2-16 bits are signed two's complement; 1-bit words are unsigned
{0, 1}. Rounding is round-half-away-from-zero everywhere.
"""
import math
import struct
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np

from simulator.exceptions import (
    AccumulatorOverflow,
    ExponentError,
    RangeError,
    ShapeError,
    CorruptStream,
)

ACCUMULATOR_BITS = 48
ACCUMULATOR_LIMIT = 1 << (ACCUMULATOR_BITS - 1)

MIN_BITS = 1
MAX_BITS = 16

TENSOR_MAGIC = b'QTSR'
TENSOR_VERSION = 1


def word_range(bits: int) -> Tuple[int, int]:
    if not MIN_BITS <= bits <= MAX_BITS:
        raise RangeError(f'Word width must be within 1-16 bits, got {bits}')
    if bits == 1:
        return 0, 1
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def round_half_away(x: float) -> int:
    magnitude = math.floor(abs(x) + 0.5)
    return int(-magnitude if x < 0 else magnitude)


@dataclass(frozen=True)
class QValue:
    raw: int
    bits: int
    exponent: int = 0

    def __post_init__(self):
        low, high = word_range(self.bits)
        if not low <= self.raw <= high:
            raise RangeError(f'{self.raw} does not fit a {self.bits}-bit word')


@dataclass(frozen=True)
class Accumulator:
    value: int = 0


@dataclass
class QTensor:
    dims: Tuple[int, ...]
    bits: int
    exponent: int
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        self.data = np.asarray(self.data, dtype=np.int64).reshape(-1)
        if self.data.size != math.prod(self.dims):
            raise ShapeError(
                f'Tensor of dims {self.dims} needs {math.prod(self.dims)} words, '
                f'got {self.data.size}'
            )
        low, high = word_range(self.bits)
        if self.data.size and (self.data.min() < low or self.data.max() > high):
            raise RangeError(f'Tensor words exceed the {self.bits}-bit range')

    @property
    def size(self) -> int:
        return int(self.data.size)

    def array(self) -> np.ndarray:
        return self.data.reshape(self.dims)

    def value(self, index: int) -> QValue:
        return QValue(int(self.data[index]), self.bits, self.exponent)

    def with_data(self, data: np.ndarray, dims: Sequence[int] = None) -> 'QTensor':
        return QTensor(tuple(dims or self.dims), self.bits, self.exponent, data)


def quantize(x: float, bits: int, exponent: int) -> QValue:
    low, high = word_range(bits)
    raw = round_half_away(x / math.ldexp(1.0, exponent))
    return QValue(min(max(raw, low), high), bits, exponent)


def dequantize(q: QValue) -> float:
    return math.ldexp(float(q.raw), q.exponent)


def quantize_array(values: np.ndarray, bits: int, exponent: int) -> np.ndarray:
    low, high = word_range(bits)
    scaled = np.asarray(values, dtype=np.float64) / math.ldexp(1.0, exponent)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, low, high).astype(np.int64)


def mac(acc: Accumulator, w: QValue, p: QValue) -> Accumulator:
    result = acc.value + w.raw * p.raw
    if abs(result) >= ACCUMULATOR_LIMIT:
        raise AccumulatorOverflow(f'Accumulation {result} leaves the 48-bit range')
    return Accumulator(result)


def mac_outer(acc_grid: np.ndarray, pixels: np.ndarray, weights: np.ndarray,
              enable: np.ndarray) -> np.ndarray:
    """Vector form of mac(): acc_grid[i, j] += pixels[i] * weights[j] where enabled."""
    acc_grid += np.where(enable, np.outer(pixels, weights), 0)
    if np.any(np.abs(acc_grid) >= ACCUMULATOR_LIMIT):
        raise AccumulatorOverflow('Accumulator grid left the 48-bit range')
    return acc_grid


def _shift_round(values: np.ndarray, shift: int) -> np.ndarray:
    if shift == 0:
        return values.copy()
    magnitude = (np.abs(values) + (1 << (shift - 1))) >> shift
    return np.where(values < 0, -magnitude, magnitude)


def requantize(acc: Accumulator, out_bits: int, out_exponent: int,
               in_exponent_sum: int) -> QValue:
    raw = requantize_array(np.array([acc.value], dtype=np.int64), out_bits,
                           out_exponent, in_exponent_sum)
    return QValue(int(raw[0]), out_bits, out_exponent)


def requantize_array(values: np.ndarray, out_bits: int, out_exponent: int,
                     in_exponent_sum: int) -> np.ndarray:
    low, high = word_range(out_bits)
    shift = out_exponent - in_exponent_sum
    if shift < 0:
        raise ExponentError(
            f'Output exponent {out_exponent} is below the accumulation exponent '
            f'{in_exponent_sum}; left shifts are not supported'
        )
    shifted = _shift_round(np.asarray(values, dtype=np.int64), shift)
    return np.clip(shifted, low, high)


def relu_vec(t: QTensor) -> QTensor:
    return t.with_data(np.maximum(t.data, 0))


def maxpool(t: QTensor, window: Tuple[int, int], stride: Tuple[int, int]) -> QTensor:
    if len(t.dims) != 3:
        raise ShapeError(f'maxpool expects (channels, height, width), got {t.dims}')
    channels, height, width = t.dims
    win_h, win_w = window
    stride_h, stride_w = stride
    if win_h > height or win_w > width:
        raise ShapeError(f'Pool window {window} exceeds input extent {(height, width)}')
    if min(win_h, win_w, stride_h, stride_w) < 1:
        raise ShapeError('Pool window and stride must be positive')
    out_h = (height - win_h) // stride_h + 1
    out_w = (width - win_w) // stride_w + 1
    grid = t.array()
    pooled = np.full((channels, out_h, out_w), np.iinfo(np.int64).min, dtype=np.int64)
    for dy in range(win_h):
        for dx in range(win_w):
            view = grid[:, dy:dy + stride_h * (out_h - 1) + 1:stride_h,
                        dx:dx + stride_w * (out_w - 1) + 1:stride_w]
            np.maximum(pooled, view, out=pooled)
    return QTensor((channels, out_h, out_w), t.bits, t.exponent, pooled)


def zero_fraction(t: QTensor) -> float:
    if t.size == 0:
        return 0.0
    return float(np.count_nonzero(t.data == 0)) / t.size


def write_tensor(t: QTensor) -> bytes:
    header = TENSOR_MAGIC + struct.pack('<HBbB', TENSOR_VERSION, t.bits, t.exponent, len(t.dims))
    header += struct.pack(f'<{len(t.dims)}I', *t.dims)
    return header + t.data.astype('<i2').tobytes()


def read_tensor(blob: bytes) -> QTensor:
    if blob[:4] != TENSOR_MAGIC:
        raise CorruptStream('Missing QTSR magic')
    try:
        version, bits, exponent, ndims = struct.unpack_from('<HBbB', blob, 4)
        dims = struct.unpack_from(f'<{ndims}I', blob, 9)
    except struct.error as e:
        raise CorruptStream(f'Truncated QTSR header: {e}') from e
    if version != TENSOR_VERSION:
        raise CorruptStream(f'Unsupported QTSR version {version}')
    offset = 9 + 4 * ndims
    count = math.prod(dims)
    payload = blob[offset:offset + 2 * count]
    if len(payload) != 2 * count:
        raise CorruptStream('Truncated QTSR payload')
    data = np.frombuffer(payload, dtype='<i2').astype(np.int64)
    return QTensor(dims, bits, exponent, data)
