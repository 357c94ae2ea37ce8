"""
Canonical Huffman coding of DMA word streams.

Wire format (HUF1):
    [4B]  magic "HUF1"
    [1B]  symbol bit-width
    [4B]  symbol count (uint32 LE)
    [2B]  table entries (uint16 LE)
    [3B each] (symbol uint16 LE, length uint8), sorted by (length, symbol)
    [N B] payload, MSB-first, zero padded to a byte boundary
"""
import heapq
import itertools
import logging
import math
import struct
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from simulator.exceptions import CorruptStream, RangeError
from simulator.services.quantcore import QTensor, word_range

logger = logging.getLogger(__name__)

MAGIC = b'HUF1'
_HEADER = struct.Struct('<4sBIH')
_ENTRY = struct.Struct('<HB')
# Longest code decoded through a flat lookup table.
_TABLE_BITS = 20
# Longest code a stream may carry; decode windows are int64.
MAX_CODE_LENGTH = 32


@dataclass(frozen=True)
class HuffStream:
    bits: int
    count: int
    lengths: Dict[int, int]
    payload: bytes
    payload_bits: int = 0

    @property
    def header_bytes(self) -> int:
        return _HEADER.size + _ENTRY.size * len(self.lengths)

    @property
    def size_bytes(self) -> int:
        return self.header_bytes + len(self.payload)

    @property
    def raw_bytes(self) -> int:
        return math.ceil(self.count * self.bits / 8)

    @property
    def ratio(self) -> float:
        return self.raw_bytes / self.size_bytes

    @property
    def payload_ratio(self) -> float:
        if not self.payload_bits:
            return 0.0
        return self.count * self.bits / self.payload_bits

    @property
    def bits_per_symbol(self) -> float:
        return self.payload_bits / self.count if self.count else 0.0

    def to_bytes(self) -> bytes:
        table = sorted(self.lengths.items(), key=lambda item: (item[1], item[0]))
        header = _HEADER.pack(MAGIC, self.bits, self.count, len(table))
        return header + b''.join(_ENTRY.pack(s, n) for s, n in table) + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> 'HuffStream':
        try:
            magic, bits, count, entries = _HEADER.unpack_from(blob, 0)
        except struct.error as e:
            raise CorruptStream(f'Truncated HUF1 header: {e}') from e
        if magic != MAGIC:
            raise CorruptStream('Missing HUF1 magic')
        offset = _HEADER.size
        if len(blob) < offset + entries * _ENTRY.size:
            raise CorruptStream('Truncated HUF1 code table')
        lengths = {}
        for _ in range(entries):
            symbol, length = _ENTRY.unpack_from(blob, offset)
            lengths[symbol] = length
            offset += _ENTRY.size
        payload = bytes(blob[offset:])
        return cls(bits, count, lengths, payload, 8 * len(payload))


def _code_lengths(freq: np.ndarray) -> Dict[int, int]:
    symbols = [int(s) for s in np.nonzero(freq)[0]]
    if not symbols:
        return {}
    if len(symbols) == 1:
        return {symbols[0]: 1}
    lengths = dict.fromkeys(symbols, 0)
    tiebreak = itertools.count()
    heap = [(int(freq[s]), next(tiebreak), [s]) for s in symbols]
    heapq.heapify(heap)
    while len(heap) > 1:
        fa, _, a = heapq.heappop(heap)
        fb, _, b = heapq.heappop(heap)
        for s in a + b:
            lengths[s] += 1
        heapq.heappush(heap, (fa + fb, next(tiebreak), a + b))
    return lengths


def canonical_codes(lengths: Dict[int, int]) -> Dict[int, Tuple[int, int]]:
    codes = {}
    code = 0
    previous = 0
    for symbol, length in sorted(lengths.items(), key=lambda item: (item[1], item[0])):
        code <<= length - previous
        previous = length
        codes[symbol] = (code, length)
        code += 1
    return codes


def _symbols(words: np.ndarray, bits: int) -> np.ndarray:
    return np.asarray(words, dtype=np.int64) & ((1 << bits) - 1)


def encode(words, bits: int) -> HuffStream:
    low, high = word_range(bits)
    words = np.asarray(words, dtype=np.int64).reshape(-1)
    if words.size and (words.min() < low or words.max() > high):
        raise RangeError(f'Words exceed the {bits}-bit range')
    symbols = _symbols(words, bits)
    lengths = _code_lengths(np.bincount(symbols, minlength=1 << bits))
    if not lengths:
        return HuffStream(bits, 0, {}, b'', 0)
    if max(lengths.values()) > MAX_CODE_LENGTH:
        raise RangeError(f'Symbol counts need codes longer than {MAX_CODE_LENGTH} bits')

    codes = canonical_codes(lengths)
    code_of = np.zeros(1 << bits, dtype=np.int64)
    length_of = np.zeros(1 << bits, dtype=np.int64)
    for symbol, (code, length) in codes.items():
        code_of[symbol] = code
        length_of[symbol] = length

    word_codes = code_of[symbols]
    word_lengths = length_of[symbols]
    total = int(word_lengths.sum())
    starts = np.cumsum(word_lengths) - word_lengths
    repeated_codes = np.repeat(word_codes, word_lengths)
    repeated_lengths = np.repeat(word_lengths, word_lengths)
    position = np.arange(total) - np.repeat(starts, word_lengths)
    bitstream = (repeated_codes >> (repeated_lengths - 1 - position)) & 1
    payload = np.packbits(bitstream.astype(np.uint8)).tobytes()
    stream = HuffStream(bits, int(words.size), lengths, payload, total)
    logger.debug('Encoded %d %d-bit words into %d bytes (ratio %.2f)',
                 stream.count, bits, stream.size_bytes, stream.ratio)
    return stream


def encode_tensor(t: QTensor) -> HuffStream:
    return encode(t.data, t.bits)


def _lookup_table(codes: Dict[int, Tuple[int, int]], width: int):
    table_symbols = np.zeros(1 << width, dtype=np.int64)
    table_lengths = np.zeros(1 << width, dtype=np.int64)
    for symbol, (code, length) in codes.items():
        span = width - length
        table_symbols[code << span:(code + 1) << span] = symbol
        table_lengths[code << span:(code + 1) << span] = length
    return table_symbols, table_lengths


def _validate_table(s: HuffStream) -> int:
    if not 1 <= s.bits <= 16:
        raise CorruptStream(f'Invalid symbol width {s.bits}')
    if s.count and not s.lengths:
        raise CorruptStream('Stream has symbols but no code table')
    if not s.lengths:
        return 0
    longest = max(s.lengths.values())
    if longest > MAX_CODE_LENGTH:
        raise CorruptStream(f'Code length {longest} exceeds {MAX_CODE_LENGTH} bits')
    if min(s.lengths.values()) < 1 or any(sym >= 1 << s.bits for sym in s.lengths):
        raise CorruptStream('Invalid code table entry')
    if sum(1 << (longest - n) for n in s.lengths.values()) > 1 << longest:
        raise CorruptStream('Code lengths violate the Kraft inequality')
    return longest


def decode(s: HuffStream) -> np.ndarray:
    longest = _validate_table(s)
    if s.count == 0:
        return np.zeros(0, dtype=np.int64)
    codes = canonical_codes(s.lengths)
    stream_bits = np.unpackbits(np.frombuffer(s.payload, dtype=np.uint8)).astype(np.int64)
    total = stream_bits.size
    padded = np.concatenate([stream_bits, np.zeros(longest, dtype=np.int64)])
    windows = np.zeros(total + 1, dtype=np.int64)
    for k in range(longest):
        windows += padded[k:k + total + 1] << (longest - 1 - k)

    out = np.empty(s.count, dtype=np.int64)
    position = 0
    if longest <= _TABLE_BITS:
        table_symbols, table_lengths = (a.tolist() for a in _lookup_table(codes, longest))
        windows = windows.tolist()
        for i in range(s.count):
            if position >= total:
                raise CorruptStream(f'Payload truncated after {i} of {s.count} symbols')
            window = windows[position]
            length = table_lengths[window]
            if not length:
                raise CorruptStream(f'Invalid prefix at bit {position}')
            out[i] = table_symbols[window]
            position += length
    else:
        by_code = {(code, length): symbol for symbol, (code, length) in codes.items()}
        used = sorted(set(s.lengths.values()))
        for i in range(s.count):
            if position >= total:
                raise CorruptStream(f'Payload truncated after {i} of {s.count} symbols')
            window = int(windows[position])
            for length in used:
                symbol = by_code.get((window >> (longest - length), length))
                if symbol is not None:
                    break
            else:
                raise CorruptStream(f'Invalid prefix at bit {position}')
            out[i] = symbol
            position += length
    if position > total:
        raise CorruptStream('Payload truncated inside the last code')
    if s.bits > 1:
        out = np.where(out >= 1 << (s.bits - 1), out - (1 << s.bits), out)
    return out


@dataclass(frozen=True)
class CompressionReport:
    ratios: List[float]
    raw_bytes: int
    compressed_bytes: int

    @property
    def overall(self) -> float:
        if not self.compressed_bytes:
            return 0.0
        return self.raw_bytes / self.compressed_bytes


def compression_report(raw_bytes: Sequence[int], streams: Sequence[HuffStream]) -> CompressionReport:
    sizes = [s.size_bytes for s in streams]
    ratios = [raw / size if size else 0.0 for raw, size in zip(raw_bytes, sizes)]
    return CompressionReport(ratios, int(sum(raw_bytes)), int(sum(sizes)))
