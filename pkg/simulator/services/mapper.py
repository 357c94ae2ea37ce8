"""
Compiles convolution layers into the per-cycle schedule of the 16x16
2D-SIMD array.

A tile is one output row x 16 output columns x 16 filters x one input
channel. For every kernel row the array fetches 16 pixels and 16 weights in
the first cycle, then one pixel (pushed into the shift register) and 16
weights in each of the remaining K_w - 1 cycles. Tiles sharing an output
block run back to back over all channels, so the accumulators stay
resident and are drained once per block.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from simulator.exceptions import AccumulatorBudgetError, RangeError, ShapeError
from simulator.services.quantcore import ACCUMULATOR_LIMIT, MAX_BITS, MIN_BITS
from simulator.services.stats import ARRAY_LANES, SimStats

logger = logging.getLogger(__name__)

LAYER_KINDS = ('conv', 'maxpool', 'relu')
MAX_STRIDE_H = 4

_LANES = np.arange(ARRAY_LANES)
# Lane i of the shift register holds the pixel of output column 15 - i.
_LANE_COLUMN = ARRAY_LANES - 1 - _LANES


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int
    in_height: int
    in_width: int
    num_filters: int = 0
    kernel_h: int = 1
    kernel_w: int = 1
    stride_h: int = 1
    stride_v: int = 1
    weight_bits: int = 16
    image_bits: int = 16
    guarding: bool = False
    voltage: Optional[float] = None
    frequency: float = 204e6
    padding: int = 0
    groups: int = 1
    output_bits: Optional[int] = None
    output_exponent: Optional[int] = None
    name: str = ''

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ShapeError(f'Unknown layer kind {self.kind!r}')
        if not 1 <= self.stride_h <= MAX_STRIDE_H:
            raise RangeError(f'Horizontal stride must be within 1-4, got {self.stride_h}')
        if self.stride_v < 1:
            raise RangeError(f'Vertical stride must be positive, got {self.stride_v}')
        for label, bits in (('weight_bits', self.weight_bits), ('image_bits', self.image_bits)):
            if not MIN_BITS <= bits <= MAX_BITS:
                raise RangeError(f'{label} must be within 1-16, got {bits}')
        if self.output_bits is not None and not MIN_BITS <= self.output_bits <= MAX_BITS:
            raise RangeError(f'output_bits must be within 1-16, got {self.output_bits}')
        if min(self.in_channels, self.in_height, self.in_width) < 1:
            raise ShapeError('Input extents must be positive')
        if self.kind == 'conv':
            if self.num_filters < 1 or self.groups < 1:
                raise ShapeError('A convolution needs at least one filter and one group')
            if self.in_channels % self.groups or self.num_filters % self.groups:
                raise ShapeError(
                    f'{self.groups} groups do not divide {self.in_channels} channels '
                    f'and {self.num_filters} filters'
                )

    @property
    def channels_per_group(self) -> int:
        return self.in_channels // self.groups

    @property
    def filters_per_group(self) -> int:
        return self.num_filters // self.groups

    @property
    def out_height(self) -> int:
        return (self.in_height + 2 * self.padding - self.kernel_h) // self.stride_v + 1

    @property
    def out_width(self) -> int:
        return (self.in_width + 2 * self.padding - self.kernel_w) // self.stride_h + 1

    @property
    def bits_effective(self) -> int:
        return max(self.weight_bits, self.image_bits)

    @property
    def weight_dims(self) -> Tuple[int, int, int, int]:
        return (self.num_filters, self.channels_per_group, self.kernel_h, self.kernel_w)

    @property
    def image_dims(self) -> Tuple[int, int, int]:
        return (self.in_channels, self.in_height, self.in_width)

    @property
    def out_dims(self) -> Tuple[int, int, int]:
        if self.kind == 'relu':
            return self.image_dims
        if self.kind == 'maxpool':
            return (self.in_channels, self.out_height, self.out_width)
        return (self.num_filters, self.out_height, self.out_width)

    @property
    def words_per_filter(self) -> int:
        return self.channels_per_group * self.kernel_h * self.kernel_w

    @property
    def useful_macs(self) -> int:
        return (self.out_height * self.out_width * self.num_filters
                * self.channels_per_group * self.kernel_h * self.kernel_w)


@dataclass(frozen=True)
class Tile:
    row: int
    col_start: int
    col_count: int
    filter_start: int
    filter_count: int
    group: int
    channel: int

    @property
    def block(self) -> Tuple[int, int, int, int]:
        return (self.group, self.filter_start, self.row, self.col_start)


@dataclass
class TileMap:
    spec: LayerSpec
    tiles: List[Tile]

    def __len__(self):
        return len(self.tiles)

    def __iter__(self):
        return iter(self.tiles)


@dataclass
class CycleEvent:
    pixel_fetches: np.ndarray
    pixel_lanes: np.ndarray
    weight_fetches: np.ndarray
    weight_lanes: np.ndarray
    shift: bool
    lane_mask: np.ndarray
    filter_mask: np.ndarray
    drain: bool
    tile: Tile

    @property
    def flag_fetches(self) -> np.ndarray:
        return np.concatenate([self.pixel_lanes, self.weight_lanes])

    @property
    def mac_targets(self) -> np.ndarray:
        return np.outer(self.lane_mask, self.filter_mask)


def _spans(extent: int) -> List[Tuple[int, int]]:
    return [(start, min(ARRAY_LANES, extent - start)) for start in range(0, extent, ARRAY_LANES)]


def tile_layer(spec: LayerSpec) -> TileMap:
    if spec.kind != 'conv':
        raise ShapeError(f'Only convolution layers are tiled, got {spec.kind!r}')
    if spec.out_height < 1 or spec.out_width < 1:
        raise ShapeError(
            f'Layer {spec.name or spec.kind} has non-positive output dims '
            f'({spec.out_height}, {spec.out_width})'
        )
    tiles = []
    for group in range(spec.groups):
        for filter_start, filter_count in _spans(spec.filters_per_group):
            for row in range(spec.out_height):
                for col_start, col_count in _spans(spec.out_width):
                    for channel in range(spec.channels_per_group):
                        tiles.append(Tile(row, col_start, col_count, filter_start,
                                          filter_count, group, channel))
    return TileMap(spec, tiles)


def _tile_events(spec: LayerSpec, tile: Tile, drain: bool) -> Iterator[CycleEvent]:
    lane_mask = _LANE_COLUMN < tile.col_count
    filter_mask = _LANES < tile.filter_count
    columns = (tile.col_start + _LANE_COLUMN) * spec.stride_h - spec.padding
    channel = tile.group * spec.channels_per_group + tile.channel
    filters = tile.group * spec.filters_per_group + tile.filter_start + _LANES
    taps = spec.kernel_h * spec.kernel_w
    weight_base = np.where(filter_mask, filters * spec.words_per_filter + tile.channel * taps, -1)
    plane = channel * spec.in_height * spec.in_width
    no_fetch = np.empty(0, dtype=np.int64)

    for ky in range(spec.kernel_h):
        y = tile.row * spec.stride_v + ky - spec.padding
        row_valid = 0 <= y < spec.in_height
        for kx in range(spec.kernel_w):
            x = columns + kx
            valid = (x >= 0) & (x < spec.in_width) & row_valid
            pixel_lanes = np.where(valid, plane + y * spec.in_width + x, -1)
            if kx == 0:
                pixel_fetches = pixel_lanes[valid]
            else:
                pixel_fetches = pixel_lanes[:1] if valid[0] else no_fetch
            weight_offset = ky * spec.kernel_w + kx
            weight_lanes = np.where(filter_mask, weight_base + weight_offset, -1)
            yield CycleEvent(
                pixel_fetches=pixel_fetches,
                pixel_lanes=pixel_lanes,
                weight_fetches=weight_lanes[filter_mask],
                weight_lanes=weight_lanes,
                shift=kx > 0 and spec.stride_h == 1,
                lane_mask=lane_mask,
                filter_mask=filter_mask,
                drain=drain and ky == spec.kernel_h - 1 and kx == spec.kernel_w - 1,
                tile=tile,
            )


class Schedule:
    """
    Lazily generated cycle stream of a layer (or a single tile).

    Iterating yields CycleEvents in execution order; len() is the exact
    cycle count. events(groups) replays only the selected accumulator blocks.
    """

    def __init__(self, spec: LayerSpec, tiles: Sequence[Tile], drain_last: bool = True):
        self.spec = spec
        self.tiles = list(tiles)
        self._blocks = [list(block) for _, block in
                        itertools.groupby(self.tiles, key=lambda t: t.block)]
        self.drain_last = drain_last

    def __len__(self) -> int:
        return len(self.tiles) * self.spec.kernel_h * self.spec.kernel_w

    def __iter__(self) -> Iterator[CycleEvent]:
        return self.events()

    @property
    def cycles(self) -> int:
        return len(self)

    def groups(self) -> List[Tuple[int, int, int, int]]:
        return [block[0].block for block in self._blocks]

    def events(self, groups: Optional[Iterable[int]] = None) -> Iterator[CycleEvent]:
        indices = range(len(self._blocks)) if groups is None else sorted(groups)
        for index in indices:
            block = self._blocks[index]
            for position, tile in enumerate(block):
                drain = self.drain_last and position == len(block) - 1
                yield from _tile_events(self.spec, tile, drain)


def schedule_tile(spec: LayerSpec, tile: Tile) -> Schedule:
    return Schedule(spec, [tile])


def check_accumulator_budget(spec: LayerSpec) -> bool:
    bound = (spec.channels_per_group * spec.kernel_h * spec.kernel_w
             * (1 << (spec.weight_bits - 1)) * (1 << (spec.image_bits - 1)))
    if bound >= ACCUMULATOR_LIMIT:
        raise AccumulatorBudgetError(
            f'Worst-case accumulation {bound} reaches 2^47 for layer {spec.name or spec.kind}',
            bound=bound,
        )
    return True


def _pixel_fetches_per_channel(spec: LayerSpec) -> int:
    total = 0
    for col_start, _ in _spans(spec.out_width):
        columns = (col_start + _LANE_COLUMN) * spec.stride_h - spec.padding
        per_row = 0
        for kx in range(spec.kernel_w):
            x = columns + kx
            valid = (x >= 0) & (x < spec.in_width)
            per_row += int(valid.sum()) if kx == 0 else int(valid[0])
        for row in range(spec.out_height):
            for ky in range(spec.kernel_h):
                y = row * spec.stride_v + ky - spec.padding
                if 0 <= y < spec.in_height:
                    total += per_row
    return total


def predict_stats(spec: LayerSpec) -> SimStats:
    filter_spans = _spans(spec.filters_per_group)
    col_spans = len(_spans(spec.out_width))
    taps = spec.kernel_h * spec.kernel_w
    blocks = spec.groups * len(filter_spans) * spec.out_height * col_spans
    tiles = blocks * spec.channels_per_group
    weight_fetches = (spec.groups * sum(count for _, count in filter_spans) * taps
                      * spec.channels_per_group * spec.out_height * col_spans)
    pixel_fetches = (_pixel_fetches_per_channel(spec) * spec.in_channels * len(filter_spans))
    return SimStats(
        cycles=tiles * taps,
        tiles=tiles,
        useful_macs=spec.useful_macs,
        macs_executed=spec.useful_macs,
        pixel_fetches=pixel_fetches,
        weight_fetches=weight_fetches,
    )


def schedule_layer(spec: LayerSpec) -> Tuple[Schedule, SimStats]:
    check_accumulator_budget(spec)
    tile_map = tile_layer(spec)
    predicted = predict_stats(spec)
    logger.debug('Scheduled %s: %d tiles, %d cycles, efficiency %.3f',
                 spec.name or spec.kind, len(tile_map), predicted.cycles,
                 predicted.mac_efficiency)
    return Schedule(spec, tile_map.tiles), predicted


@dataclass(frozen=True)
class FetchReduction:
    combined: float
    pixel_only: float


def fetch_reduction_vs_1d(spec: LayerSpec) -> FetchReduction:
    predicted = predict_stats(spec)
    naive = 2 * predicted.useful_macs
    pixel_only = (predicted.useful_macs / predicted.pixel_fetches
                  if predicted.pixel_fetches else math.inf)
    return FetchReduction(
        combined=naive / predicted.word_fetches,
        pixel_only=pixel_only,
    )
