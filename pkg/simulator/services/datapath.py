"""
Cycle-by-cycle execution of a layer schedule on the 16x16 MAC array.
"""
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from simulator.exceptions import AccumulatorOverflow, RangeError, ShapeError
from simulator.services.mapper import CycleEvent, LayerSpec, Schedule, schedule_layer
from simulator.services.memsys import MemStats, MemorySystem, fetched_addresses
from simulator.services.quantcore import (
    ACCUMULATOR_LIMIT,
    QTensor,
    mac_outer,
    requantize_array,
)
from simulator.services.stats import ARRAY_LANES, CycleStats, SimStats

logger = logging.getLogger(__name__)

FLAG_BITS_PER_CYCLE = 2 * ARRAY_LANES


def _lanes(dtype) -> np.ndarray:
    return np.zeros(ARRAY_LANES, dtype=dtype)


@dataclass
class ArrayState:
    pixel_regs: np.ndarray = field(default_factory=lambda: _lanes(np.int64))
    weight_regs: np.ndarray = field(default_factory=lambda: _lanes(np.int64))
    pixel_flags: np.ndarray = field(default_factory=lambda: _lanes(bool))
    weight_flags: np.ndarray = field(default_factory=lambda: _lanes(bool))
    acc_grid: np.ndarray = field(
        default_factory=lambda: np.zeros((ARRAY_LANES, ARRAY_LANES), dtype=np.int64))

    def clear_accumulators(self) -> None:
        self.acc_grid[:] = 0


@dataclass(frozen=True)
class GuardFlags:
    bits: np.ndarray
    zero_fraction: float

    @property
    def nonzero(self) -> int:
        return int(self.bits.sum())


def compute_guard_flags(t: QTensor) -> GuardFlags:
    bits = t.data != 0
    fraction = 1.0 - bits.mean() if bits.size else 0.0
    return GuardFlags(bits, float(fraction))


@dataclass
class LayerOperands:
    """Flat operand words of one layer plus their guard flags."""
    image: np.ndarray
    weights: np.ndarray
    image_flags: GuardFlags
    weight_flags: GuardFlags

    @classmethod
    def from_tensors(cls, image: QTensor, weights: QTensor) -> 'LayerOperands':
        return cls(image.data, weights.data, compute_guard_flags(image), compute_guard_flags(weights))

    @staticmethod
    def _gather(words: np.ndarray, flags: np.ndarray, lanes: np.ndarray):
        # Address -1 marks padding or an idle lane: value 0, flag 0.
        valid = lanes >= 0
        safe = np.where(valid, lanes, 0)
        return np.where(valid, words[safe], 0), valid & flags[safe]

    def pixels(self, lanes: np.ndarray):
        return self._gather(self.image, self.image_flags.bits, lanes)

    def filter_words(self, lanes: np.ndarray):
        return self._gather(self.weights, self.weight_flags.bits, lanes)


def step(state: ArrayState, event: CycleEvent, guarding: bool,
         operands: LayerOperands) -> Tuple[ArrayState, CycleStats]:
    values, flags = operands.pixels(event.pixel_lanes)
    if event.shift:
        state.pixel_regs = np.roll(state.pixel_regs, 1)
        state.pixel_flags = np.roll(state.pixel_flags, 1)
        state.pixel_regs[0] = values[0]
        state.pixel_flags[0] = flags[0]
    else:
        state.pixel_regs = values
        state.pixel_flags = flags
    state.weight_regs, state.weight_flags = operands.filter_words(event.weight_lanes)

    active = event.mac_targets
    if guarding:
        enable = active & np.outer(state.pixel_flags, state.weight_flags)
    else:
        enable = active
    mac_outer(state.acc_grid, state.pixel_regs, state.weight_regs, enable)

    executed = int(enable.sum())
    cycle = CycleStats(
        macs_executed=executed,
        macs_guarded=int(active.sum()) - executed,
        pixel_fetches=len(event.pixel_fetches),
        weight_fetches=len(event.weight_fetches),
    )
    if guarding:
        cycle.pixel_fetches_guarded = int((~operands.image_flags.bits[event.pixel_fetches]).sum())
        cycle.weight_fetches_guarded = int((~operands.weight_flags.bits[event.weight_fetches]).sum())
        cycle.flag_bits = FLAG_BITS_PER_CYCLE
    return state, cycle


def _drain(state: ArrayState, event: CycleEvent, spec: LayerSpec, out: np.ndarray) -> int:
    tile = event.tile
    lanes = np.nonzero(event.lane_mask)[0]
    columns = tile.col_start + ARRAY_LANES - 1 - lanes
    local = np.arange(tile.filter_count)
    filters = tile.group * spec.filters_per_group + tile.filter_start + local
    out[filters[:, None], tile.row, columns[None, :]] = state.acc_grid[np.ix_(lanes, local)].T
    state.clear_accumulators()
    return len(lanes) * len(local)


def check_operands(spec: LayerSpec, weights: QTensor, image: QTensor) -> None:
    if tuple(image.dims) != spec.image_dims:
        raise ShapeError(f'Image dims {image.dims} do not match layer input {spec.image_dims}')
    if tuple(weights.dims) != spec.weight_dims:
        raise ShapeError(f'Weight dims {weights.dims} do not match layer filters {spec.weight_dims}')
    if image.bits > spec.image_bits or weights.bits > spec.weight_bits:
        raise RangeError(
            f'Operand widths {weights.bits}b/{image.bits}b exceed the layer setting '
            f'{spec.weight_bits}b/{spec.image_bits}b'
        )


def requantize_output(spec: LayerSpec, accumulators: np.ndarray, weights: QTensor,
                      image: QTensor) -> QTensor:
    exponent_sum = weights.exponent + image.exponent
    out_bits = spec.output_bits or spec.image_bits
    out_exponent = exponent_sum if spec.output_exponent is None else spec.output_exponent
    raw = requantize_array(accumulators, out_bits, out_exponent, exponent_sum)
    return QTensor(spec.out_dims, out_bits, out_exponent, raw)


def accumulate_dense(spec: LayerSpec, weights: QTensor, image: QTensor) -> np.ndarray:
    """
    Layer accumulations computed without the cycle model.

    Used for sampled runs of full-size layers, where only a subset of the
    schedule is replayed but the next layer still needs the whole output.
    """
    pad = spec.padding
    padded = np.pad(image.array(), ((0, 0), (pad, pad), (pad, pad)))
    windows = sliding_window_view(padded, (spec.kernel_h, spec.kernel_w), axis=(1, 2))
    windows = windows[:, ::spec.stride_v, ::spec.stride_h][:, :spec.out_height, :spec.out_width]
    kernels = weights.array()
    out = np.empty(spec.out_dims, dtype=np.int64)
    cg, fg = spec.channels_per_group, spec.filters_per_group
    for group in range(spec.groups):
        patches = windows[group * cg:(group + 1) * cg].transpose(1, 2, 0, 3, 4)
        patches = patches.reshape(spec.out_height * spec.out_width, -1)
        bank = kernels[group * fg:(group + 1) * fg].reshape(fg, -1)
        out[group * fg:(group + 1) * fg] = (patches @ bank.T).T.reshape(
            fg, spec.out_height, spec.out_width)
    if out.size and np.abs(out).max() >= ACCUMULATOR_LIMIT:
        raise AccumulatorOverflow(f'Layer {spec.name or spec.kind} accumulations leave the 48-bit range')
    return out


@dataclass
class LayerRun:
    schedule: Schedule
    predicted: SimStats
    accumulators: np.ndarray
    stats: SimStats
    memory: MemStats
    blocks_run: int
    complete: bool

    def output(self, weights: QTensor, image: QTensor) -> QTensor:
        return requantize_output(self.schedule.spec, self.accumulators, weights, image)


def run_layer(spec: LayerSpec, weights: QTensor, image: QTensor, guarding: Optional[bool] = None,
              groups: Optional[Iterable[int]] = None, layer_index: int = 0,
              dma_words: int = 0) -> LayerRun:
    """
    Replays the layer schedule (or the selected tile groups of it) on the array.

    The accumulations of every drained block land in `accumulators`; blocks
    that were not replayed stay zero.
    """
    guarding = spec.guarding if guarding is None else guarding
    check_operands(spec, weights, image)
    schedule, predicted = schedule_layer(spec)
    operands = LayerOperands.from_tensors(image, weights)
    memory = MemorySystem(spec, layer_index, dma_words=dma_words, total_cycles=schedule.cycles)
    state = ArrayState()
    accumulators = np.zeros(spec.out_dims, dtype=np.int64)
    stats = SimStats()
    taps = spec.kernel_h * spec.kernel_w
    blocks = 0

    for event in schedule.events(groups):
        state, cycle = step(state, event, guarding, operands)
        stats.add_cycle(cycle)
        stats.useful_macs += int(event.mac_targets.sum())
        pixels, words, suppressed, flag_bits = fetched_addresses(
            event, guarding, operands.image_flags.bits, operands.weight_flags.bits)
        stats.stall_cycles += memory.issue(pixels, words, suppressed, flag_bits)
        if event.drain:
            memory.write_outputs(_drain(state, event, spec, accumulators), guarding)
            blocks += 1

    stats.tiles = stats.cycles // taps
    stats.sram_reads = memory.stats.sram_reads
    stats.sram_writes = memory.stats.sram_writes
    stats.guard_reads = memory.stats.guard_reads
    stats.guard_writes = memory.stats.guard_writes
    complete = groups is None
    logger.debug('Ran %s: %d cycles, %d executed, %d guarded MACs%s',
                 spec.name or spec.kind, stats.cycles, stats.macs_executed, stats.macs_guarded,
                 '' if complete else f' ({blocks} sampled blocks)')
    return LayerRun(schedule, predicted, accumulators, stats, memory.stats, blocks, complete)
