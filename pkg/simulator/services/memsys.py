"""
On-chip data memory: 64 single-port 2kB banks in 4 blocks of 16.

Per cycle the processor may touch two blocks (image and weights) while the
DMA writes a third; a bank serves one access per cycle. Conflicting
requests are serialized oldest-first and every extra sub-cycle is a stall.
"""
import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from simulator.exceptions import CapacityError
from simulator.services.stats import ARRAY_LANES

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MemoryConfig:
    banks_per_block: int = 16
    blocks: int = 4
    bank_bytes: int = 2048
    word_bytes: int = 2

    @property
    def lines_per_block(self) -> int:
        return self.bank_bytes // self.word_bytes

    @property
    def words_per_block(self) -> int:
        return self.banks_per_block * self.lines_per_block

    @property
    def capacity_bytes(self) -> int:
        return self.blocks * self.banks_per_block * self.bank_bytes


class Requester(enum.Enum):
    PROCESSOR_A = 'processor_A'
    PROCESSOR_B = 'processor_B'
    DMA = 'dma'


@dataclass(frozen=True)
class AccessRequest:
    requester: Requester
    block: int
    bank: int
    write: bool = False


@dataclass(frozen=True)
class Grant:
    request: AccessRequest
    sub_cycle: int


@dataclass(frozen=True)
class Region:
    """
    A tensor's placement inside one block.

    'row' regions interleave words over banks every `stride` words so a
    strided 16-word fetch hits 16 banks; 'filter' regions place filter f in
    bank f mod 16. Tensors longer than the window stream through it.
    """
    block: int
    base_line: int
    window_lines: int
    kind: str = 'row'
    stride: int = 1
    words_per_filter: int = 1
    filters_per_group: int = 1


@dataclass
class MemoryLayout:
    config: MemoryConfig = field(default_factory=MemoryConfig)
    regions: Dict[str, Region] = field(default_factory=dict)

    def used_lines(self, block: int) -> int:
        return sum(r.window_lines for r in self.regions.values() if r.block == block)

    def allocate(self, tensor_id: str, block: int, words: int, kind: str = 'row',
                 stride: int = 1, words_per_filter: int = 1, filters_per_group: int = 1,
                 streaming: bool = False) -> Region:
        if not 0 <= block < self.config.blocks:
            raise CapacityError(f'Block {block} does not exist')
        free = self.config.lines_per_block - self.used_lines(block)
        if kind == 'filter':
            spans = math.ceil(filters_per_group / ARRAY_LANES)
            groups = math.ceil(words / (words_per_filter * filters_per_group))
            needed = groups * spans * words_per_filter
        else:
            needed = math.ceil(words / self.config.banks_per_block) + stride
        if streaming:
            needed = min(needed, free)
        if needed <= 0 or needed > free:
            raise CapacityError(
                f"Tensor '{tensor_id}' needs {needed} lines in block {block}, "
                f'{free} of {self.config.lines_per_block} free'
            )
        region = Region(block, self.config.lines_per_block - free, needed, kind, stride,
                        words_per_filter, filters_per_group)
        self.regions[tensor_id] = region
        return region


def map_address(tensor_id: str, word_index, layout: MemoryLayout):
    """Returns (block, bank, offset); word_index may be an int or an int array."""
    region = layout.regions[tensor_id]
    index = np.asarray(word_index, dtype=np.int64)
    banks = layout.config.banks_per_block
    if region.kind == 'filter':
        filt, tap = np.divmod(index, region.words_per_filter)
        group, local = np.divmod(filt, region.filters_per_group)
        span, bank = np.divmod(local, banks)
        spans = math.ceil(region.filters_per_group / banks)
        line = (group * spans + span) * region.words_per_filter + tap
    else:
        chunk, rest = np.divmod(index, banks * region.stride)
        bank, phase = np.divmod(rest, region.stride)
        line = chunk * region.stride + phase
    offset = region.base_line + line % region.window_lines
    if index.ndim == 0:
        return region.block, int(bank), int(offset)
    return region.block, bank, offset


def arbitrate(cycle_requests: Iterable[AccessRequest]) -> Tuple[List[Grant], int]:
    pending = list(cycle_requests)
    grants = []
    sub_cycle = 0
    while pending:
        busy = set()
        processor_blocks = set()
        dma_blocks = set()
        deferred = []
        for request in pending:
            if (request.block, request.bank) in busy:
                deferred.append(request)
                continue
            if request.requester is Requester.DMA:
                if request.block in processor_blocks or (dma_blocks and request.block not in dma_blocks):
                    deferred.append(request)
                    continue
                dma_blocks.add(request.block)
            else:
                if request.block in dma_blocks or (
                        request.block not in processor_blocks and len(processor_blocks) == 2):
                    deferred.append(request)
                    continue
                processor_blocks.add(request.block)
            busy.add((request.block, request.bank))
            grants.append(Grant(request, sub_cycle))
        pending = deferred
        sub_cycle += 1
    return grants, max(sub_cycle - 1, 0)


@dataclass
class MemStats:
    sram_reads: int = 0
    sram_writes: int = 0
    reads_suppressed: int = 0
    guard_reads: int = 0
    guard_writes: int = 0
    stall_cycles: int = 0
    requests: int = 0
    grants: int = 0


def block_roles(layer_index: int, blocks: int = 4) -> Dict[str, int]:
    # Round-robin rotation per layer: image, weights, DMA, spare.
    return {
        role: (layer_index + offset) % blocks
        for offset, role in enumerate(('image', 'weights', 'dma', 'spare'))
    }


class MemorySystem:
    """Cycle-level memory traffic of one layer run."""

    def __init__(self, spec, layer_index: int = 0, config: Optional[MemoryConfig] = None,
                 dma_words: int = 0, total_cycles: int = 0):
        self.config = config or MemoryConfig()
        self.roles = block_roles(layer_index, self.config.blocks)
        self.layout = MemoryLayout(self.config)
        image_words = spec.in_channels * spec.in_height * spec.in_width
        weight_words = spec.num_filters * spec.words_per_filter
        self.layout.allocate('image', self.roles['image'], image_words,
                             stride=spec.stride_h, streaming=True)
        self.layout.allocate('weights', self.roles['weights'], weight_words, kind='filter',
                             words_per_filter=spec.words_per_filter,
                             filters_per_group=spec.filters_per_group, streaming=True)
        self.layout.allocate('dma', self.roles['dma'], self.config.words_per_block,
                             streaming=True)
        self.dma_rate = dma_words / total_cycles if total_cycles else 0.0
        self.cycle_index = 0
        self.dma_issued = 0
        self.stats = MemStats()

    def _dma_due(self) -> bool:
        due = math.floor((self.cycle_index + 1) * self.dma_rate) > math.floor(self.cycle_index * self.dma_rate)
        self.cycle_index += 1
        return due

    def issue(self, pixel_addresses: np.ndarray, weight_addresses: np.ndarray,
              suppressed: int, guard_bits: int) -> int:
        """Accounts one cycle's reads (already filtered by guarding); returns stall cycles."""
        dma = self._dma_due()
        image_block, pixel_banks, _ = map_address('image', pixel_addresses, self.layout)
        weight_block, weight_banks, _ = map_address('weights', weight_addresses, self.layout)
        reads = len(pixel_addresses) + len(weight_addresses)
        self.stats.sram_reads += reads
        self.stats.reads_suppressed += suppressed
        self.stats.guard_reads += guard_bits
        self.stats.requests += reads + int(dma)
        if dma:
            self.stats.sram_writes += 1
            self.dma_issued += 1

        conflict = (len(np.unique(pixel_banks)) != len(pixel_banks)
                    or len(np.unique(weight_banks)) != len(weight_banks))
        if not conflict:
            self.stats.grants += reads + int(dma)
            return 0

        requests = [AccessRequest(Requester.PROCESSOR_A, image_block, int(b)) for b in pixel_banks]
        requests += [AccessRequest(Requester.PROCESSOR_B, weight_block, int(b)) for b in weight_banks]
        if dma:
            requests.append(AccessRequest(Requester.DMA, self.roles['dma'],
                                          self.dma_issued % self.config.banks_per_block, True))
        grants, stalls = arbitrate(requests)
        self.stats.grants += len(grants)
        self.stats.stall_cycles += stalls
        return stalls

    def write_outputs(self, words: int, guarding: bool) -> None:
        # Flags of a produced output are written alongside it.
        self.stats.sram_writes += words
        if guarding:
            self.stats.guard_writes += words


def fetched_addresses(event, guarding: bool, image_flags: np.ndarray,
                      weight_flags: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int, int]:
    """Splits an event's scheduled fetches into performed reads and suppressed count."""
    pixels = event.pixel_fetches
    weights = event.weight_fetches
    if not guarding:
        return pixels, weights, 0, 0
    keep_pixels = image_flags[pixels]
    keep_weights = weight_flags[weights]
    suppressed = int((~keep_pixels).sum() + (~keep_weights).sum())
    return pixels[keep_pixels], weights[keep_weights], suppressed, 2 * ARRAY_LANES


def account_accesses(schedule, guarding: bool, flags, layer_index: int = 0,
                     dma_words: int = 0, groups=None) -> MemStats:
    """
    Replays a schedule against the memory system.

    `flags` is an (image_flags, weight_flags) pair of boolean arrays.
    """
    image_flags, weight_flags = flags
    cycles = schedule.cycles
    memory = MemorySystem(schedule.spec, layer_index, dma_words=dma_words, total_cycles=cycles)
    for event in schedule.events(groups):
        pixels, weights, suppressed, bits = fetched_addresses(event, guarding, image_flags, weight_flags)
        memory.issue(pixels, weights, suppressed, bits)
        if event.drain:
            memory.write_outputs(event.tile.col_count * event.tile.filter_count, guarding)
    logger.debug('Memory replay: %d reads, %d suppressed, %d stalls',
                 memory.stats.sram_reads, memory.stats.reads_suppressed, memory.stats.stall_cycles)
    return memory.stats
