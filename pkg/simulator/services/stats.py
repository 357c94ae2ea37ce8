from dataclasses import dataclass, fields, replace, asdict
from typing import Dict

ARRAY_LANES = 16
ARRAY_MACS = ARRAY_LANES * ARRAY_LANES


@dataclass
class CycleStats:
    macs_executed: int = 0
    macs_guarded: int = 0
    pixel_fetches: int = 0
    weight_fetches: int = 0
    pixel_fetches_guarded: int = 0
    weight_fetches_guarded: int = 0
    flag_bits: int = 0


@dataclass
class SimStats:
    """
    Counters of one simulated (or predicted) layer run.

    Fetch counters are scheduled word fetches; the *_guarded counters are the
    subset suppressed by zero flags. Merging with + is associative and
    commutative.
    """
    cycles: int = 0
    stall_cycles: int = 0
    tiles: int = 0
    useful_macs: int = 0
    macs_executed: int = 0
    macs_guarded: int = 0
    pixel_fetches: int = 0
    weight_fetches: int = 0
    pixel_fetches_guarded: int = 0
    weight_fetches_guarded: int = 0
    flag_bits: int = 0
    sram_reads: int = 0
    sram_writes: int = 0
    guard_reads: int = 0
    guard_writes: int = 0
    dma_bytes_raw: int = 0
    dma_bytes_compressed: int = 0

    def __add__(self, other: 'SimStats') -> 'SimStats':
        return SimStats(**{
            f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)
        })

    def add_cycle(self, cycle: CycleStats) -> None:
        self.cycles += 1
        for f in fields(cycle):
            setattr(self, f.name, getattr(self, f.name) + getattr(cycle, f.name))

    @property
    def total_cycles(self) -> int:
        return self.cycles + self.stall_cycles

    @property
    def mac_slots(self) -> int:
        return ARRAY_MACS * self.total_cycles

    @property
    def active_macs(self) -> int:
        return self.macs_executed + self.macs_guarded

    @property
    def mac_efficiency(self) -> float:
        if not self.mac_slots:
            return 0.0
        return self.useful_macs / self.mac_slots

    @property
    def word_fetches(self) -> int:
        return self.pixel_fetches + self.weight_fetches

    @property
    def fetches_guarded(self) -> int:
        return self.pixel_fetches_guarded + self.weight_fetches_guarded

    @property
    def guarded_mac_fraction(self) -> float:
        if not self.active_macs:
            return 0.0
        return self.macs_guarded / self.active_macs

    def without_guarding(self) -> 'SimStats':
        """The same run with guarding disabled: identical cycles, nothing suppressed."""
        return replace(
            self,
            macs_executed=self.active_macs,
            macs_guarded=0,
            pixel_fetches_guarded=0,
            weight_fetches_guarded=0,
            flag_bits=0,
            sram_reads=self.sram_reads + self.fetches_guarded,
            guard_reads=0,
        )

    def to_dict(self) -> Dict[str, int]:
        return asdict(self)
