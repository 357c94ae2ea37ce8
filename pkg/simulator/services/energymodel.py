"""
Analytic power model of the accelerator.

Power splits into leakage, a fixed domain (control, memories, DMA) and the
precision/voltage scalable MAC array:

    P = p_leak + f_MHz * (vf^2 * (c_fixed + c_sram * r * (1 - g_s * supp))
                          + c_mac * (b/16)^slope * (V/1.1)^2 * u * (1 - g_m * gf))

r is the SRAM access rate relative to 32 words per cycle, supp the share of
those accesses suppressed by guard flags, u the MAC array occupancy and gf
the share of active MACs that were guarded. vf is the fixed-domain supply
relative to 1.1 V, which only drops below nominal frequency.

Calibration fits c_fixed, c_sram and c_mac. The guard shares g_s and g_m
stay pinned unless the caller frees them.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import nnls

from simulator.exceptions import FitError, RangeError
from simulator.services.stats import ARRAY_MACS, SimStats

logger = logging.getLogger(__name__)

P_LEAK_MW = 0.7
NOMINAL_VOLTAGE = 1.1
MIN_VOLTAGE = 0.55
NOMINAL_FREQUENCY = 204e6
MIN_FREQUENCY = 12e6
FULL_PRECISION = 16
REFERENCE_ACCESS_RATE = 32
FLAG_BITS_PER_WORD = 16
MAX_FIT_RMS = 0.25
# Fraction of guarded SRAM and MAC activity that stops drawing dynamic power.
GUARD_SRAM_SHARE = 1.0
GUARD_MAC_SHARE = 0.6
# Clock tree and control draw at least this much per MHz.
MIN_FIXED = 0.02

# Lowest timing-safe supply at nominal frequency per effective bit-width.
VOLTAGE_ANCHORS = ((1, 0.8), (4, 0.8), (8, 0.9), (16, 1.1))


def voltage_for_precision(bits: int, frequency: float) -> float:
    if not 1 <= bits <= FULL_PRECISION:
        raise RangeError(f'Bit-width must be within 1-16, got {bits}')
    if not MIN_FREQUENCY <= frequency <= NOMINAL_FREQUENCY:
        raise RangeError(f'Frequency must be within 12-204 MHz, got {frequency / 1e6:.1f} MHz')
    grid_bits, grid_volts = zip(*VOLTAGE_ANCHORS)
    at_nominal = float(np.interp(bits, grid_bits, grid_volts))
    return _scale_to_frequency(at_nominal, frequency)


def _scale_to_frequency(at_nominal: float, frequency: float) -> float:
    volts = MIN_VOLTAGE + (at_nominal - MIN_VOLTAGE) * frequency / NOMINAL_FREQUENCY
    return min(max(volts, MIN_VOLTAGE), NOMINAL_VOLTAGE)


def fixed_domain_voltage(frequency: float) -> float:
    return _scale_to_frequency(NOMINAL_VOLTAGE, frequency)


@dataclass(frozen=True)
class OperatingPoint:
    bits_effective: int
    voltage: float
    frequency: float

    def __post_init__(self):
        if not 1 <= self.bits_effective <= FULL_PRECISION:
            raise RangeError(f'Bit-width must be within 1-16, got {self.bits_effective}')
        if not MIN_VOLTAGE - 1e-9 <= self.voltage <= NOMINAL_VOLTAGE + 1e-9:
            raise RangeError(f'Supply must be within 0.55-1.1 V, got {self.voltage}')
        if self.frequency < 0:
            raise RangeError('Frequency cannot be negative')

    @property
    def frequency_mhz(self) -> float:
        return self.frequency / 1e6

    @property
    def feasible(self) -> bool:
        return self.voltage >= voltage_for_precision(self.bits_effective, self.frequency) - 1e-9

    @classmethod
    def scaled(cls, bits: int, frequency: float) -> 'OperatingPoint':
        return cls(bits, voltage_for_precision(bits, frequency), frequency)


@dataclass(frozen=True)
class PowerModel:
    c_fixed: float
    c_sram: float
    c_mac: float
    guard_sram_share: float
    guard_mac_share: float
    activity_slope: float = 1.0
    p_leak: float = P_LEAK_MW

    def __post_init__(self):
        for name, value in asdict(self).items():
            if value < 0:
                raise RangeError(f'Power model coefficient {name} is negative')
        if self.guard_sram_share > 1 or self.guard_mac_share > 1:
            raise RangeError('Guard shares are fractions')

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, float]) -> 'PowerModel':
        return cls(**{k: float(v) for k, v in data.items()})

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'PowerModel':
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path: Union[str, Path]) -> None:
        with open(path, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write('\n')


# Stand-in for runs whose power is discarded, such as the anchor simulations.
NOMINAL_MODEL = PowerModel(0.04, 0.17, 1.5, GUARD_SRAM_SHARE, GUARD_MAC_SHARE)


@dataclass(frozen=True)
class PowerBreakdown:
    leakage: float
    fixed: float
    sram: float
    mac_array: float
    total: float
    real_tops_per_watt: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class Activity:
    """Per-cycle activity factors the power model multiplies."""
    access_rate: float
    suppressed: float
    occupancy: float
    guarded: float

    @classmethod
    def of(cls, stats: SimStats) -> 'Activity':
        cycles = stats.total_cycles
        if not cycles:
            return cls(0.0, 0.0, 0.0, 0.0)
        accesses = stats.word_fetches + stats.flag_bits / FLAG_BITS_PER_WORD
        return cls(
            access_rate=accesses / cycles / REFERENCE_ACCESS_RATE,
            suppressed=stats.fetches_guarded / accesses if accesses else 0.0,
            occupancy=stats.active_macs / (ARRAY_MACS * cycles),
            guarded=stats.guarded_mac_fraction,
        )


def precision_factor(op: OperatingPoint, slope: float = 1.0) -> float:
    return (op.bits_effective / FULL_PRECISION) ** slope * (op.voltage / NOMINAL_VOLTAGE) ** 2


def _fixed_factor(op: OperatingPoint) -> float:
    return (fixed_domain_voltage(op.frequency) / NOMINAL_VOLTAGE) ** 2


def real_tops_per_watt(useful_macs: int, cycles: int, frequency: float, power_mw: float) -> float:
    if not cycles or power_mw <= 0:
        return 0.0
    ops_per_second = 2 * useful_macs * frequency / cycles
    return ops_per_second / (power_mw / 1e3) / 1e12


def layer_power(stats: SimStats, op: OperatingPoint, model: PowerModel) -> PowerBreakdown:
    activity = Activity.of(stats)
    f = op.frequency_mhz
    vf = _fixed_factor(op)
    fixed = f * vf * model.c_fixed
    sram = f * vf * model.c_sram * activity.access_rate * (1 - model.guard_sram_share * activity.suppressed)
    mac_array = (f * model.c_mac * precision_factor(op, model.activity_slope) * activity.occupancy
                 * (1 - model.guard_mac_share * activity.guarded))
    total = model.p_leak + fixed + sram + mac_array
    return PowerBreakdown(
        leakage=model.p_leak,
        fixed=fixed,
        sram=sram,
        mac_array=mac_array,
        total=total,
        real_tops_per_watt=real_tops_per_watt(stats.useful_macs, stats.total_cycles, op.frequency, total),
    )


def peak_performance(frequency: float) -> float:
    """Peak GOPS: every MAC of the array busy, two ops per MAC."""
    if frequency <= 0:
        raise RangeError('Frequency must be positive')
    return 2 * ARRAY_MACS * frequency / 1e9


@dataclass(frozen=True)
class FrameEnergy:
    energy_mj: float
    time_s: float
    average_power_mw: float


def energy_per_frame(breakdowns: Sequence[PowerBreakdown], cycles: Sequence[int],
                     frequency: float) -> FrameEnergy:
    if frequency <= 0:
        raise RangeError('Frequency must be positive')
    times = [c / frequency for c in cycles]
    energy = sum(b.total * t for b, t in zip(breakdowns, times))
    total_time = sum(times)
    average = energy / total_time if total_time else 0.0
    return FrameEnergy(energy, total_time, average)


@dataclass(frozen=True)
class Anchor:
    name: str
    stats: SimStats
    op: OperatingPoint
    measured_mw: float
    weight: float = 1.0


@dataclass
class CalibrationResult:
    model: PowerModel
    residuals: Dict[str, float] = field(default_factory=dict)
    rms: float = 0.0


def _features(stats: SimStats, op: OperatingPoint, slope: float, guard_sram_share: Optional[float],
              guard_mac_share: Optional[float]) -> np.ndarray:
    activity = Activity.of(stats)
    vf = _fixed_factor(op)
    sram = vf * activity.access_rate
    mac = precision_factor(op, slope) * activity.occupancy
    return op.frequency_mhz * np.array([
        vf,
        *_guardable(sram, activity.suppressed, guard_sram_share),
        *_guardable(mac, activity.guarded, guard_mac_share),
    ])


def _guardable(term: float, guarded: float, share: Optional[float]) -> List[float]:
    # A free share splits the term into an always-on and a guardable column.
    if share is None:
        return [term, term * (1 - guarded)]
    return [term * (1 - share * guarded)]


def _coefficient(values: Iterator[float], share: Optional[float]) -> Tuple[float, float]:
    if share is not None:
        return next(values), share
    kept, guardable = next(values), next(values)
    total = kept + guardable
    return total, guardable / total if total > 0 else 0.0


def calibrate(anchors: Sequence[Anchor], activity_slope: float = 1.0,
              guard_sram_share: Optional[float] = GUARD_SRAM_SHARE,
              guard_mac_share: Optional[float] = GUARD_MAC_SHARE,
              min_fixed: float = MIN_FIXED, max_rms: Optional[float] = MAX_FIT_RMS) -> CalibrationResult:
    """
    Fits c_fixed, c_sram and c_mac to measured powers by non-negative least
    squares over relative error. Leakage and the activity slope stay pinned;
    a guard share is pinned unless passed as None, and c_fixed never drops
    below `min_fixed`.
    """
    if len(anchors) < 4:
        raise FitError(f'Calibration needs at least 4 anchors, got {len(anchors)}')
    rows = []
    targets = []
    for anchor in anchors:
        scale = anchor.weight / anchor.measured_mw
        features = _features(anchor.stats, anchor.op, activity_slope, guard_sram_share, guard_mac_share)
        rows.append(features * scale)
        targets.append((anchor.measured_mw - P_LEAK_MW - min_fixed * features[0]) * scale)
    solution, _ = nnls(np.array(rows), np.array(targets))
    values = (float(x) for x in solution)
    extra_fixed = next(values)
    c_sram, sram_share = _coefficient(values, guard_sram_share)
    c_mac, mac_share = _coefficient(values, guard_mac_share)
    model = PowerModel(
        c_fixed=min_fixed + extra_fixed,
        c_sram=c_sram,
        c_mac=c_mac,
        guard_sram_share=sram_share,
        guard_mac_share=mac_share,
        activity_slope=activity_slope,
    )
    residuals = {
        a.name: (layer_power(a.stats, a.op, model).total - a.measured_mw) / a.measured_mw
        for a in anchors
    }
    rms = math.sqrt(sum(r * r for r in residuals.values()) / len(residuals))
    logger.info('Calibrated power model over %d anchors, RMS relative error %.3f', len(anchors), rms)
    if max_rms is not None and rms > max_rms:
        raise FitError(f'Calibration RMS relative error {rms:.3f} exceeds {max_rms}', residuals=residuals)
    return CalibrationResult(model, residuals, rms)


@dataclass(frozen=True)
class HoldOut:
    name: str
    predicted_mw: float
    measured_mw: float

    @property
    def error(self) -> float:
        return (self.predicted_mw - self.measured_mw) / self.measured_mw


def leave_one_out(anchors: Sequence[Anchor], **fit_options) -> List[HoldOut]:
    results = []
    for index, held in enumerate(anchors):
        rest = [a for i, a in enumerate(anchors) if i != index]
        model = calibrate(rest, max_rms=None, **fit_options).model
        predicted = layer_power(held.stats, held.op, model).total
        results.append(HoldOut(held.name, predicted, held.measured_mw))
    return results


def share_from_precision_gain(gain: float, bits: int, full_bits: int = FULL_PRECISION) -> float:
    """Scalable-domain power share implied by a measured gain from full to `bits` precision."""
    if gain < 1 or not 1 <= bits < full_bits:
        raise RangeError('Precision gain needs gain >= 1 and a reduced bit-width')
    return (1 - 1 / gain) / (1 - bits / full_bits)


def voltage_gain(share: float, bits: int, v_from: float, v_to: float,
                 full_bits: int = FULL_PRECISION) -> float:
    scalable = share * bits / full_bits
    before = (1 - share) + scalable
    after = (1 - share) + scalable * (v_to / v_from) ** 2
    return before / after
