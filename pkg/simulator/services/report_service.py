import json
import logging
from dataclasses import dataclass, field, fields
from typing import Any, Dict, List

from simulator.exceptions import ParseError
from simulator.services.energymodel import PowerBreakdown, peak_performance, real_tops_per_watt
from simulator.services.stats import ARRAY_MACS, SimStats

logger = logging.getLogger(__name__)

MACHINE = 'machine'
HUMAN = 'human'
REPORT_FORMATS = (HUMAN, MACHINE)


@dataclass
class LayerReport:
    index: int
    name: str
    weight_bits: int
    image_bits: int
    weight_zero_fraction: float
    image_zero_fraction: float
    guarding: bool
    voltage: float
    frequency: float
    mode: str
    blocks_run: int
    blocks_total: int
    refetch_passes: int
    stats: SimStats
    weight_io_raw_bytes: int
    weight_io_compressed_bytes: int
    image_io_raw_bytes: int
    image_io_compressed_bytes: int
    power: PowerBreakdown

    @property
    def io_raw_bytes(self) -> int:
        return self.weight_io_raw_bytes + self.image_io_raw_bytes

    @property
    def io_compressed_bytes(self) -> int:
        return self.weight_io_compressed_bytes + self.image_io_compressed_bytes

    @property
    def weight_io_ratio(self) -> float:
        return _ratio(self.weight_io_raw_bytes, self.weight_io_compressed_bytes)

    @property
    def image_io_ratio(self) -> float:
        return _ratio(self.image_io_raw_bytes, self.image_io_compressed_bytes)

    @property
    def mac_efficiency(self) -> float:
        return self.stats.mac_efficiency

    @property
    def time_s(self) -> float:
        return self.stats.total_cycles / self.frequency if self.frequency else 0.0

    @property
    def energy_mj(self) -> float:
        return self.power.total * self.time_s

    @property
    def fps(self) -> float:
        return self.frequency / self.stats.total_cycles if self.stats.total_cycles else 0.0

    @property
    def real_tops_per_watt(self) -> float:
        return self.power.real_tops_per_watt

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data['stats'] = self.stats.to_dict()
        data['power'] = self.power.to_dict()
        data['derived'] = {
            'mac_efficiency': self.mac_efficiency,
            'fps': self.fps,
            'time_s': self.time_s,
            'energy_mj': self.energy_mj,
            'io_raw_bytes': self.io_raw_bytes,
            'io_compressed_bytes': self.io_compressed_bytes,
        }
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LayerReport':
        values = {f.name: data[f.name] for f in fields(cls)}
        values['stats'] = SimStats(**data['stats'])
        values['power'] = PowerBreakdown(**data['power'])
        return cls(**values)


def _ratio(raw: int, compressed: int) -> float:
    return raw / compressed if compressed else 0.0


@dataclass
class NetworkReport:
    network: str
    frequency: float
    layers: List[LayerReport] = field(default_factory=list)

    @property
    def total_cycles(self) -> int:
        return sum(layer.stats.total_cycles for layer in self.layers)

    @property
    def useful_macs(self) -> int:
        return sum(layer.stats.useful_macs for layer in self.layers)

    @property
    def fps(self) -> float:
        return self.frequency / self.total_cycles if self.total_cycles else 0.0

    @property
    def time_s(self) -> float:
        return sum(layer.time_s for layer in self.layers)

    @property
    def energy_mj(self) -> float:
        return sum(layer.energy_mj for layer in self.layers)

    @property
    def average_power_mw(self) -> float:
        return self.energy_mj / self.time_s if self.time_s else 0.0

    @property
    def real_tops_per_watt(self) -> float:
        return real_tops_per_watt(self.useful_macs, self.total_cycles, self.frequency,
                                  self.average_power_mw)

    @property
    def mac_efficiency(self) -> float:
        slots = ARRAY_MACS * self.total_cycles
        return self.useful_macs / slots if slots else 0.0

    @property
    def io_raw_bytes(self) -> int:
        return sum(layer.io_raw_bytes for layer in self.layers)

    @property
    def io_compressed_bytes(self) -> int:
        return sum(layer.io_compressed_bytes for layer in self.layers)

    @property
    def io_ratio(self) -> float:
        return _ratio(self.io_raw_bytes, self.io_compressed_bytes)

    @property
    def peak_gops(self) -> float:
        return peak_performance(self.frequency) if self.frequency > 0 else 0.0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'network': self.network,
            'frequency': self.frequency,
            'layers': [layer.to_dict() for layer in self.layers],
            'totals': {
                'cycles': self.total_cycles,
                'useful_macs': self.useful_macs,
                'fps': self.fps,
                'time_s': self.time_s,
                'energy_mj': self.energy_mj,
                'average_power_mw': self.average_power_mw,
                'real_tops_per_watt': self.real_tops_per_watt,
                'mac_efficiency': self.mac_efficiency,
                'io_raw_bytes': self.io_raw_bytes,
                'io_compressed_bytes': self.io_compressed_bytes,
                'io_ratio': self.io_ratio,
                'peak_gops': self.peak_gops,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'NetworkReport':
        return cls(
            network=data['network'],
            frequency=data['frequency'],
            layers=[LayerReport.from_dict(layer) for layer in data['layers']],
        )


_MB = 1e6


def _human(report: NetworkReport) -> str:
    header = (
        f"{'Layer':<12}{'Filter / Image bits (0%)':<28}{'Filter / Image BW Reduc.':<26}"
        f"{'IO / HuffIO (MB/frame)':<24}{'Voltage (V)':>12}{'MMACs/Frame':>13}"
        f"{'Power (mW)':>12}{'Real (TOPS/W)':>15}{'Cycles':>12}{'Stalls':>8}{'MAC eff.':>10}"
    )
    lines = [f'{report.network} @ {report.frequency / 1e6:g} MHz', header, '-' * len(header)]
    for layer in report.layers:
        bits = (f'{layer.weight_bits} ({layer.weight_zero_fraction:.0%}) / '
                f'{layer.image_bits} ({layer.image_zero_fraction:.0%})')
        reduction = f'{layer.weight_io_ratio:.2f}x / {layer.image_io_ratio:.2f}x'
        io = f'{layer.io_raw_bytes / _MB:.3g} / {layer.io_compressed_bytes / _MB:.3g}'
        lines.append(
            f'{layer.name:<12}{bits:<28}{reduction:<26}{io:<24}{layer.voltage:>12.2f}'
            f'{layer.stats.useful_macs / _MB:>13.1f}{layer.power.total:>12.1f}'
            f'{layer.real_tops_per_watt:>15.2f}{layer.stats.total_cycles:>12}'
            f'{layer.stats.stall_cycles:>8}{layer.mac_efficiency:>10.2f}'
        )
    lines.append('-' * len(header))
    io = f'{report.io_raw_bytes / _MB:.3g} / {report.io_compressed_bytes / _MB:.3g}'
    lines.append(
        f"{'Total / avg.':<12}{'':<28}{f'{report.io_ratio:.2f}x':<26}{io:<24}{'':>12}"
        f'{report.useful_macs / _MB:>13.1f}{report.average_power_mw:>12.1f}'
        f'{report.real_tops_per_watt:>15.2f}{report.total_cycles:>12}{"":>8}'
        f'{report.mac_efficiency:>10.2f}'
    )
    lines.append('')
    lines.append(f'Throughput: {report.fps:.1f} fps, {report.energy_mj:.4g} mJ/frame, '
                 f'peak {report.peak_gops:.1f} GOPS')
    return '\n'.join(lines) + '\n'


def emit_report(report: NetworkReport, format: str = HUMAN) -> str:
    if format == MACHINE:
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + '\n'
    if format == HUMAN:
        return _human(report)
    raise ParseError(f"Unknown report format '{format}'", field='format')


def load_report(text: str) -> NetworkReport:
    try:
        return NetworkReport.from_dict(json.loads(text))
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise ParseError(f'Not a machine report: {e}') from e
