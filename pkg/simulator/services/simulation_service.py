import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from django.conf import settings

from simulator.exceptions import LayerError, SimulatorError
from simulator.models import SimulationRun
from simulator.services.config_service import LayerConfig, NetworkConfig, load_tensor
from simulator.services.datapath import (
    LayerRun,
    accumulate_dense,
    compute_guard_flags,
    requantize_output,
    run_layer,
)
from simulator.services.energymodel import OperatingPoint, PowerModel, layer_power, voltage_for_precision
from simulator.services.huffcodec import encode_tensor
from simulator.services.mapper import LayerSpec
from simulator.services.memsys import MemoryConfig
from simulator.services.quantcore import QTensor, maxpool, relu_vec, requantize_array
from simulator.services.report_service import LayerReport, NetworkReport
from simulator.services.stats import SimStats

logger = logging.getLogger(__name__)

FULL = 'full'
SAMPLED = 'sampled'
AUTO = 'auto'


@dataclass
class IOVolume:
    passes: int
    weight_raw: int
    weight_compressed: int
    image_raw: int
    image_compressed: int

    @property
    def dma_words(self) -> int:
        return math.ceil((self.weight_compressed + self.image_compressed) / 2)


def io_volume(spec: LayerSpec, weights: QTensor, image: QTensor,
              memory: Optional[MemoryConfig] = None) -> IOVolume:
    """
    DMA traffic of one layer. Weights that overflow one block are loaded in
    passes, and the image is streamed again for every pass.
    """
    memory = memory or MemoryConfig()
    passes = max(1, math.ceil(weights.size / memory.words_per_block))
    weight_stream = encode_tensor(weights)
    image_stream = encode_tensor(image)
    return IOVolume(
        passes=passes,
        weight_raw=weight_stream.raw_bytes,
        weight_compressed=weight_stream.size_bytes,
        image_raw=passes * image_stream.raw_bytes,
        image_compressed=passes * image_stream.size_bytes,
    )


def _scaled(count: int, numerator: int, denominator: int) -> int:
    return int(round(count * numerator / denominator)) if denominator else 0


def extrapolate_stats(sample: SimStats, predicted: SimStats, spec: LayerSpec, guarding: bool,
                      dma_words: int) -> SimStats:
    """
    Whole-layer counters from a sampled run: cycles, MACs and fetches come
    from the exact schedule counts, data-dependent ones scale with the sample.
    """
    guarded = min(_scaled(sample.macs_guarded, predicted.useful_macs, sample.useful_macs),
                  predicted.useful_macs)
    pixels_guarded = _scaled(sample.pixel_fetches_guarded, predicted.pixel_fetches, sample.pixel_fetches)
    weights_guarded = _scaled(sample.weight_fetches_guarded, predicted.weight_fetches, sample.weight_fetches)
    outputs = math.prod(spec.out_dims)
    flag_bits = 32 * predicted.cycles if guarding else 0
    return SimStats(
        cycles=predicted.cycles,
        stall_cycles=_scaled(sample.stall_cycles, predicted.cycles, sample.cycles),
        tiles=predicted.tiles,
        useful_macs=predicted.useful_macs,
        macs_executed=predicted.useful_macs - guarded,
        macs_guarded=guarded,
        pixel_fetches=predicted.pixel_fetches,
        weight_fetches=predicted.weight_fetches,
        pixel_fetches_guarded=min(pixels_guarded, predicted.pixel_fetches),
        weight_fetches_guarded=min(weights_guarded, predicted.weight_fetches),
        flag_bits=flag_bits,
        sram_reads=predicted.word_fetches - min(pixels_guarded, predicted.pixel_fetches)
        - min(weights_guarded, predicted.weight_fetches),
        sram_writes=outputs + min(dma_words, predicted.cycles),
        guard_reads=flag_bits,
        guard_writes=outputs if guarding else 0,
    )


def adapt_precision(t: QTensor, bits: int) -> QTensor:
    """Narrows a chained tensor to the consumer's word width by dropping low bits."""
    if t.bits <= bits:
        return t
    exponent = t.exponent + (t.bits - bits)
    raw = requantize_array(t.data, bits, exponent, t.exponent)
    return QTensor(t.dims, bits, exponent, raw)


class SimulationService:

    def __init__(self, power_model: Optional[PowerModel] = None, sample_groups: Optional[int] = None,
                 full_run_max_cycles: Optional[int] = None):
        config = settings.SIMULATOR
        self.sample_groups = sample_groups or config['SAMPLE_GROUPS']
        self.full_run_max_cycles = (full_run_max_cycles if full_run_max_cycles is not None
                                    else config['FULL_RUN_MAX_CYCLES'])
        self._power_model = power_model

    @property
    def power_model(self) -> PowerModel:
        if self._power_model is None:
            from simulator.services.calibration_service import active_power_model
            self._power_model = active_power_model()
        return self._power_model

    def resolve_mode(self, mode: str, cycles: int) -> str:
        if mode == AUTO:
            return FULL if cycles <= self.full_run_max_cycles else SAMPLED
        return mode

    def _sampled_groups(self, total: int, requested: Optional[int], seed: int,
                        layer_index: int) -> Optional[List[int]]:
        count = requested or self.sample_groups
        if count >= total:
            return None
        rng = np.random.default_rng([seed, layer_index])
        return sorted(int(g) for g in rng.choice(total, size=count, replace=False))

    def _needs_output(self, config: NetworkConfig, index: int) -> bool:
        for layer in config.layers[index + 1:]:
            if layer.spec.kind == 'conv':
                return layer.image is not None and layer.image.source == 'chain'
        return False

    def _operands(self, config: NetworkConfig, layer: LayerConfig,
                  current: Optional[QTensor]) -> Tuple[QTensor, QTensor]:
        spec = layer.spec
        seed = config.options.seed
        if layer.image.source == 'chain':
            image = adapt_precision(current, spec.image_bits)
        else:
            image = load_tensor(layer.image, spec.image_dims, spec.image_bits, seed, config.base_dir)
        weights = load_tensor(layer.weights, spec.weight_dims, spec.weight_bits, seed, config.base_dir)
        return weights, image

    def simulate_conv(self, config: NetworkConfig, index: int, conv_index: int,
                      weights: QTensor, image: QTensor) -> Tuple[LayerReport, LayerRun]:
        layer = config.layers[index]
        spec = layer.spec
        io = io_volume(spec, weights, image)
        predicted_cycles = spec.out_height * math.ceil(spec.out_width / 16) * spec.in_channels \
            * math.ceil(spec.filters_per_group / 16) * spec.kernel_h * spec.kernel_w
        mode = self.resolve_mode(config.options.mode, predicted_cycles)

        groups = None
        if mode == SAMPLED:
            blocks = spec.groups * math.ceil(spec.filters_per_group / 16) * spec.out_height \
                * math.ceil(spec.out_width / 16)
            groups = self._sampled_groups(blocks, config.options.sample_groups,
                                          config.options.seed, index)
        run = run_layer(spec, weights, image, groups=groups, layer_index=conv_index,
                        dma_words=io.dma_words)
        if run.complete:
            stats = run.stats
        else:
            stats = extrapolate_stats(run.stats, run.predicted, spec, spec.guarding, io.dma_words)
        stats.dma_bytes_raw = io.weight_raw + io.image_raw
        stats.dma_bytes_compressed = io.weight_compressed + io.image_compressed

        voltage = spec.voltage or voltage_for_precision(spec.bits_effective, spec.frequency)
        op = OperatingPoint(spec.bits_effective, voltage, spec.frequency)
        if not op.feasible:
            logger.warning('%s: %.2f V is below the timing-safe supply for %d bits at %.0f MHz',
                           spec.name, voltage, spec.bits_effective, op.frequency_mhz)
        power = layer_power(stats, op, self.power_model)
        report = LayerReport(
            index=index,
            name=spec.name,
            weight_bits=spec.weight_bits,
            image_bits=spec.image_bits,
            weight_zero_fraction=compute_guard_flags(weights).zero_fraction,
            image_zero_fraction=compute_guard_flags(image).zero_fraction,
            guarding=spec.guarding,
            voltage=voltage,
            frequency=spec.frequency,
            mode=FULL if run.complete else SAMPLED,
            blocks_run=run.blocks_run,
            blocks_total=len(run.schedule.groups()),
            refetch_passes=io.passes,
            stats=stats,
            weight_io_raw_bytes=io.weight_raw,
            weight_io_compressed_bytes=io.weight_compressed,
            image_io_raw_bytes=io.image_raw,
            image_io_compressed_bytes=io.image_compressed,
            power=power,
        )
        logger.info('%s: %s run, %d cycles, %.1f mW', spec.name, report.mode,
                    stats.total_cycles, power.total)
        return report, run

    def run_network(self, config: NetworkConfig) -> NetworkReport:
        report = NetworkReport(config.network, config.frequency)
        current = None
        conv_index = 0
        for index, layer in enumerate(config.layers):
            spec = layer.spec
            try:
                if spec.kind == 'relu':
                    current = relu_vec(current) if current is not None else None
                    continue
                if spec.kind == 'maxpool':
                    if current is not None:
                        current = maxpool(current, (spec.kernel_h, spec.kernel_w),
                                          (spec.stride_v, spec.stride_h))
                    continue
                weights, image = self._operands(config, layer, current)
                layer_report, run = self.simulate_conv(config, index, conv_index, weights, image)
                report.layers.append(layer_report)
                conv_index += 1
                current = None
                if self._needs_output(config, index):
                    if run.complete:
                        current = run.output(weights, image)
                    else:
                        current = requantize_output(spec, accumulate_dense(spec, weights, image),
                                                    weights, image)
            except SimulatorError as e:
                raise LayerError(index, spec.name, e) from e
        logger.info('%s: %.1f fps, %.1f mW average', config.network, report.fps, report.average_power_mw)
        return report


def store_run(report: NetworkReport, guarding: str = 'config', mode: str = AUTO, seed: int = 0) -> SimulationRun:
    return SimulationRun.objects.create(
        network=report.network,
        frequency=report.frequency,
        guarding=guarding,
        mode=mode,
        seed=seed,
        fps=report.fps,
        average_power_mw=report.average_power_mw,
        report=report.to_dict(),
    )
