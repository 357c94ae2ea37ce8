import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from simulator.exceptions import ParseError, RangeError, ShapeChainError, ShapeError
from simulator.serializers.network_serializers import NetworkConfigSerializer
from simulator.services.mapper import LayerSpec
from simulator.services.quantcore import QTensor, read_tensor, word_range

logger = logging.getLogger(__name__)

CONFIG_SUFFIX = '.cfg'


@dataclass(frozen=True)
class TensorSource:
    source: str
    zero_fraction: float = 0.0
    distribution: str = 'uniform'
    seed: int = 0
    exponent: int = 0
    path: Optional[str] = None


@dataclass(frozen=True)
class LayerConfig:
    spec: LayerSpec
    image: Optional[TensorSource] = None
    weights: Optional[TensorSource] = None

    @property
    def name(self) -> str:
        return self.spec.name


@dataclass(frozen=True)
class RunOptions:
    mode: str = 'auto'
    sample_groups: Optional[int] = None
    seed: int = 0


@dataclass
class NetworkConfig:
    network: str
    frequency: float
    layers: List[LayerConfig] = field(default_factory=list)
    options: RunOptions = field(default_factory=RunOptions)
    base_dir: Optional[Path] = None

    @property
    def conv_layers(self) -> List[LayerConfig]:
        return [layer for layer in self.layers if layer.spec.kind == 'conv']

    def layer_named(self, name: str) -> LayerConfig:
        for layer in self.layers:
            if layer.name == name:
                return layer
        raise ParseError(f"Network '{self.network}' has no layer '{name}'", field='layers')


def _first_error(errors, path: str = '') -> Tuple[str, str]:
    if isinstance(errors, dict):
        key, value = next(iter(errors.items()))
        prefix = path if key == 'non_field_errors' else (f'{path}.{key}' if path else str(key))
        return _first_error(value, prefix)
    if isinstance(errors, list):
        for index, item in enumerate(errors):
            if item:
                if isinstance(item, (dict, list)):
                    return _first_error(item, f'{path}[{index}]')
                return path, str(item)
    return path, str(errors)


def _line_of(text: str, layer_index: Optional[int]) -> Optional[int]:
    if layer_index is None:
        return None
    # Line of the layer's "kind" key, good enough for a diagnostic.
    seen = -1
    for number, line in enumerate(text.splitlines(), start=1):
        if '"kind"' in line:
            seen += 1
            if seen == layer_index:
                return number
    return None


def _source(data: Optional[dict]) -> Optional[TensorSource]:
    if data is None:
        return None
    return TensorSource(
        source=data['source'],
        zero_fraction=data['zero_fraction'],
        distribution=data['distribution'],
        seed=data['seed'],
        exponent=data['exponent'],
        path=data.get('path'),
    )


def _build_spec(data: dict, dims: Optional[Tuple[int, int, int]], frequency: float) -> LayerSpec:
    kind = data['kind']
    given = tuple(data.get(k) for k in ('in_channels', 'in_height', 'in_width'))
    if all(v is not None for v in given):
        in_dims = given
    elif dims is not None and kind != 'conv':
        in_dims = dims
    else:
        raise ParseError('Input dims (in_channels, in_height, in_width) are required')
    common = dict(
        kind=kind,
        in_channels=in_dims[0],
        in_height=in_dims[1],
        in_width=in_dims[2],
        weight_bits=data['weight_bits'],
        image_bits=data['image_bits'],
        guarding=data['guarding'],
        frequency=frequency,
        name=data['name'],
    )
    if kind == 'maxpool':
        stride = data.get('stride') or data['window']
        return LayerSpec(kernel_h=data['window'][0], kernel_w=data['window'][1],
                         stride_v=stride[0], stride_h=stride[1], **common)
    if kind == 'relu':
        return LayerSpec(**common)
    return LayerSpec(
        num_filters=data['num_filters'],
        kernel_h=data['kernel'][0],
        kernel_w=data['kernel'][1],
        stride_h=data['stride_h'],
        stride_v=data['stride_v'],
        padding=data['padding'],
        groups=data['groups'],
        output_bits=data.get('output_bits'),
        output_exponent=data.get('output_exponent'),
        voltage=data.get('voltage'),
        **common,
    )


def parse_config(text: str, base_dir: Optional[Path] = None) -> NetworkConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f'Malformed config: {e.msg}', line=e.lineno) from e

    serializer = NetworkConfigSerializer(data=raw)
    if not serializer.is_valid():
        path, message = _first_error(serializer.errors)
        layer_index = None
        if path.startswith('layers['):
            layer_index = int(path[len('layers['):path.index(']')])
        raise ParseError(message, line=_line_of(text, layer_index), field=path)
    data = serializer.validated_data
    frequency = data['frequency']

    layers = []
    dims = None
    producer = None
    for index, layer in enumerate(data['layers']):
        layer = dict(layer)
        layer['name'] = layer['name'] or f"{layer['kind']}{index + 1}"
        try:
            spec = _build_spec(layer, dims, frequency)
        except (ShapeError, RangeError) as e:
            raise ParseError(str(e), line=_line_of(text, index), field=f'layers[{index}]') from e
        except ParseError as e:
            raise ParseError(str(e), line=_line_of(text, index), field=f'layers[{index}]') from e
        if dims is not None and spec.image_dims != dims:
            raise ShapeChainError(producer, spec.name,
                                  f'produces {dims}, consumer expects {spec.image_dims}')
        image = _source(layer.get('image'))
        if image is not None and image.source == 'chain' and dims is None:
            raise ParseError('The first layer cannot chain its input', line=_line_of(text, index),
                             field=f'layers[{index}].image')
        if spec.kind != 'relu' and (spec.out_height < 1 or spec.out_width < 1):
            raise ParseError(f'Layer {spec.name} has non-positive output dims',
                             line=_line_of(text, index), field=f'layers[{index}]')
        layers.append(LayerConfig(spec, image, _source(layer.get('weights'))))
        dims = spec.out_dims
        producer = spec.name

    options = data.get('options') or {}
    config = NetworkConfig(
        network=data['network'],
        frequency=frequency,
        layers=layers,
        options=RunOptions(
            mode=options.get('mode', 'auto'),
            sample_groups=options.get('sample_groups'),
            seed=options.get('seed', 0),
        ),
        base_dir=base_dir,
    )
    logger.debug('Parsed %s: %d layers, %d conv', config.network, len(layers), len(config.conv_layers))
    return config


def resolve_config_path(name_or_path: Union[str, Path]) -> Path:
    path = Path(name_or_path)
    if path.exists():
        return path
    bundled = Path(settings.SIMULATOR['DATA_DIR']) / path.name
    if bundled.suffix != CONFIG_SUFFIX:
        bundled = bundled.with_suffix(CONFIG_SUFFIX)
    if not bundled.exists():
        raise ParseError(f"No config file or bundled config named '{name_or_path}'")
    return bundled


def load_config(name_or_path: Union[str, Path]) -> NetworkConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(path.read_text(), base_dir=path.parent)


def bundled_configs() -> List[str]:
    return sorted(p.stem for p in Path(settings.SIMULATOR['DATA_DIR']).glob(f'*{CONFIG_SUFFIX}'))


def synth_tensor(dims: Sequence[int], bits: int, zero_fraction: float, seed,
                 distribution: str = 'uniform', exponent: int = 0) -> QTensor:
    """
    Deterministic tensor with a target share of zero words.

    Nonzero words are uniform over the nonzero codes of the width, or for
    'geometric' decay in magnitude like post-ReLU activations.
    """
    if not 0.0 <= zero_fraction <= 1.0:
        raise RangeError(f'Zero fraction must be within [0, 1], got {zero_fraction}')
    low, high = word_range(bits)
    rng = np.random.default_rng(seed)
    count = int(np.prod(dims))
    zero = rng.random(count) < zero_fraction
    if bits == 1:
        values = np.ones(count, dtype=np.int64)
    elif distribution == 'geometric':
        magnitude = np.minimum(rng.geometric(0.35, count), high)
        sign = np.where(rng.random(count) < 0.5, -1, 1)
        values = magnitude * sign
    elif distribution == 'uniform':
        values = rng.integers(0, high - low, count) + low
        values = np.where(values >= 0, values + 1, values)
    else:
        raise ParseError(f'Unknown distribution {distribution!r}', field='distribution')
    return QTensor(tuple(dims), bits, exponent, np.where(zero, 0, values))


def load_tensor(source: TensorSource, dims: Sequence[int], bits: int, base_seed: int,
                base_dir: Optional[Path] = None) -> QTensor:
    if source.source == 'file':
        path = Path(source.path)
        if not path.is_absolute() and base_dir is not None:
            path = base_dir / path
        tensor = read_tensor(path.read_bytes())
        if tuple(tensor.dims) != tuple(dims):
            raise ShapeError(f'Tensor file {path} holds dims {tensor.dims}, layer expects {tuple(dims)}')
        return tensor
    return synth_tensor(dims, bits, source.zero_fraction, [base_seed, source.seed],
                        source.distribution, source.exponent)


def parse_bits_override(text: str) -> Dict[str, Tuple[int, int]]:
    """`l2:7,7;l3:8,9` -> {'l2': (7, 7), 'l3': (8, 9)}"""
    overrides = {}
    for item in filter(None, (part.strip() for part in text.split(';'))):
        try:
            layer, widths = item.split(':')
            weight_bits, image_bits = (int(w) for w in widths.split(','))
        except ValueError as e:
            raise ParseError(f"Bits override '{item}' is not of the form L:w,i") from e
        overrides[layer.strip()] = (weight_bits, image_bits)
    return overrides


def parse_voltage_override(text: str) -> Dict[str, float]:
    overrides = {}
    for item in filter(None, (part.strip() for part in text.split(';'))):
        try:
            layer, volts = item.split(':')
            overrides[layer.strip()] = float(volts)
        except ValueError as e:
            raise ParseError(f"Voltage override '{item}' is not of the form L:v") from e
    return overrides


def apply_overrides(config: NetworkConfig, frequency: Optional[float] = None,
                    guarding: Optional[bool] = None,
                    bits: Optional[Dict[str, Tuple[int, int]]] = None,
                    voltages: Optional[Dict[str, float]] = None,
                    seed: Optional[int] = None, mode: Optional[str] = None) -> NetworkConfig:
    names = {layer.name for layer in config.layers}
    for name in list((bits or {}).keys()) + list((voltages or {}).keys()):
        if name not in names:
            raise ParseError(f"Override names unknown layer '{name}'", field='layers')

    layers = []
    for layer in config.layers:
        changes = {}
        if frequency is not None:
            changes['frequency'] = frequency
        if guarding is not None and layer.spec.kind == 'conv':
            changes['guarding'] = guarding
        if bits and layer.name in bits:
            changes['weight_bits'], changes['image_bits'] = bits[layer.name]
        if voltages and layer.name in voltages:
            changes['voltage'] = voltages[layer.name]
        try:
            spec = replace(layer.spec, **changes) if changes else layer.spec
        except (RangeError, ShapeError) as e:
            raise ParseError(str(e), field=layer.name) from e
        layers.append(replace(layer, spec=spec))

    options = config.options
    if seed is not None:
        options = replace(options, seed=seed)
    if mode is not None:
        options = replace(options, mode=mode)
    return replace(
        config,
        frequency=frequency if frequency is not None else config.frequency,
        layers=layers,
        options=options,
    )
