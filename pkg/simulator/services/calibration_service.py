import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Union

from django.conf import settings

from simulator.exceptions import ParseError
from simulator.services.config_service import load_config
from simulator.services.energymodel import (
    Anchor,
    CalibrationResult,
    HoldOut,
    NOMINAL_MODEL,
    OperatingPoint,
    PowerModel,
    calibrate,
    leave_one_out,
)
from simulator.services.report_service import LayerReport, NetworkReport
from simulator.services.simulation_service import SimulationService

logger = logging.getLogger(__name__)


class CalibrationService:
    """
    Turns the bundled measurement table into fit anchors.

    Each anchor names a layer of a bundled network; its counters come from
    simulating that network once. Anchors may restate the layer at another
    operating point (bits, voltage, guarding off) with the same schedule.
    """

    def __init__(self, anchors_path: Optional[Union[str, Path]] = None,
                 simulation: Optional[SimulationService] = None):
        self.anchors_path = Path(anchors_path or settings.SIMULATOR['ANCHORS'])
        self.simulation = simulation or SimulationService(power_model=NOMINAL_MODEL)
        self._reports: Dict[str, NetworkReport] = {}
        self._result: Optional[CalibrationResult] = None

    def load_table(self) -> dict:
        try:
            with open(self.anchors_path) as f:
                return json.load(f)
        except json.JSONDecodeError as e:
            raise ParseError(f'Malformed anchor table: {e.msg}', line=e.lineno) from e

    def network_report(self, config_name: str) -> NetworkReport:
        if config_name not in self._reports:
            self._reports[config_name] = self.simulation.run_network(load_config(config_name))
        return self._reports[config_name]

    def layer_report(self, config_name: str, layer_name: str) -> LayerReport:
        for layer in self.network_report(config_name).layers:
            if layer.name == layer_name:
                return layer
        raise ParseError(f"Anchor names unknown layer '{config_name}:{layer_name}'")

    def build_anchors(self) -> List[Anchor]:
        anchors = []
        for entry in self.load_table()['anchors']:
            layer = self.layer_report(entry['config'], entry['layer'])
            stats = layer.stats
            if entry.get('guarding') is False:
                stats = stats.without_guarding()
            op = OperatingPoint(
                entry.get('bits', max(layer.weight_bits, layer.image_bits)),
                entry.get('voltage', layer.voltage),
                entry.get('frequency', layer.frequency),
            )
            anchors.append(Anchor(entry['name'], stats, op, float(entry['measured_mw']),
                                  float(entry.get('weight', 1.0))))
        return anchors

    def calibrate(self) -> CalibrationResult:
        if self._result is None:
            self._result = calibrate(self.build_anchors())
        return self._result

    def leave_one_out(self) -> List[HoldOut]:
        return leave_one_out(self.build_anchors())

    def network_targets(self) -> Dict[str, dict]:
        return self.load_table().get('networks', {})

    @staticmethod
    def save_model(model: PowerModel, path: Optional[Union[str, Path]] = None) -> Path:
        path = Path(path or settings.SIMULATOR['POWER_MODEL'])
        model.save(path)
        logger.info('Saved power model to %s', path)
        return path


@lru_cache(maxsize=None)
def bundled_calibration() -> CalibrationService:
    """The bundled anchor table, simulated and fitted at most once per process."""
    return CalibrationService()


def active_power_model() -> PowerModel:
    """A saved calibration when there is one, else a fit of the bundled anchors."""
    path = Path(settings.SIMULATOR['POWER_MODEL'])
    if path.exists():
        return PowerModel.load(path)
    logger.info('No saved power model at %s, fitting the bundled anchors', path)
    return bundled_calibration().calibrate().model
