import json

from django.test import SimpleTestCase

from simulator.exceptions import ParseError
from simulator.services.config_service import parse_config
from simulator.services.report_service import HUMAN, MACHINE, NetworkReport, emit_report, load_report
from simulator.services.simulation_service import SimulationService
from simulator.tests.fixtures import TINY_CHAIN


class EmitReportTests(SimpleTestCase):

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.report = SimulationService().run_network(parse_config(json.dumps(TINY_CHAIN)))

    def test_human_table_columns(self):
        text = emit_report(self.report, HUMAN)
        for column in ('Layer', 'Filter / Image bits (0%)', 'Filter / Image BW Reduc.',
                       'IO / HuffIO (MB/frame)', 'Voltage (V)', 'MMACs/Frame', 'Power (mW)',
                       'Real (TOPS/W)'):
            self.assertIn(column, text)
        self.assertIn('c1', text)
        self.assertIn('Total / avg.', text)

    def test_machine_report_is_complete(self):
        data = json.loads(emit_report(self.report, MACHINE))
        layer = data['layers'][0]
        for key in ('cycles', 'stall_cycles', 'macs_executed', 'macs_guarded', 'sram_reads',
                    'sram_writes', 'flag_bits', 'dma_bytes_raw', 'dma_bytes_compressed'):
            self.assertIn(key, layer['stats'])
        self.assertEqual(set(layer['power']), {'leakage', 'fixed', 'sram', 'mac_array', 'total',
                                               'real_tops_per_watt'})
        self.assertEqual(data['totals']['cycles'], self.report.total_cycles)

    def test_round_trip_through_load(self):
        machine = emit_report(self.report, MACHINE)
        loaded = load_report(machine)
        self.assertEqual(emit_report(loaded, MACHINE), machine)
        self.assertEqual(emit_report(loaded, HUMAN), emit_report(self.report, HUMAN))

    def test_totals_aggregate_layers(self):
        layers = self.report.layers
        self.assertEqual(self.report.total_cycles, sum(l.stats.total_cycles for l in layers))
        self.assertEqual(self.report.useful_macs, sum(l.stats.useful_macs for l in layers))
        self.assertAlmostEqual(self.report.energy_mj, sum(l.power.total * l.time_s for l in layers))
        self.assertAlmostEqual(self.report.average_power_mw * self.report.time_s, self.report.energy_mj)
        self.assertEqual(self.report.io_raw_bytes,
                         sum(l.weight_io_raw_bytes + l.image_io_raw_bytes for l in layers))

    def test_empty_network(self):
        empty = NetworkReport('empty', 204e6)
        totals = json.loads(emit_report(empty, MACHINE))['totals']
        for key in ('cycles', 'useful_macs', 'fps', 'energy_mj', 'average_power_mw', 'io_ratio'):
            self.assertEqual(totals[key], 0)
        self.assertIn('Total / avg.', emit_report(empty, HUMAN))

    def test_unknown_format(self):
        with self.assertRaises(ParseError):
            emit_report(self.report, 'xml')

    def test_load_rejects_other_documents(self):
        with self.assertRaises(ParseError):
            load_report('{"network": "x"}')
        with self.assertRaises(ParseError):
            load_report('not json')
