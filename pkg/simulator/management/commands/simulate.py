from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from simulator.exceptions import SimulatorError
from simulator.serializers.network_serializers import MODE_CHOICES
from simulator.services.config_service import (
    apply_overrides,
    load_config,
    parse_bits_override,
    parse_voltage_override,
)
from simulator.services.report_service import HUMAN, REPORT_FORMATS, emit_report
from simulator.services.simulation_service import SimulationService, store_run


class Command(BaseCommand):
    help = 'Simulate a network config on the accelerator model and print its report'

    def add_arguments(self, parser):
        parser.add_argument(
            'config',
            type=str,
            help='Config file path or bundled config name (e.g. alexnet)',
        )
        parser.add_argument(
            '--frequency',
            type=float,
            help='Clock frequency in Hz, overrides the config',
        )
        parser.add_argument(
            '--guarding',
            choices=['on', 'off'],
            help='Force zero guarding on or off for every conv layer',
        )
        parser.add_argument(
            '--bits-override',
            type=str,
            help='Per-layer word widths, e.g. "l2:7,7;l3:8,9"',
        )
        parser.add_argument(
            '--voltage-override',
            type=str,
            help='Per-layer array voltage, e.g. "l2:0.9"',
        )
        parser.add_argument(
            '--seed',
            type=int,
            help='Seed for synthetic tensors and tile sampling',
        )
        parser.add_argument(
            '--mode',
            choices=MODE_CHOICES,
            help='Run every cycle (full), a sample of tile groups (sampled) or decide per layer (auto)',
        )
        parser.add_argument(
            '--sample-groups',
            type=int,
            help='Tile groups replayed per layer in sampled mode',
        )
        parser.add_argument(
            '--format',
            choices=REPORT_FORMATS,
            default=HUMAN,
            help='Report format (default: human)',
        )
        parser.add_argument(
            '--out',
            type=str,
            help='Write the report to this file instead of stdout',
        )
        parser.add_argument(
            '--save',
            action='store_true',
            help='Store the run in the database',
        )

    def handle(self, *args, **options):
        guarding = options.get('guarding')
        try:
            config = apply_overrides(
                load_config(options['config']),
                frequency=options.get('frequency'),
                guarding=None if guarding is None else guarding == 'on',
                bits=parse_bits_override(options['bits_override']) if options.get('bits_override') else None,
                voltages=(parse_voltage_override(options['voltage_override'])
                          if options.get('voltage_override') else None),
                seed=options.get('seed'),
                mode=options.get('mode'),
            )
            report = SimulationService(sample_groups=options.get('sample_groups')).run_network(config)
            text = emit_report(report, options['format'])
        except SimulatorError as e:
            raise CommandError(str(e)) from e

        if options.get('out'):
            Path(options['out']).write_text(text)
            self.stdout.write(self.style.SUCCESS(f"✓ Report written to {options['out']}"))
        else:
            self.stdout.write(text, ending='')

        if options['save']:
            run = store_run(report, guarding=guarding or 'config', mode=config.options.mode,
                            seed=config.options.seed)
            self.stdout.write(self.style.SUCCESS(f'✓ Saved run {run.id}'))
