import json
from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from simulator.exceptions import FitError, SimulatorError
from simulator.services.calibration_service import CalibrationService


class Command(BaseCommand):
    help = 'Fit the power model to measured anchors and save it'

    def add_arguments(self, parser):
        parser.add_argument(
            'anchors',
            nargs='?',
            type=str,
            help='Anchor table JSON (default: the bundled measurement table)',
        )
        parser.add_argument(
            '--out',
            type=str,
            help='Where to write the fitted model (default: the active power model path)',
        )
        parser.add_argument(
            '--leave-one-out',
            action='store_true',
            help='Also report each anchor predicted by a fit without it',
        )
        parser.add_argument(
            '--dry-run',
            action='store_true',
            help='Fit and report but do not write the model',
        )

    def handle(self, *args, **options):
        service = CalibrationService(options.get('anchors'))
        self.stdout.write(f'Calibrating against {service.anchors_path}...')
        try:
            result = service.calibrate()
        except FitError as e:
            for name, residual in e.residuals.items():
                self.stdout.write(self.style.ERROR(f'  {name:<24}{residual:+.1%}'))
            raise CommandError(str(e)) from e
        except SimulatorError as e:
            raise CommandError(str(e)) from e

        for name, residual in result.residuals.items():
            self.stdout.write(f'  {name:<24}{residual:+.1%}')
        self.stdout.write(f'RMS relative error: {result.rms:.3f}')
        self.stdout.write(json.dumps(result.model.to_dict(), indent=2))

        if options['leave_one_out']:
            self.stdout.write('Leave-one-out:')
            for held in service.leave_one_out():
                line = (f'  {held.name:<24}predicted {held.predicted_mw:8.1f} mW, '
                        f'measured {held.measured_mw:8.1f} mW ({held.error:+.1%})')
                style = self.style.WARNING if abs(held.error) > 0.20 else self.style.SUCCESS
                self.stdout.write(style(line))

        if options['dry_run']:
            self.stdout.write(self.style.WARNING('Dry run: model not saved'))
            return
        path = service.save_model(result.model, Path(options['out']) if options.get('out') else None)
        self.stdout.write(self.style.SUCCESS(f'✓ Saved power model to {path}'))
