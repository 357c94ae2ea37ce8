import time

from django.core.management.base import BaseCommand, CommandError

from simulator.services.selftest_service import MAX_DIM, run_equivalence_suite


class Command(BaseCommand):
    help = 'Check the array model against the reference convolution on random layers'

    def add_arguments(self, parser):
        parser.add_argument(
            '--cases',
            type=int,
            default=200,
            help='Number of random conv layers (default: 200)',
        )
        parser.add_argument(
            '--seed',
            type=int,
            default=0,
            help='Seed of the case generator (default: 0)',
        )
        parser.add_argument(
            '--max-dim',
            type=int,
            default=MAX_DIM,
            help=f'Largest image extent (default: {MAX_DIM})',
        )

    def handle(self, *args, **options):
        self.stdout.write(f"Running {options['cases']} random layers with guarding on and off...")
        started = time.monotonic()
        result = run_equivalence_suite(options['cases'], options['seed'], options['max_dim'])
        elapsed = time.monotonic() - started

        for mismatch in result.mismatches:
            self.stdout.write(self.style.ERROR(f'✗ {mismatch}'))
        if not result.passed:
            raise CommandError(f'{len(result.mismatches)} of {result.cases} layers differ from the reference')
        self.stdout.write(self.style.SUCCESS(
            f'✓ {result.cases} layers bit-identical to the reference ({elapsed:.1f}s)'
        ))
