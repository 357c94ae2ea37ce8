from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from simulator.exceptions import SimulatorError
from simulator.services.huffcodec import HuffStream, decode
from simulator.services.quantcore import QTensor, write_tensor


class Command(BaseCommand):
    help = 'Expand a HUF1 stream back into a QTSR tensor file'

    def add_arguments(self, parser):
        parser.add_argument('input', type=str, help='HUF1 stream')
        parser.add_argument('output', type=str, help='QTSR tensor file to write')
        parser.add_argument(
            '--dims',
            type=str,
            help='Tensor dims, e.g. "96,27,27" (default: one flat axis)',
        )
        parser.add_argument(
            '--exponent',
            type=int,
            default=0,
            help='Power-of-two exponent of the words (default: 0)',
        )

    def handle(self, *args, **options):
        try:
            stream = HuffStream.from_bytes(Path(options['input']).read_bytes())
            words = decode(stream)
            dims = (stream.count,)
            if options.get('dims'):
                dims = tuple(int(d) for d in options['dims'].split(','))
            tensor = QTensor(dims, stream.bits, options['exponent'], words)
        except ValueError as e:
            raise CommandError(f"Invalid --dims '{options['dims']}'") from e
        except (OSError, SimulatorError) as e:
            raise CommandError(str(e)) from e

        Path(options['output']).write_bytes(write_tensor(tensor))
        self.stdout.write(self.style.SUCCESS(f'✓ Decoded {tensor.size} words into {tensor.dims}'))
