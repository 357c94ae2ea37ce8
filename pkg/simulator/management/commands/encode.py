from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from simulator.exceptions import SimulatorError
from simulator.services.huffcodec import encode_tensor
from simulator.services.quantcore import read_tensor


class Command(BaseCommand):
    help = 'Huffman-compress a QTSR tensor file into a HUF1 stream'

    def add_arguments(self, parser):
        parser.add_argument('input', type=str, help='QTSR tensor file')
        parser.add_argument('output', type=str, help='HUF1 stream to write')

    def handle(self, *args, **options):
        try:
            tensor = read_tensor(Path(options['input']).read_bytes())
            stream = encode_tensor(tensor)
        except (OSError, SimulatorError) as e:
            raise CommandError(str(e)) from e

        Path(options['output']).write_bytes(stream.to_bytes())
        self.stdout.write(self.style.SUCCESS(
            f'✓ {stream.count} {stream.bits}-bit words: {stream.raw_bytes} -> {stream.size_bytes} bytes '
            f'(ratio {stream.ratio:.2f}, {stream.bits_per_symbol:.2f} bits/word)'
        ))
