import logging
import os
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from keyrate_app.exceptions import ConfigError
from keyrate_app.params import load_config
from keyrate_app.reporting import RunManifest, write_fixture_csv
from keyrate_app.validation_service import FAIL, PASS, ValidationService

logger = logging.getLogger(__name__)


def sample_count(text):
    """Accepts 200000 as well as 2e5."""
    value = float(text)
    if value != int(value) or value < 0:
        raise ValueError(f"not a sample count: {text}")
    return int(value)


class Command(BaseCommand):
    help = 'Run the oracle suites and print a pass/fail table'

    def add_arguments(self, parser):
        parser.add_argument('--seed', type=int, default=0, help='Seed for every Monte Carlo suite (default: 0)')
        parser.add_argument(
            '--samples',
            type=sample_count,
            default=200_000,
            help='Samples per channel-oracle run (default: 2e5)'
        )
        parser.add_argument(
            '--config',
            type=str,
            default=os.path.join(settings.KEYRATE_CONFIG_DIR, 'baseline.env'),
            help='Experiment configuration used by the channel oracle'
        )
        parser.add_argument('--export-fixtures', type=str, metavar='DIR', help='Write each suite\'s rows as CSV')

    def handle(self, *args, **options):
        try:
            params = load_config(options['config'])
        except ConfigError as e:
            raise CommandError(f"Configuration error: {e}", returncode=1)

        seed, samples = options['seed'], options['samples']
        results = ValidationService.run_all(params, seed=seed, n_samples=samples)

        self.stdout.write(f"{'suite':<16} {'status':<24} detail")
        for result in results:
            line = f"{result.name:<16} {result.status:<24} {result.detail}"
            if result.status == PASS:
                self.stdout.write(self.style.SUCCESS(line))
            elif result.status == FAIL:
                self.stdout.write(self.style.ERROR(line))
            else:
                self.stdout.write(self.style.WARNING(line))

        if options.get('export_fixtures'):
            directory = Path(options['export_fixtures'])
            for result in results:
                if not result.rows:
                    continue
                manifest = RunManifest(
                    config_path=options['config'],
                    command='validate',
                    output_path=str(directory / f"{result.name}.csv"),
                    seed=seed,
                    options={'samples': samples, 'suite': result.name},
                )
                write_fixture_csv(result.rows, manifest.output_path, manifest)
            self.stdout.write(f"Fixtures written to {directory}")

        failed = [result.name for result in results if result.status == FAIL]
        if failed:
            raise CommandError(f"Validation failed: {', '.join(failed)}", returncode=3)
        self.stdout.write(self.style.SUCCESS("All validation suites passed"))
