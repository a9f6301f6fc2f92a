import dataclasses
import io
import logging
import math
import os
from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from keyrate_app.decoy_estimator import TAIL_RULES
from keyrate_app.exceptions import ConfigError, KeyRateError, ParameterError
from keyrate_app.keyrate_service import DEFAULT_GRID, METHODS, MODES, KeyRateService, SweepOptions
from keyrate_app.params import load_config
from keyrate_app.reporting import RunManifest, write_report_yaml, write_sweep_csv

logger = logging.getLogger(__name__)


def parse_range(text, name='range'):
    """START:STOP:STEP, inclusive of STOP when it lies on the step lattice."""
    try:
        start, stop, step = (float(part) for part in text.split(':'))
    except ValueError:
        raise ParameterError(f"{name} must look like START:STOP:STEP, got {text!r}")
    if step <= 0 or stop < start:
        raise ParameterError(f"{name} {text!r}: need STEP > 0 and STOP >= START")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(count)]


class Command(BaseCommand):
    help = 'Sweep the optimised secret-key rate over distance and write a CSV'

    def add_arguments(self, parser):
        parser.add_argument(
            '--config',
            type=str,
            default=os.path.join(settings.KEYRATE_CONFIG_DIR, 'baseline.env'),
            help='Experiment configuration file (default: configs/baseline.env)'
        )
        parser.add_argument('--mode', choices=MODES, default='asymptotic')
        parser.add_argument(
            '--distances',
            type=str,
            default='0:220:10',
            help='Total Alice-Bob distance in km as START:STOP:STEP (default: 0:220:10)'
        )
        parser.add_argument('--mc', type=float, help='Override the mean photon number M_c at Charlie')
        parser.add_argument('--out', type=str, help='CSV output path (default: standard output)')
        parser.add_argument(
            '--trusted-baseline',
            action='store_true',
            help='Also compute the trusted-source rate for the rate_trusted column'
        )
        parser.add_argument(
            '--jobs',
            type=int,
            default=settings.KEYRATE_DEFAULT_JOBS,
            help='Worker processes for the sweep'
        )
        parser.add_argument('--celery', action='store_true', help='Dispatch one Celery task per distance')
        parser.add_argument('--method', choices=METHODS, default='lp')
        parser.add_argument('--grid', type=str, help='Signal-intensity grid as START:STOP:STEP')
        parser.add_argument('--no-refine', action='store_true', help='Skip the refinement pass around the best mu')
        parser.add_argument(
            '--tail-rule',
            choices=TAIL_RULES,
            default='window',
            help='Bound on photon-number mass outside S_cut used by the lower-side LP rows'
        )
        parser.add_argument('--report', type=str, help='Write per-distance decoy diagnostics as YAML')
        parser.add_argument('--dump-lp', type=str, metavar='DIR', help='Write the decoy LPs at the optimal mu')

    def handle(self, *args, **options):
        try:
            params = load_config(options['config'])
            if options.get('mc') is not None:
                params = dataclasses.replace(params, m_c=options['mc'])
            distances = parse_range(options['distances'], 'distances')
            grid = tuple(parse_range(options['grid'], 'grid')) if options.get('grid') else DEFAULT_GRID
            sweep_options = SweepOptions(
                mode=options['mode'],
                method=options['method'],
                grid=grid,
                refine=not options['no_refine'],
                trusted_baseline=options['trusted_baseline'],
                tail_rule=options['tail_rule'],
            )
        except (ConfigError, ParameterError) as e:
            raise CommandError(f"Configuration error: {e}", returncode=1)

        manifest = RunManifest(
            config_path=options['config'],
            command='sweep',
            distance_range=options['distances'],
            mode=options['mode'],
            output_path=options.get('out') or '-',
            options={
                'method': options['method'],
                'grid': options.get('grid') or 'default',
                'refine': not options['no_refine'],
                'trusted_baseline': options['trusted_baseline'],
                'tail_rule': options['tail_rule'],
                'm_c': params.m_c,
            },
        )

        backend = 'celery' if options['celery'] else 'local'
        self.stderr.write(f"Sweeping {len(distances)} distances ({options['mode']}, {options['method']})")
        try:
            points = KeyRateService.sweep(params, distances, sweep_options, jobs=options['jobs'], backend=backend)
        except Exception as e:
            logger.error(f"Sweep failed: {e}", exc_info=True)
            raise CommandError(f"Sweep failed: {e}", returncode=2)

        try:
            if options.get('out'):
                write_sweep_csv(points, options['out'], manifest)
                self.stderr.write(self.style.SUCCESS(f"✓ Wrote {len(points)} rows to {options['out']}"))
            else:
                buffer = io.StringIO()
                write_sweep_csv(points, buffer, manifest)
                self.stdout.write(buffer.getvalue(), ending='')

            if options.get('report'):
                write_report_yaml(points, options['report'], manifest)
                self.stderr.write(self.style.SUCCESS(f"✓ Wrote diagnostics to {options['report']}"))

            if options.get('dump_lp'):
                self._dump_programs(params, points, sweep_options, Path(options['dump_lp']))
        except (OSError, KeyRateError) as e:
            logger.error(f"Writing sweep output failed: {e}", exc_info=True)
            raise CommandError(f"Writing output failed: {e}", returncode=2)

        positive = sum(1 for point in points if point.rate_untrusted > 0)
        self.stderr.write(self.style.SUCCESS(f"Sweep complete: {positive}/{len(points)} distances with a positive key"))

    def _dump_programs(self, params, points, sweep_options, directory):
        directory.mkdir(parents=True, exist_ok=True)
        written = 0
        for point in points:
            at_mu = dataclasses.replace(params, mu=point.mu_opt)
            for name, lp in KeyRateService.decoy_programs(at_mu, point.distance_km, sweep_options).items():
                path = directory / f"{point.distance_km:g}km_{name}.lp"
                path.write_text(lp.to_text(), encoding='utf-8')
                written += 1
        self.stderr.write(f"Wrote {written} linear programs to {directory}")
