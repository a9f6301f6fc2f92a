import os
import tempfile
from io import StringIO
from unittest import mock

import pandas as pd
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from keyrate_app.exceptions import ParameterError
from keyrate_app.keyrate_service import CSV_COLUMNS
from keyrate_app.management.commands.sweep import parse_range
from keyrate_app.management.commands.validate import sample_count
from keyrate_app.reporting import read_manifest
from keyrate_app.validation_service import FAIL, PASS, SuiteResult

from .factories import BASELINE_PATH, BASELINE_TEXT, write_config

FAST_SWEEP = ['--grid', '0.2:0.4:0.1', '--no-refine', '--jobs', '1']


class ParseRangeTest(SimpleTestCase):

    def test_default_distance_range(self):
        distances = parse_range('0:220:10')
        self.assertEqual(len(distances), 23)
        self.assertEqual(distances[-1], 220.0)

    def test_fractional_step(self):
        self.assertEqual(parse_range('0.2:0.4:0.1'), [0.2, 0.3, 0.4])

    def test_invalid(self):
        for text in ('0:10', '10:0:1', '0:10:0', 'a:b:c'):
            with self.assertRaises(ParameterError):
                parse_range(text)

    def test_sample_count(self):
        self.assertEqual(sample_count('2e5'), 200_000)
        with self.assertRaises(ValueError):
            sample_count('1.5')


class SweepCommandTest(SimpleTestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_csv_on_stdout(self):
        out, err = StringIO(), StringIO()
        call_command('sweep', '--distances', '0:20:10', *FAST_SWEEP, stdout=out, stderr=err)
        lines = out.getvalue().splitlines()
        self.assertTrue(lines[0].startswith('# config_path: '))
        self.assertIn('# output_path: -', lines)
        rows = [line for line in lines if not line.startswith('#')]
        self.assertEqual(rows[0], ','.join(CSV_COLUMNS))
        self.assertEqual(len(rows), 4)
        self.assertIn('Sweep complete: 3/3', err.getvalue())

    def test_file_outputs(self):
        out_path = os.path.join(self.tmp.name, 'sweep.csv')
        report = os.path.join(self.tmp.name, 'report.yaml')
        dump = os.path.join(self.tmp.name, 'lp')
        call_command(
            'sweep', '--distances', '10:10:10', *FAST_SWEEP, '--trusted-baseline',
            '--out', out_path, '--report', report, '--dump-lp', dump,
            stdout=StringIO(), stderr=StringIO(),
        )
        frame = pd.read_csv(out_path, comment='#')
        self.assertEqual(len(frame), 1)
        self.assertLessEqual(frame['rate_untrusted'][0], frame['rate_trusted'][0] * (1 + 1e-9))
        manifest = read_manifest(out_path)
        self.assertEqual(manifest['option.trusted_baseline'], 'True')
        self.assertEqual(manifest['option.grid'], '0.2:0.4:0.1')
        self.assertTrue(os.path.exists(report))
        self.assertEqual(
            sorted(os.listdir(dump)),
            ['10km_s11_x_min.lp', '10km_s11_z_min.lp', '10km_se11_x_max.lp'],
        )

    def test_rerun_is_byte_identical(self):
        paths = [os.path.join(self.tmp.name, name) for name in ('a.csv', 'b.csv')]
        for path in paths:
            call_command('sweep', '--distances', '0:10:10', *FAST_SWEEP, '--out', path,
                         stdout=StringIO(), stderr=StringIO())
        with open(paths[0], 'rb') as a, open(paths[1], 'rb') as b:
            self.assertEqual(a.read().replace(b'a.csv', b'b.csv'), b.read())

    def test_mc_override_in_manifest(self):
        out = StringIO()
        call_command('sweep', '--distances', '0:0:10', '--mc', '1e8', *FAST_SWEEP, stdout=out, stderr=StringIO())
        self.assertIn('# option.m_c: 100000000.0', out.getvalue().splitlines())

    def test_invalid_config_exits_with_one(self):
        path = write_config(self.tmp.name, BASELINE_TEXT.replace('q=0.01', 'q=1.5'))
        with self.assertRaises(CommandError) as ctx:
            call_command('sweep', '--config', path, '--distances', '0:10:10', stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertIn('monitor tap', str(ctx.exception))

    def test_bad_range_exits_with_one(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('sweep', '--distances', '0-200', stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)

    def test_runtime_failure_exits_with_two(self):
        with mock.patch('keyrate_app.keyrate_service.KeyRateService.sweep', side_effect=RuntimeError('boom')):
            with self.assertRaises(CommandError) as ctx:
                call_command('sweep', '--distances', '0:10:10', stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)


class ValidateCommandTest(SimpleTestCase):

    def test_insufficient_statistics_does_not_fail(self):
        out = StringIO()
        call_command('validate', '--samples', '1e3', stdout=out)
        text = out.getvalue()
        self.assertIn('insufficient statistics', text)
        self.assertIn('All validation suites passed', text)
        for suite in ('hoeffding', 'poisson_limit', 'lp_vertex', 'tagged_ratio'):
            self.assertIn(suite, text)

    def test_failure_exits_with_three(self):
        failing = [SuiteResult('hoeffding', PASS, '6/6'), SuiteResult('lp_vertex', FAIL, '24/25')]
        with mock.patch('keyrate_app.validation_service.ValidationService.run_all', return_value=failing):
            with self.assertRaises(CommandError) as ctx:
                call_command('validate', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 3)
        self.assertIn('lp_vertex', str(ctx.exception))

    def test_export_fixtures(self):
        with tempfile.TemporaryDirectory() as tmp:
            call_command('validate', '--samples', '1e3', '--seed', '4', '--export-fixtures', tmp, stdout=StringIO())
            exported = sorted(os.listdir(tmp))
            self.assertEqual(exported, ['hoeffding.csv', 'lp_vertex.csv', 'poisson_limit.csv', 'tagged_ratio.csv'])
            manifest = read_manifest(os.path.join(tmp, 'lp_vertex.csv'))
        self.assertEqual(manifest['seed'], '4')
        self.assertEqual(manifest['option.suite'], 'lp_vertex')

    def test_missing_config_exits_with_one(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('validate', '--config', BASELINE_PATH + '.missing', stdout=StringIO())
        self.assertEqual(ctx.exception.returncode, 1)
