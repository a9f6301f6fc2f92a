import numpy as np
from django.test import SimpleTestCase

from keyrate_app.lp_solver import LinearProgram
from keyrate_app.validation_service import (
    FAIL, INSUFFICIENT, PASS, SuiteResult, ValidationService, _enumerate_vertices, random_lp_fixture,
)

from .factories import baseline_params


class VertexEnumerationTest(SimpleTestCase):

    def test_known_optimum(self):
        lp = LinearProgram(objective=[-1.0, -2.0], bounds=[(0.0, 1.0), (0.0, 1.0)])
        lp.add_constraint([1.0, 1.0], upper=1.5)
        self.assertAlmostEqual(_enumerate_vertices(lp), -2.5, places=12)

    def test_infeasible_has_no_vertex(self):
        lp = LinearProgram(objective=[1.0], bounds=[(0.0, 1.0)])
        lp.add_constraint([1.0], lower=2.0)
        self.assertIsNone(_enumerate_vertices(lp))

    def test_fixtures_are_reproducible(self):
        first = random_lp_fixture(np.random.default_rng(3), 4)
        second = random_lp_fixture(np.random.default_rng(3), 4)
        np.testing.assert_array_equal(first.objective, second.objective)
        self.assertEqual(first.sense, 'min')
        self.assertEqual(random_lp_fixture(np.random.default_rng(3), 5).sense, 'max')


class SuiteTest(SimpleTestCase):

    def test_hoeffding(self):
        result = ValidationService.hoeffding(seed=0, n_trials=20_000)
        self.assertEqual(result.status, PASS)
        self.assertEqual(len(result.rows), 6)

    def test_poisson_limit(self):
        self.assertTrue(ValidationService.poisson_limit().passed)

    def test_lp_vertex(self):
        result = ValidationService.lp_vertex(seed=1, n_fixtures=10)
        self.assertEqual(result.status, PASS, result.detail)
        self.assertEqual(result.detail, '10/10 match enumeration')

    def test_channel_oracle_needs_samples(self):
        result = ValidationService.channel_oracle(baseline_params(), seed=0, n_samples=1_000)
        self.assertEqual(result.status, INSUFFICIENT)
        self.assertFalse(result.rows)

    def test_channel_oracle(self):
        result = ValidationService.channel_oracle(baseline_params(), seed=0, n_samples=200_000)
        self.assertEqual(result.status, PASS, result.detail)
        self.assertEqual(len(result.rows), 30)

    def test_tagged_ratio(self):
        self.assertEqual(ValidationService.tagged_ratio(seed=0, n_samples=100_000).status, PASS)

    def test_crashing_suite_is_reported(self):
        with self.assertLogs('keyrate_app.validation_service', level='ERROR'):
            results = ValidationService.run_all(None, seed=0, n_samples=50_000)
        by_name = {result.name: result for result in results}
        self.assertEqual(by_name['channel_oracle'].status, FAIL)
        self.assertTrue(by_name['channel_oracle'].detail.startswith('error: '))
        self.assertTrue(by_name['lp_vertex'].passed)

    def test_suite_result(self):
        self.assertFalse(SuiteResult('x', INSUFFICIENT).passed)
