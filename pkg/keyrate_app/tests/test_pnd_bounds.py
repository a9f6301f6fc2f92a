import math

from django.test import SimpleTestCase

from keyrate_app.exceptions import ParameterError
from keyrate_app.params import derive_side_params
from keyrate_app.photon_stats import binomial_pmf, poisson_pmf
from keyrate_app.pnd_bounds import PndBounds, intensity_pnd_bounds, pnd_bounds

from .factories import baseline_params


class PndBoundsTest(SimpleTestCase):

    def test_collapsed_window_is_binomial(self):
        bounds = pnd_bounds(1000, 0.0, 1e-4, 6)
        self.assertEqual(bounds.window, (1000, 1000))
        for n in range(7):
            self.assertAlmostEqual(bounds.p_upper(n), binomial_pmf(n, 1000, 1e-4), delta=1e-14)
            self.assertEqual(bounds.p_upper(n), bounds.p_lower(n))

    def test_dark_input(self):
        bounds = pnd_bounds(1e6, 0.01, 0.0, 5)
        self.assertEqual(bounds.p_upper(0), 1.0)
        self.assertEqual(bounds.p_lower(0), 1.0)
        for n in range(1, 6):
            self.assertEqual(bounds.p_upper(n), 0.0)
        self.assertEqual(bounds.tail_mass(3), 0.0)

    def test_envelopes_hold_over_whole_window(self):
        bounds = pnd_bounds(1000, 0.01, 1e-4, 8)
        m_lo, m_hi = bounds.window
        self.assertEqual((m_lo, m_hi), (990, 1010))
        for m in range(m_lo, m_hi + 1):
            for n in range(9):
                value = binomial_pmf(n, m, 1e-4)
                self.assertLessEqual(bounds.p_lower(n), value * (1 + 1e-12))
                self.assertLessEqual(value, bounds.p_upper(n) * (1 + 1e-12))

    def test_brackets_poisson_at_monitor_scale(self):
        bounds = pnd_bounds(1e7, 0.01, 1e-8, 6)
        target = poisson_pmf(1, 0.1)
        self.assertLess(bounds.p_lower(1), target)
        self.assertGreater(bounds.p_upper(1), target)
        self.assertGreater(bounds.p_lower(1), poisson_pmf(1, 0.099) * 0.999)
        self.assertLess(bounds.p_upper(1), poisson_pmf(1, 0.101) * 1.001)

    def test_beyond_n_max_is_zero(self):
        bounds = pnd_bounds(1e7, 0.01, 1e-8, 4)
        self.assertEqual(bounds.n_max, 4)
        self.assertEqual(bounds.p_upper(9), 0.0)

    def test_tail_mass_bounds_window(self):
        bounds = pnd_bounds(1e6, 0.01, 3e-7, 8)
        tail = bounds.tail_mass(4)
        for m in bounds.window:
            outside = 1.0 - math.fsum(binomial_pmf(n, m, 3e-7) for n in range(5))
            self.assertLessEqual(outside, tail + 1e-15)

    def test_weak_output_condition(self):
        with self.assertRaises(ParameterError) as ctx:
            pnd_bounds(1e6, 0.01, 1e-6, 5)
        self.assertIn('weak-output', str(ctx.exception))

    def test_n_max_too_small(self):
        with self.assertRaises(ParameterError):
            pnd_bounds(1e6, 0.01, 1e-7, 1)


class IntensityPndBoundsTest(SimpleTestCase):

    def test_trusted_is_poisson(self):
        p = baseline_params()
        bounds = intensity_pnd_bounds(p, None, trusted=True)
        self.assertEqual(set(bounds), {'mu', 'nu', 'omega'})
        self.assertAlmostEqual(bounds['mu'].p_upper(1), poisson_pmf(1, 0.3), places=15)
        self.assertEqual(bounds['mu'].p_upper(1), bounds['mu'].p_lower(1))
        self.assertEqual(bounds['omega'].p_lower(0), 1.0)
        self.assertEqual(bounds['mu'].n_max, 8)

    def test_untrusted_per_intensity(self):
        p = baseline_params()
        side = derive_side_params(p, 50.0)
        bounds = intensity_pnd_bounds(p, side)
        for label, gamma in p.intensities.items():
            if gamma == 0.0:
                self.assertEqual(bounds[label].p_lower(0), 1.0)
                continue
            self.assertLess(bounds[label].p_lower(1), poisson_pmf(1, gamma))
            self.assertGreater(bounds[label].p_upper(1), poisson_pmf(1, gamma) * 0.98)

    def test_poisson_factory(self):
        bounds = PndBounds.poisson(0.5, 6)
        self.assertAlmostEqual(bounds.tail_mass(6), 1.0 - sum(poisson_pmf(n, 0.5) for n in range(7)), delta=1e-15)
