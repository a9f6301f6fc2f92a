import dataclasses

from django.test import SimpleTestCase

from keyrate_app.channel_model import expected_observables, true_untagged_yields
from keyrate_app.decoy_estimator import (
    check_poisson_regime, decoy_programs, estimate_analytical, estimate_lp, poisson_weighted_intervals,
    single_photon_error,
)
from keyrate_app.exceptions import EstimationError, ParameterError
from keyrate_app.observable_bounds import (
    BoundedObservable, ObservableIntervals, finite_key_deviation, point_intervals, untagged_intervals,
)
from keyrate_app.params import INTENSITY_LABELS, derive_side_params
from keyrate_app.pnd_bounds import PndBounds, intensity_pnd_bounds, pnd_bounds
from keyrate_app.source_monitor import MonitorModel, untagged_stats

from .factories import baseline_params


def pipeline_inputs(p, distance, trusted, mode='asymptotic'):
    observables = expected_observables(p, distance, with_yields=False).observables
    if mode == 'finite':
        intervals = finite_key_deviation(observables, p.epsilon_sec)
    else:
        intervals = point_intervals(observables)
    if trusted:
        return intervals, intensity_pnd_bounds(p, None, trusted=True)
    side = derive_side_params(p, distance)
    stats = untagged_stats(
        MonitorModel.from_params(p, side), p.tau_conf, p.k_pulses, asymptotic=(mode == 'asymptotic'),
    )
    fractions = {label: stats.fraction_for(gamma) for label, gamma in p.intensities.items()}
    return untagged_intervals(intervals, fractions, fractions), intensity_pnd_bounds(p, side)


def constant_yield_intervals(pnd, yield_, s_cut=(7, 7)):
    """Observables of yields equal to ``yield_`` inside S_cut and zero outside."""
    a_cut, b_cut = s_cut
    gains, error_gains = {}, {}
    for a in INTENSITY_LABELS:
        for b in INTENSITY_LABELS:
            mass = sum(pnd[a].p_upper(i) * pnd[b].p_upper(j) for i in range(a_cut + 1) for j in range(b_cut + 1))
            for basis in ('Z', 'X'):
                gains[(a, b, basis)] = BoundedObservable.point(yield_ * mass)
                error_gains[(a, b, basis)] = BoundedObservable.point(0.0)
    return ObservableIntervals(gains, error_gains)


class EstimateLpTest(SimpleTestCase):

    def test_sound_against_true_yields(self):
        p = baseline_params()
        for distance in (10.0, 50.0, 100.0):
            truth = true_untagged_yields(p, distance)
            s11_z = truth[(1, 1, 'Z')].yield_
            e11_x = truth[(1, 1, 'X')].qber
            for trusted in (True, False):
                intervals, pnd = pipeline_inputs(p, distance, trusted)
                bounds = estimate_lp(intervals, pnd, pnd, p.s_cut)
                self.assertLessEqual(bounds.s11_z_lower, s11_z * (1 + 1e-9))
                if distance <= 50.0:
                    self.assertGreater(bounds.s11_z_lower, 0.0)
                self.assertGreaterEqual(bounds.e11_x_upper, e11_x * (1 - 1e-9))

    def test_untrusted_never_tighter_than_trusted(self):
        p = baseline_params()
        trusted = estimate_lp(*self._args(p, 50.0, True))
        untrusted = estimate_lp(*self._args(p, 50.0, False))
        self.assertLessEqual(untrusted.s11_z_lower, trusted.s11_z_lower * (1 + 1e-9))
        self.assertGreaterEqual(untrusted.e11_x_upper, trusted.e11_x_upper * (1 - 1e-9))

    def _args(self, p, distance, trusted):
        intervals, pnd = pipeline_inputs(p, distance, trusted)
        return intervals, pnd, pnd, p.s_cut

    def test_tight_for_unit_yields(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        bounds = estimate_lp(constant_yield_intervals(pnd, 1.0), pnd, pnd, (7, 7))
        self.assertAlmostEqual(bounds.s11_z_lower, 1.0, delta=1e-6)
        self.assertAlmostEqual(bounds.e11_x_upper, 0.0, places=9)

    def test_tight_for_zero_yields(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        bounds = estimate_lp(constant_yield_intervals(pnd, 0.0), pnd, pnd, (7, 7))
        self.assertAlmostEqual(bounds.s11_z_lower, 0.0, delta=1e-12)
        self.assertEqual(bounds.e11_x_upper, 0.0)
        self.assertEqual(bounds.q11_z_lower, 0.0)

    def test_inconsistent_observables(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        intervals = constant_yield_intervals(pnd, 0.0)
        intervals.gains[('mu', 'mu', 'Z')] = BoundedObservable.point(0.9)
        with self.assertRaises(EstimationError) as ctx:
            estimate_lp(intervals, pnd, pnd, (7, 7))
        self.assertIn('inconsistent with PND bounds', str(ctx.exception))

    def test_s_cut_too_small(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        with self.assertRaises(ParameterError):
            estimate_lp(constant_yield_intervals(pnd, 0.5), pnd, pnd, (1, 7))

    def test_unknown_tail_rule(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        with self.assertRaises(ParameterError):
            estimate_lp(constant_yield_intervals(pnd, 0.5), pnd, pnd, (7, 7), tail_rule='none')

    def test_s_cut_enlargement_is_stable(self):
        p = baseline_params()
        small = estimate_lp(*self._args(p, 50.0, True))
        wide_params = dataclasses.replace(p, a_cut=9, b_cut=9)
        wide = estimate_lp(*self._args(wide_params, 50.0, True))
        self.assertAlmostEqual(wide.s11_z_lower / small.s11_z_lower, 1.0, delta=1e-4)
        self.assertAlmostEqual(wide.e11_x_upper / small.e11_x_upper, 1.0, delta=1e-4)

    def test_diagnostics_and_programs(self):
        p = baseline_params()
        intervals, pnd = pipeline_inputs(p, 50.0, False)
        bounds = estimate_lp(intervals, pnd, pnd, p.s_cut, keep_programs=True)
        self.assertEqual(set(bounds.programs), {'s11_z_min', 's11_x_min', 'se11_x_max'})
        self.assertEqual(bounds.programs['s11_z_min'].n_vars, 64)
        self.assertTrue(bounds.diagnostics)
        report = bounds.report()
        self.assertEqual(report['method'], 'lp')
        entry = report['active_constraints'][0]
        self.assertIn(entry['side'], ('upper', 'lower'))
        self.assertIn(entry['coefficient_endpoint'], ('upper', 'lower'))
        self.assertIsInstance(entry['slack'], float)

    def test_decoy_programs_names(self):
        pnd = intensity_pnd_bounds(baseline_params(), None, trusted=True)
        programs = decoy_programs(constant_yield_intervals(pnd, 0.3), pnd, pnd, (7, 7))
        self.assertEqual(programs['se11_x_max'][0].sense, 'max')
        self.assertEqual(programs['s11_z_min'][2], 'Z')


class EstimateAnalyticalTest(SimpleTestCase):

    def test_sound_in_trusted_limit(self):
        p = baseline_params()
        for distance in (0.0, 50.0, 100.0, 150.0):
            truth = true_untagged_yields(p, distance)
            intervals = point_intervals(expected_observables(p, distance, with_yields=False).observables)
            bounds = estimate_analytical(intervals, p.intensities)
            self.assertLessEqual(bounds.s11_z_lower, truth[(1, 1, 'Z')].yield_)
            self.assertGreaterEqual(bounds.e11_x_upper, truth[(1, 1, 'X')].qber)

    def test_perfect_channel(self):
        errors = []
        for nu in (0.01, 0.001):
            p = baseline_params(y0=0.0, e_d=0.0, nu=nu)
            intervals = point_intervals(expected_observables(p, 20.0, with_yields=False).observables)
            bounds = estimate_analytical(intervals, p.intensities)
            self.assertGreater(bounds.s11_z_lower, 0.0)
            errors.append(bounds.e11_x_upper)
        self.assertLess(errors[1], errors[0] / 2)
        self.assertLess(errors[1], 0.05)

    def test_degenerate_intensities(self):
        intervals = point_intervals(expected_observables(baseline_params(), 20.0, with_yields=False).observables)
        with self.assertRaises(ParameterError):
            estimate_analytical(intervals, {'mu': 0.3, 'nu': 0.3, 'omega': 0.0})

    def test_poisson_regime_warning(self):
        far_from_poisson = {'mu': pnd_bounds(20, 0.01, 0.015, 8)}
        with self.assertLogs('keyrate_app.decoy_estimator', level='WARNING'):
            self.assertFalse(check_poisson_regime({'a': far_from_poisson}))
        p = baseline_params()
        pnd = intensity_pnd_bounds(p, derive_side_params(p, 50.0))
        self.assertTrue(check_poisson_regime({'a': pnd, 'b': pnd}))
        self.assertTrue(check_poisson_regime({'a': {'mu': PndBounds.poisson(0.3, 8)}}))


class LpDominanceTest(SimpleTestCase):
    """The LP bounds are never looser than the closed forms on the same inputs."""

    def assert_dominates(self, p, distance, trusted, mode):
        intervals, pnd = pipeline_inputs(p, distance, trusted, mode)
        lp = estimate_lp(intervals, pnd, pnd, p.s_cut)
        analytical = estimate_analytical(intervals, p.intensities, pnd={'a': pnd, 'b': pnd}, s_cut=p.s_cut)
        label = f"{mode} {'trusted' if trusted else 'untrusted'} {distance} km"
        self.assertGreaterEqual(lp.s11_z_lower, analytical.s11_z_lower * (1 - 1e-6) - 1e-12, label)
        self.assertGreaterEqual(lp.s11_x_lower, analytical.s11_x_lower * (1 - 1e-6) - 1e-12, label)
        self.assertLessEqual(lp.se11_x_upper, analytical.se11_x_upper * (1 + 1e-6) + 1e-12, label)

    def test_asymptotic_distance_grid(self):
        p = baseline_params()
        for distance in (0.0, 50.0, 100.0, 150.0, 190.0):
            for trusted in (True, False):
                self.assert_dominates(p, distance, trusted, 'asymptotic')

    def test_finite_distance_grid(self):
        p = baseline_params()
        for distance in (0.0, 30.0, 60.0):
            for trusted in (True, False):
                self.assert_dominates(p, distance, trusted, 'finite')

    def test_other_signal_intensities(self):
        for mu in (0.2, 0.6, 0.9):
            self.assert_dominates(baseline_params(mu=mu), 50.0, False, 'asymptotic')


class PoissonWeightedIntervalsTest(SimpleTestCase):

    def test_poisson_envelopes_keep_the_interval(self):
        p = baseline_params()
        intervals, pnd = pipeline_inputs(p, 50.0, True)
        converted = poisson_weighted_intervals(intervals, pnd, pnd, p.intensities, p.s_cut)
        for key, bound in intervals.gains.items():
            self.assertTrue(converted.gains[key].contains(bound.lower, tol=1e-12), key)
            self.assertLess(converted.gains[key].width, 1e-6, key)

    def test_windowed_envelopes_widen_the_interval(self):
        p = baseline_params()
        intervals, pnd = pipeline_inputs(p, 50.0, False)
        converted = poisson_weighted_intervals(intervals, pnd, pnd, p.intensities, p.s_cut)
        signal = converted.gain('mu', 'mu', 'Z')
        self.assertGreater(signal.width, 0.0)
        self.assertTrue(signal.contains(intervals.gain('mu', 'mu', 'Z').lower))
        self.assertGreaterEqual(signal.lower, 0.0)
        self.assertLessEqual(signal.upper, 1.0)

    def test_analytical_uses_window_when_envelopes_given(self):
        p = baseline_params()
        intervals, pnd = pipeline_inputs(p, 50.0, False)
        nominal = estimate_analytical(intervals, p.intensities)
        windowed = estimate_analytical(intervals, p.intensities, pnd={'a': pnd, 'b': pnd}, s_cut=p.s_cut)
        self.assertLess(windowed.s11_z_lower, nominal.s11_z_lower)
        self.assertGreater(windowed.se11_x_upper, nominal.se11_x_upper)


class SinglePhotonErrorTest(SimpleTestCase):

    def test_zero_gain_convention(self):
        self.assertEqual(single_photon_error(0.0, 0.0), 0.0)
        self.assertEqual(single_photon_error(1e-6, 0.0), 0.5)
        self.assertEqual(single_photon_error(0.2, 0.1), 1.0)
        self.assertAlmostEqual(single_photon_error(0.01, 0.2), 0.05)
