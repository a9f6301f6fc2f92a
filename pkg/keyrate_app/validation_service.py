# ValidationService - oracle suites behind the validate command

import dataclasses
import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .channel_model import coherent_observable, z_basis_oracle
from .lp_solver import LinearProgram, solve
from .params import side_transmittance
from .photon_stats import poisson_limit_distance
from .source_monitor import MonitorModel, simulate_sampling_violation, simulate_tagged_fraction, tagged_ratio

logger = logging.getLogger(__name__)

PASS = 'pass'
FAIL = 'fail'
INSUFFICIENT = 'insufficient statistics'

MIN_ORACLE_SAMPLES = 10_000
MIN_EXPECTED_EVENTS = 100
ORACLE_SIGMAS = 3.0
ORACLE_PASS_FRACTION = 0.95
ORACLE_SEEDS = 10
LP_FIXTURES = 25
LP_TOL = 1e-8


@dataclass
class SuiteResult:
    name: str
    status: str
    detail: str = ''
    rows: list = field(default_factory=list)

    @property
    def passed(self):
        return self.status != FAIL


def _enumerate_vertices(lp):
    """Exact optimum of a small bounded LP by trying every basis of active hyperplanes."""
    n = lp.n_vars
    planes = []
    for c in lp.constraints:
        for limit in (c.lower, c.upper):
            if math.isfinite(limit):
                planes.append((c.coefficients, limit))
    for j, (lo, hi) in enumerate(lp.bounds):
        unit = np.zeros(n)
        unit[j] = 1.0
        planes.append((unit, lo))
        planes.append((unit, hi))

    best = None
    sign = 1.0 if lp.sense == 'min' else -1.0
    for chosen in itertools.combinations(planes, n):
        matrix = np.array([p[0] for p in chosen])
        if abs(np.linalg.det(matrix)) < 1e-10:
            continue
        x = np.linalg.solve(matrix, np.array([p[1] for p in chosen]))
        lo = np.array([b[0] for b in lp.bounds])
        hi = np.array([b[1] for b in lp.bounds])
        if np.any(x < lo - 1e-9) or np.any(x > hi + 1e-9):
            continue
        if any(not (c.lower - 1e-9 <= c.coefficients @ x <= c.upper + 1e-9) for c in lp.constraints):
            continue
        value = float(lp.objective @ x)
        if best is None or sign * value < sign * best:
            best = value
    return best


def random_lp_fixture(rng, index):
    """A feasible box-bounded LP with 2-5 variables and 1-4 two-sided rows."""
    n = int(rng.integers(2, 6))
    m = int(rng.integers(1, 5))
    upper = rng.uniform(0.5, 2.0, size=n)
    interior = rng.uniform(0.1, 0.9, size=n) * upper
    lp = LinearProgram(
        objective=rng.uniform(-1.0, 1.0, size=n),
        sense='min' if index % 2 == 0 else 'max',
        bounds=[(0.0, float(u)) for u in upper],
        name=f"fixture_{index}",
    )
    for _ in range(m):
        coefficients = rng.uniform(-1.0, 1.0, size=n)
        activity = float(coefficients @ interior)
        lower = activity - rng.uniform(0.05, 0.5) if rng.random() < 0.7 else -math.inf
        upper_limit = activity + rng.uniform(0.05, 0.5) if rng.random() < 0.7 else math.inf
        lp.add_constraint(coefficients, lower, upper_limit)
    return lp


class ValidationService:

    @staticmethod
    def hoeffding(seed, n_trials=100_000, k=10_000):
        rows, failures = [], 0
        for beta in (0.5, 0.25):
            for epsilon in (0.01, 0.02, 0.05):
                frequency, bound = simulate_sampling_violation(k, epsilon, beta, n_trials, seed)
                ok = frequency <= bound
                failures += not ok
                rows.append({'k': k, 'epsilon': epsilon, 'beta': beta, 'frequency': frequency, 'bound': bound, 'ok': ok})
        status = PASS if failures == 0 else FAIL
        return SuiteResult('hoeffding', status, f"{len(rows) - failures}/{len(rows)} within bound", rows)

    @staticmethod
    def poisson_limit():
        inside = poisson_limit_distance(1_000_000, 1e-7)
        outside = poisson_limit_distance(10, 0.5)
        ok = inside < 1e-6 and outside > 0.01
        rows = [
            {'m': 1_000_000, 'p': 1e-7, 'distance': inside, 'requirement': '< 1e-6'},
            {'m': 10, 'p': 0.5, 'distance': outside, 'requirement': '> 0.01'},
        ]
        return SuiteResult('poisson_limit', PASS if ok else FAIL, f"{inside:.3e} / {outside:.3e}", rows)

    @staticmethod
    def lp_vertex(seed, n_fixtures=LP_FIXTURES):
        rng = np.random.default_rng(seed)
        rows, failures = [], 0
        for index in range(n_fixtures):
            lp = random_lp_fixture(rng, index)
            result = solve(lp)
            exact = _enumerate_vertices(lp)
            ok = result.is_optimal and exact is not None and abs(result.objective - exact) <= LP_TOL
            failures += not ok
            rows.append({
                'fixture': lp.name, 'n_vars': lp.n_vars, 'n_rows': len(lp.constraints), 'sense': lp.sense,
                'status': result.status, 'simplex': result.objective, 'enumeration': exact, 'ok': ok,
            })
        status = PASS if failures == 0 else FAIL
        return SuiteResult('lp_vertex', status, f"{n_fixtures - failures}/{n_fixtures} match enumeration", rows)

    @staticmethod
    def oracle_settings(p):
        """(label, params, gamma_a, gamma_b, distance_km) checked against the oracle."""
        noisy = dataclasses.replace(p, y0=1e-2, e_d=0.05)
        return (
            ('signal_pair_0km', p, 0.5, 0.5, 0.0),
            ('mixed_pair_10km', p, 0.5, 0.3, 10.0),
            ('noisy_detector_0km', noisy, 0.3, 0.3, 0.0),
        )

    @staticmethod
    def channel_oracle(p, seed, n_samples):
        cases = ValidationService.oracle_settings(p)
        if n_samples < MIN_ORACLE_SAMPLES:
            return SuiteResult('channel_oracle', INSUFFICIENT, f"{n_samples} samples < {MIN_ORACLE_SAMPLES}")

        expected = {}
        for label, params, gamma_a, gamma_b, distance in cases:
            eta = params.eta_d * side_transmittance(params, distance)
            expected[label] = coherent_observable(params, gamma_a, gamma_b, 'Z', eta).gain
            if n_samples * expected[label] < MIN_EXPECTED_EVENTS:
                return SuiteResult(
                    'channel_oracle', INSUFFICIENT,
                    f"{label}: {n_samples * expected[label]:.1f} expected events < {MIN_EXPECTED_EVENTS}",
                )

        rows, inside = [], 0
        for label, params, gamma_a, gamma_b, distance in cases:
            gain = expected[label]
            sigma = math.sqrt(gain * (1.0 - gain) / n_samples)
            for offset in range(ORACLE_SEEDS):
                result = z_basis_oracle(params, gamma_a, gamma_b, distance, n_samples, seed + offset)
                ok = abs(result.gain - gain) <= ORACLE_SIGMAS * sigma
                inside += ok
                rows.append({
                    'setting': label, 'seed': seed + offset, 'samples': n_samples, 'expected_gain': gain,
                    'oracle_gain': result.gain, 'oracle_qber': result.qber, 'stderr': sigma, 'ok': ok,
                })
        fraction = inside / len(rows)
        status = PASS if fraction >= ORACLE_PASS_FRACTION else FAIL
        return SuiteResult('channel_oracle', status, f"{inside}/{len(rows)} within {ORACLE_SIGMAS:g} sigma", rows)

    @staticmethod
    def tagged_ratio(seed, n_samples=200_000):
        model = MonitorModel(m_mean=1e6, eta_id=0.7, sigma_id=500.0, q=0.01, delta=0.002)
        expected = tagged_ratio(model)
        frequency, stderr = simulate_tagged_fraction(model, n_samples, seed)
        ok = abs(frequency - expected) <= 4.0 * stderr
        rows = [{'m_mean': model.m_mean, 'sigma_id': model.sigma_id, 'delta': model.delta,
                 'expected': expected, 'monte_carlo': frequency, 'stderr': stderr, 'ok': ok}]
        return SuiteResult('tagged_ratio', PASS if ok else FAIL, f"{frequency:.5f} vs {expected:.5f}", rows)

    @staticmethod
    def run_all(p, seed=0, n_samples=200_000):
        suites = [
            ('hoeffding', lambda: ValidationService.hoeffding(seed)),
            ('poisson_limit', ValidationService.poisson_limit),
            ('lp_vertex', lambda: ValidationService.lp_vertex(seed)),
            ('channel_oracle', lambda: ValidationService.channel_oracle(p, seed, n_samples)),
            ('tagged_ratio', lambda: ValidationService.tagged_ratio(seed)),
        ]
        results = []
        for name, run in suites:
            try:
                result = run()
            except Exception as e:
                logger.error(f"Validation suite {name} crashed: {e}", exc_info=True)
                result = SuiteResult(name, FAIL, f"error: {e}")
            logger.info(f"Suite {name}: {result.status} ({result.detail})")
            results.append(result)
        return results
