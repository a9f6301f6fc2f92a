# KeyRateService - secret-key rate per distance, signal-intensity optimisation and sweeps

import dataclasses
import logging
import math
from dataclasses import dataclass, field

from .channel_model import expected_observables
from .decoy_estimator import estimate_analytical, estimate_lp
from .exceptions import EstimationError, KeyRateError, ParameterError
from .observable_bounds import finite_key_deviation, point_intervals, untagged_intervals
from .params import ExperimentParams, derive_side_params
from .photon_stats import binary_entropy
from .pnd_bounds import intensity_pnd_bounds
from .source_monitor import MonitorModel, UntaggedStats, untagged_stats

logger = logging.getLogger(__name__)

MODES = ('asymptotic', 'finite')
METHODS = ('lp', 'analytical')
DEFAULT_GRID = tuple(round(0.05 * i, 10) for i in range(1, 20))
REFINE_DIVISIONS = 5

CSV_COLUMNS = (
    'distance_km', 'mu_opt', 'rate_untrusted', 'rate_trusted',
    'q11_lower', 'e11_upper', 'delta_frac', 'epsilon_sample',
)


@dataclass(frozen=True)
class SweepOptions:
    mode: str = 'asymptotic'
    method: str = 'lp'
    grid: tuple = DEFAULT_GRID
    refine: bool = True
    trusted_baseline: bool = False
    tail_rule: str = 'window'

    def __post_init__(self):
        if self.mode not in MODES:
            raise ParameterError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if not self.grid:
            raise ParameterError("signal-intensity grid is empty")

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['grid'] = list(self.grid)
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['grid'] = tuple(data['grid'])
        return cls(**data)


@dataclass
class RateEvaluation:
    mu: float
    rate: float
    raw_rate: float
    stats: UntaggedStats
    bounds: object = None
    q_sig: float = 0.0
    e_sig: float = 0.0
    trusted: bool = False
    message: str = ''


@dataclass
class KeyRatePoint:
    distance_km: float
    mu_opt: float
    rate_untrusted: float
    rate_trusted: float = None
    q11_lower: float = 0.0
    e11_upper: float = 0.5
    delta_frac: float = 0.0
    epsilon_sample: float = 0.0
    raw_rate: float = 0.0
    mode: str = 'asymptotic'
    method: str = 'lp'
    throughput_bps: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def as_row(self):
        return {column: getattr(self, column) for column in CSV_COLUMNS}


class KeyRateService:

    @staticmethod
    def key_rate(fa, fb, q11_lower, e11_upper, q_sig, e_sig, f_e):
        """Secret bits per pulse pair; also returns the unclamped value."""
        e11 = min(max(e11_upper, 0.0), 0.5)
        privacy = fa * fb * q11_lower * (1.0 - binary_entropy(e11))
        leakage = q_sig * f_e * binary_entropy(min(max(e_sig, 0.0), 1.0))
        raw = privacy - leakage
        return max(0.0, raw), raw

    @staticmethod
    def evaluate(p, distance_km, mode='asymptotic', method='lp', trusted=False, tail_rule='window',
                 keep_programs=False):
        """Full pipeline at one distance and the signal intensity in ``p``."""
        point = expected_observables(p, distance_km, with_yields=False)
        signal = point.observables.get('mu', 'mu', 'Z')
        q_sig, e_sig = signal.gain, signal.qber

        if mode == 'finite':
            intervals = finite_key_deviation(point.observables, p.epsilon_sec)
        else:
            intervals = point_intervals(point.observables)

        try:
            if trusted:
                stats = UntaggedStats.trusted()
                pnd = intensity_pnd_bounds(p, None, trusted=True)
            else:
                side = derive_side_params(p, distance_km)
                stats = untagged_stats(
                    MonitorModel.from_params(p, side), p.tau_conf, p.k_pulses,
                    asymptotic=(mode == 'asymptotic'),
                )
                pnd = intensity_pnd_bounds(p, side)
        except ParameterError as e:
            logger.warning(f"Operating point mu={p.mu} at {distance_km} km not realisable: {e}")
            return RateEvaluation(p.mu, 0.0, -math.inf, UntaggedStats(1.0, 0.0, p.tau_conf, 0.0),
                                  q_sig=q_sig, e_sig=e_sig, trusted=trusted, message=str(e))

        f = stats.untagged_fraction
        if f <= 0.0:
            logger.debug(f"No untagged pulses at {distance_km} km (delta={stats.delta_frac:.3e})")
            return RateEvaluation(p.mu, 0.0, -math.inf, stats, q_sig=q_sig, e_sig=e_sig, trusted=trusted,
                                  message='no untagged pulses')

        fractions = {label: stats.fraction_for(gamma) for label, gamma in p.intensities.items()}
        untagged = untagged_intervals(intervals, fractions, fractions)
        try:
            if method == 'analytical':
                bounds = estimate_analytical(
                    untagged, p.intensities, pnd=None if trusted else {'a': pnd, 'b': pnd},
                    s_cut=p.s_cut, tail_rule=tail_rule,
                )
            else:
                bounds = estimate_lp(untagged, pnd, pnd, p.s_cut, tail_rule=tail_rule, keep_programs=keep_programs)
        except EstimationError as e:
            logger.warning(f"Decoy estimation failed at {distance_km} km, mu={p.mu}: {e}")
            return RateEvaluation(p.mu, 0.0, -math.inf, stats, q_sig=q_sig, e_sig=e_sig, trusted=trusted,
                                  message=str(e))

        rate, raw = KeyRateService.key_rate(f, f, bounds.q11_z_lower, bounds.e11_x_upper, q_sig, e_sig, p.f_e)
        logger.debug(
            f"{'trusted' if trusted else 'untrusted'} {distance_km} km mu={p.mu}: R={rate:.4e} "
            f"(raw {raw:.4e}, Q11>={bounds.q11_z_lower:.4e}, e11<={bounds.e11_x_upper:.4f})"
        )
        return RateEvaluation(p.mu, rate, raw, stats, bounds, q_sig, e_sig, trusted)

    @staticmethod
    def _valid_grid(p, grid):
        values = sorted(set(float(mu) for mu in grid))
        valid = [mu for mu in values if p.omega < mu <= 1.0 and mu > p.nu and (1.0 + p.delta) * mu < 1.0]
        skipped = len(values) - len(valid)
        if skipped:
            logger.warning(f"Skipped {skipped} signal intensities outside the admissible range")
        if not valid:
            raise ParameterError("no admissible signal intensity in the grid")
        return valid

    @staticmethod
    def _scan(p, distance_km, mus, options, trusted, results):
        for mu in mus:
            if mu in results:
                continue
            results[mu] = KeyRateService.evaluate(
                dataclasses.replace(p, mu=mu), distance_km, options.mode, options.method,
                trusted=trusted, tail_rule=options.tail_rule,
            )

    @staticmethod
    def _best(results):
        """Largest rate; ties go to the smaller intensity."""
        best = None
        for mu in sorted(results):
            if best is None or results[mu].rate > best.rate:
                best = results[mu]
        return best

    @staticmethod
    def _refinement(p, grid, centre):
        if len(grid) < 2:
            return []
        step = min(b - a for a, b in zip(grid, grid[1:])) / REFINE_DIVISIONS
        fine = [round(centre + k * step, 12) for k in range(-(REFINE_DIVISIONS - 1), REFINE_DIVISIONS)]
        return [mu for mu in fine if mu > p.nu and mu > p.omega and mu <= 1.0 and (1.0 + p.delta) * mu < 1.0]

    @staticmethod
    def optimize_mu(p, distance_km, grid=None, options=None):
        """Best signal intensity on the grid (plus one refinement pass)."""
        options = options or SweepOptions()
        grid = KeyRateService._valid_grid(p, grid or options.grid)

        untrusted, trusted = {}, {}
        KeyRateService._scan(p, distance_km, grid, options, False, untrusted)
        if options.trusted_baseline:
            KeyRateService._scan(p, distance_km, grid, options, True, trusted)

        if options.refine:
            best = KeyRateService._best(untrusted)
            if best.rate <= 0.0 and trusted:
                best = KeyRateService._best(trusted)
            fine = KeyRateService._refinement(p, grid, best.mu)
            KeyRateService._scan(p, distance_km, fine, options, False, untrusted)
            if options.trusted_baseline:
                KeyRateService._scan(p, distance_km, fine, options, True, trusted)

        best = KeyRateService._best(untrusted)
        bounds = best.bounds
        return KeyRatePoint(
            distance_km=float(distance_km),
            mu_opt=best.mu,
            rate_untrusted=best.rate,
            rate_trusted=KeyRateService._best(trusted).rate if trusted else None,
            q11_lower=bounds.q11_z_lower if bounds else 0.0,
            e11_upper=bounds.e11_x_upper if bounds else 0.5,
            delta_frac=best.stats.delta_frac,
            epsilon_sample=best.stats.epsilon_sample,
            raw_rate=best.raw_rate if math.isfinite(best.raw_rate) else 0.0,
            mode=options.mode,
            method=options.method,
            throughput_bps=best.rate * p.rep_rate,
            diagnostics=bounds.report() if bounds else {'message': best.message},
        )

    @staticmethod
    def trusted_baseline(p, distance_km, mode='asymptotic', method='lp', grid=None, refine=True):
        """Optimised rate of conventional decoy-state MDI-QKD under the same channel."""
        options = SweepOptions(mode=mode, method=method, grid=tuple(grid or DEFAULT_GRID), refine=refine)
        grid = KeyRateService._valid_grid(p, options.grid)
        results = {}
        KeyRateService._scan(p, distance_km, grid, options, True, results)
        if refine:
            KeyRateService._scan(p, distance_km, KeyRateService._refinement(p, grid, KeyRateService._best(results).mu),
                                 options, True, results)
        return KeyRateService._best(results).rate

    @staticmethod
    def evaluate_distance(p, distance_km, options):
        point = KeyRateService.optimize_mu(p, distance_km, options=options)
        trusted = f", trusted {point.rate_trusted:.4e}" if point.rate_trusted is not None else ''
        logger.info(
            f"{distance_km:g} km [{options.mode}/{options.method}]: R={point.rate_untrusted:.4e} bits/pulse "
            f"({point.throughput_bps:.4e} bits/s) at mu={point.mu_opt:g}{trusted}"
        )
        return point

    @staticmethod
    def decoy_programs(p, distance_km, options):
        """The linear programs behind the untrusted rate at ``p.mu``."""
        evaluation = KeyRateService.evaluate(
            p, distance_km, options.mode, 'lp', trusted=False, tail_rule=options.tail_rule, keep_programs=True,
        )
        return evaluation.bounds.programs if evaluation.bounds else {}

    @staticmethod
    def sweep(p, distances, options=None, jobs=1, backend='local'):
        """Optimised points for each distance, in input order."""
        options = options or SweepOptions()
        distances = [float(d) for d in distances]
        if any(b < a for a, b in zip(distances, distances[1:])):
            raise ParameterError("distances must be sorted ascending")
        if any(d < 0 for d in distances):
            raise ParameterError("distances must be non-negative")

        logger.info(f"Sweeping {len(distances)} distances ({options.mode}, {options.method}, backend={backend}, jobs={jobs})")
        payloads = [(p.to_dict(), d, options.to_dict()) for d in distances]

        if backend == 'celery':
            return KeyRateService._sweep_celery(payloads)
        if jobs > 1:
            from billiard import Pool
            pool = Pool(processes=jobs)
            try:
                results = pool.map(_evaluate_distance_payload, payloads)
            finally:
                pool.close()
                pool.join()
            return [KeyRatePoint.from_dict(r) for r in results]
        return [KeyRateService.evaluate_distance(p, d, options) for d in distances]

    @staticmethod
    def _sweep_celery(payloads):
        from celery import group
        from .tasks import evaluate_distance_task

        job = group(evaluate_distance_task.s(*payload) for payload in payloads)
        results = job.apply_async().get()
        points = []
        for payload, result in zip(payloads, results):
            if result.get('status') != 'success':
                raise KeyRateError(f"distance {payload[1]} km failed: {result.get('message')}")
            points.append(KeyRatePoint.from_dict(result['point']))
        return points


def _evaluate_distance_payload(payload):
    params, distance_km, options = payload
    point = KeyRateService.evaluate_distance(
        ExperimentParams.from_dict(params), distance_km, SweepOptions.from_dict(options),
    )
    return point.to_dict()
