import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import EstimationError, ParameterError
from .lp_solver import INFEASIBLE, LinearProgram, solve
from .observable_bounds import BoundedObservable, ObservableIntervals
from .params import INTENSITY_LABELS
from .photon_stats import poisson_distribution, poisson_limit_distance

logger = logging.getLogger(__name__)

# Largest binomial-to-Poisson distance accepted by the closed-form bounds
POISSON_LIMIT_THRESHOLD = 1e-4

TAIL_RULES = ('window', 'envelope')


@dataclass(frozen=True)
class ActiveConstraint:
    program: str
    pair: tuple
    basis: str
    side: str
    coefficient_endpoint: str
    slack: float

    def to_dict(self):
        return {
            'program': self.program,
            'pair': '/'.join(self.pair),
            'basis': self.basis,
            'side': self.side,
            'coefficient_endpoint': self.coefficient_endpoint,
            'slack': float(self.slack),
        }


@dataclass
class DecoyBounds:
    s11_z_lower: float
    e11_x_upper: float
    q11_z_lower: float
    method: str
    s11_x_lower: float = None
    se11_x_upper: float = None
    diagnostics: list = field(default_factory=list)
    programs: dict = field(default_factory=dict)

    def report(self):
        return {
            'method': self.method,
            's11_z_lower': self.s11_z_lower,
            's11_x_lower': self.s11_x_lower,
            'se11_x_upper': self.se11_x_upper,
            'e11_x_upper': self.e11_x_upper,
            'q11_z_lower': self.q11_z_lower,
            'active_constraints': [c.to_dict() for c in self.diagnostics],
        }


def single_photon_error(se_upper, s_lower):
    """e11 = (S*e)/S with the zero-gain convention, clamped to [0, 1]."""
    se_upper = max(se_upper, 0.0)
    if s_lower <= 0.0:
        return 0.0 if se_upper == 0.0 else 0.5
    return min(1.0, se_upper / s_lower)


def q11_from_s11(s11, pnd_a, pnd_b):
    return pnd_a['mu'].p_lower(1) * pnd_b['mu'].p_lower(1) * s11


class YieldProgram:
    """Builds one decoy program over S_cut variables S_{n_a n_b}.

    Upper-side rows take the lower coefficient envelope and lower-side rows
    the upper one, so every admissible photon-number distribution satisfies
    the relaxed rows.
    """

    def __init__(self, pnd_a, pnd_b, s_cut, tail_rule='window'):
        if tail_rule not in TAIL_RULES:
            raise ParameterError(f"unknown tail rule {tail_rule!r}")
        self.pnd_a = pnd_a
        self.pnd_b = pnd_b
        self.a_cut, self.b_cut = s_cut
        self.tail_rule = tail_rule
        self.names = [f"S_{i}_{j}" for i in range(self.a_cut + 1) for j in range(self.b_cut + 1)]

    def index(self, n_a, n_b):
        return n_a * (self.b_cut + 1) + n_b

    def coefficients(self, label_a, label_b, envelope):
        a = np.array([getattr(self.pnd_a[label_a], f"p_{envelope}")(i) for i in range(self.a_cut + 1)])
        b = np.array([getattr(self.pnd_b[label_b], f"p_{envelope}")(j) for j in range(self.b_cut + 1)])
        return np.outer(a, b).ravel()

    def outside_mass(self, label_a, label_b):
        """Upper bound on the probability mass outside S_cut."""
        if self.tail_rule == 'envelope':
            return max(0.0, 1.0 - math.fsum(self.coefficients(label_a, label_b, 'lower')))
        tail_a = self.pnd_a[label_a].tail_mass(self.a_cut)
        tail_b = self.pnd_b[label_b].tail_mass(self.b_cut)
        return tail_a + tail_b - tail_a * tail_b

    def build(self, name, intervals, basis, sense, target=(1, 1)):
        objective = np.zeros(len(self.names))
        objective[self.index(*target)] = 1.0
        lp = LinearProgram(
            objective=objective,
            sense=sense,
            bounds=[(0.0, 1.0)] * len(self.names),
            variable_names=list(self.names),
            name=name,
        )
        meta = []
        for label_a in INTENSITY_LABELS:
            for label_b in INTENSITY_LABELS:
                bound = intervals[(label_a, label_b, basis)]
                low_coeffs = self.coefficients(label_a, label_b, 'lower')
                high_coeffs = self.coefficients(label_a, label_b, 'upper')
                # skip rows that S in [0, 1] satisfies anyway
                if bound.upper < math.fsum(low_coeffs):
                    lp.add_constraint(low_coeffs, upper=bound.upper, name=f"{label_a}_{label_b}_upper")
                    meta.append(((label_a, label_b), 'upper', 'lower'))
                floor = bound.lower - self.outside_mass(label_a, label_b)
                if floor > 0.0:
                    lp.add_constraint(high_coeffs, lower=floor, name=f"{label_a}_{label_b}_lower")
                    meta.append(((label_a, label_b), 'lower', 'upper'))
        return lp, meta


def _solve_program(lp, meta, basis, tol=None):
    result = solve(lp, tol)
    if result.status == INFEASIBLE:
        raise EstimationError(f"observables inconsistent with PND bounds ({lp.name})")
    if not result.is_optimal:
        raise EstimationError(f"decoy program {lp.name} ended with status {result.status}")

    active = []
    for constraint, activity, (pair, side, endpoint) in zip(lp.constraints, result.row_activity, meta):
        limit = constraint.upper if side == 'upper' else constraint.lower
        slack = abs(limit - activity)
        scale = max(abs(limit), float(np.max(np.abs(constraint.coefficients))), 1e-300)
        if slack <= 1e-7 * scale:
            active.append(ActiveConstraint(lp.name, pair, basis, side, endpoint, slack))
    # the dual bound is on the safe side of the optimum for both senses
    return result.bound, active


def decoy_programs(intervals, pnd_a, pnd_b, s_cut, tail_rule='window'):
    """The three decoy programs: min S^Z_11, min S^X_11 and max (S e)^X_11."""
    builder = YieldProgram(pnd_a, pnd_b, s_cut, tail_rule)
    z_lp, z_meta = builder.build('s11_z_min', intervals.gains, 'Z', 'min')
    x_lp, x_meta = builder.build('s11_x_min', intervals.gains, 'X', 'min')
    e_lp, e_meta = builder.build('se11_x_max', intervals.error_gains, 'X', 'max')
    return {
        z_lp.name: (z_lp, z_meta, 'Z'),
        x_lp.name: (x_lp, x_meta, 'X'),
        e_lp.name: (e_lp, e_meta, 'X'),
    }


def estimate_lp(intervals, pnd_a, pnd_b, s_cut, tail_rule='window', tol=None, keep_programs=False):
    """Certified single-photon bounds from the decoy linear programs."""
    a_cut, b_cut = s_cut
    if a_cut < 2 or b_cut < 2:
        raise ParameterError(f"S_cut must be at least (2, 2), got {s_cut}")

    programs = decoy_programs(intervals, pnd_a, pnd_b, s_cut, tail_rule)
    values, diagnostics = {}, []
    for name, (lp, meta, basis) in programs.items():
        values[name], active = _solve_program(lp, meta, basis, tol)
        diagnostics.extend(active)

    s11_z = min(1.0, max(0.0, values['s11_z_min']))
    s11_x = min(1.0, max(0.0, values['s11_x_min']))
    se11_x = min(1.0, max(0.0, values['se11_x_max']))
    e11_x = single_photon_error(se11_x, s11_x)

    logger.debug(f"LP bounds: S11_Z>={s11_z:.6e} S11_X>={s11_x:.6e} (Se)11_X<={se11_x:.6e} e11<={e11_x:.6f}")
    return DecoyBounds(
        s11_z_lower=s11_z,
        e11_x_upper=e11_x,
        q11_z_lower=q11_from_s11(s11_z, pnd_a, pnd_b),
        method='lp',
        s11_x_lower=s11_x,
        se11_x_upper=se11_x,
        diagnostics=diagnostics,
        programs={name: lp for name, (lp, _, _) in programs.items()} if keep_programs else {},
    )


def check_poisson_regime(pnd_by_side, threshold=POISSON_LIMIT_THRESHOLD):
    """True when every windowed envelope is close to its Poisson limit."""
    ok = True
    for side, pnd in pnd_by_side.items():
        for label, bounds in pnd.items():
            if bounds.poisson_mean is not None or bounds.eff_p == 0.0:
                continue
            distance = poisson_limit_distance(bounds.window[1], bounds.eff_p)
            if distance >= threshold:
                logger.warning(
                    f"Poisson limit not reached for {side}/{label}: distance {distance:.3e} >= {threshold:.0e}"
                )
                ok = False
    return ok


def _poisson_weighted_interval(bound, poisson_mass, low_coeffs, high_coeffs, outside_mass):
    """Interval on sum(pi_a pi_b S) implied by the two rows of one setting.

    ``poisson_mass`` holds the nominal Poisson weights over S_cut. A factor R
    covers the terms whose weight-to-envelope ratio stays within R; the other
    terms are charged at their full weight since 0 <= S <= 1.
    """
    with np.errstate(divide='ignore', invalid='ignore'):
        up_ratio = np.where(poisson_mass > 0.0, poisson_mass / low_coeffs, 0.0)
        low_ratio = np.where(poisson_mass > 0.0, poisson_mass / high_coeffs, 0.0)
    beyond_cut = max(0.0, 1.0 - math.fsum(poisson_mass))

    upper = 1.0
    for factor in np.unique(up_ratio[np.isfinite(up_ratio)]):
        excluded = math.fsum(poisson_mass[up_ratio > factor])
        upper = min(upper, factor * bound.upper + excluded + beyond_cut)

    lower = 0.0
    for factor in np.unique(low_ratio[np.isfinite(low_ratio) & (low_ratio > 0.0)]):
        penalty = math.fsum(high_coeffs[low_ratio < factor])
        lower = max(lower, factor * (bound.lower - outside_mass - penalty))
    return BoundedObservable(min(lower, upper), upper)


def poisson_weighted_intervals(intervals, pnd_a, pnd_b, intensities, s_cut, tail_rule='window'):
    """Intervals on the gains a nominal-Poisson source would show.

    The closed-form bounds assume each setting emits Poisson(gamma) photons.
    Untagged pulses only satisfy the windowed envelopes, so every measured
    interval is mapped through the envelope ratios first; the result holds
    for every yield vector the decoy programs admit.
    """
    builder = YieldProgram(pnd_a, pnd_b, s_cut, tail_rule)
    a_cut, b_cut = s_cut
    poisson = {
        label: (poisson_distribution(gamma, a_cut).mass, poisson_distribution(gamma, b_cut).mass)
        for label, gamma in intensities.items()
    }

    def convert(table):
        converted = {}
        for (label_a, label_b, basis), bound in table.items():
            mass = np.outer(poisson[label_a][0], poisson[label_b][1]).ravel()
            converted[(label_a, label_b, basis)] = _poisson_weighted_interval(
                bound, mass,
                builder.coefficients(label_a, label_b, 'lower'),
                builder.coefficients(label_a, label_b, 'upper'),
                builder.outside_mass(label_a, label_b),
            )
        return converted

    return ObservableIntervals(convert(intervals.gains), convert(intervals.error_gains))


def _windowed(pnd):
    return any(bounds.poisson_mean is None for side in pnd.values() for bounds in side.values())


def _s11_closed_form(bounds, basis, mu, nu, omega):
    q = lambda a, b: bounds[(a, b, basis)]
    e = math.exp
    denominator = (mu - omega) ** 2 * (nu - omega) ** 2 * (mu - nu)
    decoy_part = (
        q('nu', 'nu').lower * e(2 * nu)
        + q('omega', 'omega').lower * e(2 * omega)
        - q('nu', 'omega').upper * e(nu + omega)
        - q('omega', 'nu').upper * e(omega + nu)
    )
    signal_part = (
        q('mu', 'mu').upper * e(2 * mu)
        + q('omega', 'omega').upper * e(2 * omega)
        - q('mu', 'omega').lower * e(mu + omega)
        - q('omega', 'mu').lower * e(omega + mu)
    )
    numerator = (mu ** 2 - omega ** 2) * (mu - omega) * decoy_part - (nu ** 2 - omega ** 2) * (nu - omega) * signal_part
    return numerator / denominator


def _se11_closed_form(bounds, nu, omega):
    eq = lambda a, b: bounds[(a, b, 'X')]
    e = math.exp
    total = (
        e(2 * nu) * eq('nu', 'nu').upper
        + e(2 * omega) * eq('omega', 'omega').upper
        - e(nu + omega) * eq('nu', 'omega').lower
        - e(omega + nu) * eq('omega', 'nu').lower
    )
    return total / (nu - omega) ** 2


def estimate_analytical(intervals, intensities, pnd=None, s_cut=None, tail_rule='window'):
    """Closed-form bounds in the Poisson limit.

    ``pnd`` maps 'a' and 'b' to per-intensity PndBounds; it is used for the
    single-photon gain and for the Poisson-regime check. Windowed envelopes
    first map the intervals through ``poisson_weighted_intervals`` over
    ``s_cut`` (default: the envelope length). Without ``pnd`` the
    single-photon probabilities are Poisson.
    """
    mu, nu, omega = intensities['mu'], intensities['nu'], intensities['omega']
    if math.isclose(mu, nu) or math.isclose(nu, omega) or math.isclose(mu, omega):
        raise ParameterError("degenerate intensities")
    if not omega < nu < mu:
        raise ParameterError("decoy ordering: require omega < nu < mu")

    if pnd is not None:
        check_poisson_regime(pnd)
        if _windowed(pnd):
            if s_cut is None:
                s_cut = (pnd['a']['mu'].n_max - 1, pnd['b']['mu'].n_max - 1)
            intervals = poisson_weighted_intervals(intervals, pnd['a'], pnd['b'], intensities, s_cut, tail_rule)

    s11_z = min(1.0, max(0.0, _s11_closed_form(intervals.gains, 'Z', mu, nu, omega)))
    s11_x = min(1.0, max(0.0, _s11_closed_form(intervals.gains, 'X', mu, nu, omega)))
    se11_x = min(1.0, max(0.0, _se11_closed_form(intervals.error_gains, nu, omega)))
    e11_x = single_photon_error(se11_x, s11_x)

    if pnd is not None:
        q11 = q11_from_s11(s11_z, pnd['a'], pnd['b'])
    else:
        q11 = (mu * math.exp(-mu)) ** 2 * s11_z

    logger.debug(f"Analytical bounds: S11_Z>={s11_z:.6e} S11_X>={s11_x:.6e} e11<={e11_x:.6f}")
    return DecoyBounds(
        s11_z_lower=s11_z,
        e11_x_upper=e11_x,
        q11_z_lower=q11,
        method='analytical',
        s11_x_lower=s11_x,
        se11_x_upper=se11_x,
    )
