"""Dense bounded-variable simplex for small linear programs.

Each constraint row gets an activity variable r with bounds [lower, upper]
so the working system is [A  -I][x; r] = 0 with box bounds on every column.
Rows with nonnegative coefficients and a finite upper limit first tighten
the variable boxes; columns are then scaled by their boxes and rows by
their largest finite limit. Phase 1 minimises the sum of signed
artificials; phase 2 the objective. Bland's smallest-index rule is used for
both the entering and the leaving choice, and basic values are recomputed
from scratch (with one refinement step) every iteration.

Pivot and reduced-cost tests are relative to the magnitudes involved. The
final point is checked against the unscaled rows, and ``LPResult.bound``
carries the weak-duality bound of the final duals on the unscaled program:
never above the true minimum, never below the true maximum.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import SolverError

logger = logging.getLogger(__name__)

OPTIMAL = 'optimal'
INFEASIBLE = 'infeasible'
UNBOUNDED = 'unbounded'
NUMERICAL_ERROR = 'numerical_error'

# relative to the largest entry of the entering column
_PIVOT_TOL = 1e-9
_DRIVE_OUT_TOL = 1e-9
# relative row violation accepted at an optimal point
FEASIBILITY_TOL = 1e-7
DUALITY_TOL = 1e-6


def _default_tol():
    from django.conf import settings
    return getattr(settings, 'KEYRATE_LP_TOL', 1e-9)


def _check_duality():
    from django.conf import settings
    return getattr(settings, 'KEYRATE_LP_CHECK_DUALITY', False)


@dataclass
class Constraint:
    coefficients: np.ndarray
    lower: float = -math.inf
    upper: float = math.inf
    name: str = ''

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)


@dataclass
class LinearProgram:
    objective: np.ndarray
    sense: str = 'min'
    constraints: list = field(default_factory=list)
    bounds: list = None
    variable_names: list = None
    name: str = 'lp'

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        if self.bounds is None:
            self.bounds = [(0.0, math.inf)] * self.n_vars
        if self.variable_names is None:
            self.variable_names = [f"x{j}" for j in range(self.n_vars)]

    @property
    def n_vars(self):
        return len(self.objective)

    def add_constraint(self, coefficients, lower=-math.inf, upper=math.inf, name=''):
        constraint = Constraint(coefficients, lower, upper, name or f"c{len(self.constraints)}")
        self.constraints.append(constraint)
        return constraint

    def validate(self):
        if self.sense not in ('min', 'max'):
            raise SolverError(f"unknown objective sense {self.sense!r}")
        if len(self.bounds) != self.n_vars or len(self.variable_names) != self.n_vars:
            raise SolverError("bounds and variable names must match the objective length")
        for j, (lo, hi) in enumerate(self.bounds):
            if lo > hi:
                raise SolverError(f"variable {self.variable_names[j]}: lower bound {lo} exceeds upper bound {hi}")
        for c in self.constraints:
            if c.coefficients.shape != (self.n_vars,):
                raise SolverError(
                    f"constraint {c.name}: {c.coefficients.shape[0]} coefficients for {self.n_vars} variables"
                )
            if c.lower > c.upper:
                raise SolverError(f"constraint {c.name}: lower limit {c.lower} exceeds upper limit {c.upper}")

    def to_text(self):
        """The program in CPLEX LP format."""
        def expr(coefficients):
            terms = [f"{v:+.17g} {name}" for v, name in zip(coefficients, self.variable_names) if v != 0.0]
            return ' '.join(terms) if terms else '0 ' + self.variable_names[0]

        lines = [f"\\ {self.name}", 'Minimize' if self.sense == 'min' else 'Maximize', f" obj: {expr(self.objective)}", 'Subject To']
        for c in self.constraints:
            if math.isfinite(c.lower) and math.isfinite(c.upper) and c.lower == c.upper:
                lines.append(f" {c.name}: {expr(c.coefficients)} = {c.lower:.17g}")
                continue
            if math.isfinite(c.lower):
                lines.append(f" {c.name}_lo: {expr(c.coefficients)} >= {c.lower:.17g}")
            if math.isfinite(c.upper):
                lines.append(f" {c.name}_hi: {expr(c.coefficients)} <= {c.upper:.17g}")
        lines.append('Bounds')
        for name, (lo, hi) in zip(self.variable_names, self.bounds):
            lo_text = f"{lo:.17g}" if math.isfinite(lo) else '-inf'
            hi_text = f"{hi:.17g}" if math.isfinite(hi) else '+inf'
            lines.append(f" {lo_text} <= {name} <= {hi_text}")
        lines.append('End')
        return '\n'.join(lines) + '\n'


@dataclass
class LPResult:
    status: str
    objective: float = None
    x: np.ndarray = None
    row_activity: np.ndarray = None
    iterations: int = 0
    duality_gap: float = None
    message: str = ''
    bound: float = None
    max_violation: float = None

    @property
    def is_optimal(self):
        return self.status == OPTIMAL


class _Simplex:
    """Working state of one solve: columns, bounds, values and basis."""

    def __init__(self, matrix, lower, upper, values, basis, tol, max_iter):
        self.matrix = matrix
        self.lower = lower
        self.upper = upper
        self.values = values
        self.basis = basis
        self.tol = tol
        self.max_iter = max_iter
        self.iterations = 0

    def basic_values(self):
        nonbasic = np.ones(self.matrix.shape[1], dtype=bool)
        nonbasic[self.basis] = False
        rhs = -self.matrix[:, nonbasic] @ self.values[nonbasic]
        basis_matrix = self.matrix[:, self.basis]
        solution = np.linalg.solve(basis_matrix, rhs)
        solution += np.linalg.solve(basis_matrix, rhs - basis_matrix @ solution)
        self.values[self.basis] = solution

    def duals(self, cost):
        return np.linalg.solve(self.matrix[:, self.basis].T, cost[self.basis])

    def reduced_costs(self, cost):
        """Reduced costs and the magnitude of the terms that produced them."""
        duals = self.duals(cost)
        reduced = cost - self.matrix.T @ duals
        magnitude = np.abs(cost) + np.abs(self.matrix.T) @ np.abs(duals)
        return reduced, magnitude

    def _entering(self, reduced, threshold):
        in_basis = set(self.basis)
        for j in range(self.matrix.shape[1]):
            if j in in_basis or self.lower[j] == self.upper[j]:
                continue
            if reduced[j] < -threshold[j] and self.values[j] < self.upper[j]:
                return j, 1.0
            if reduced[j] > threshold[j] and self.values[j] > self.lower[j]:
                return j, -1.0
        return None, 0.0

    def _leaving(self, change, pivot_tol):
        best, leaving = math.inf, None
        for pos, var in enumerate(self.basis):
            dv = change[pos]
            if dv < -pivot_tol and math.isfinite(self.lower[var]):
                ratio = (self.values[var] - self.lower[var]) / -dv
            elif dv > pivot_tol and math.isfinite(self.upper[var]):
                ratio = (self.upper[var] - self.values[var]) / dv
            else:
                continue
            ratio = max(ratio, 0.0)
            if ratio < best or (ratio == best and var < self.basis[leaving]):
                best, leaving = ratio, pos
        return best, leaving

    def run(self, cost):
        # reduced costs below this share of |cost| are noise
        cost_floor = max(float(np.max(np.abs(cost))), 1e-300)
        for _ in range(self.max_iter):
            try:
                self.basic_values()
                reduced, magnitude = self.reduced_costs(cost)
            except np.linalg.LinAlgError:
                return NUMERICAL_ERROR
            entering, direction = self._entering(reduced, self.tol * np.maximum(magnitude, cost_floor))
            if entering is None:
                return OPTIMAL
            self.iterations += 1

            try:
                column = np.linalg.solve(self.matrix[:, self.basis], self.matrix[:, entering])
            except np.linalg.LinAlgError:
                return NUMERICAL_ERROR
            change = -direction * column
            pivot_tol = _PIVOT_TOL * max(1.0, float(np.max(np.abs(column))))

            if direction > 0:
                step = self.upper[entering] - self.values[entering]
            else:
                step = self.values[entering] - self.lower[entering]

            best, leaving = self._leaving(change, pivot_tol)
            if leaving is None and not math.isfinite(step):
                return UNBOUNDED

            if leaving is None or step <= best:
                self.values[entering] = self.upper[entering] if direction > 0 else self.lower[entering]
                continue

            var = self.basis[leaving]
            self.values[entering] += direction * best
            self.values[var] = self.lower[var] if change[leaving] < 0 else self.upper[var]
            self.basis[leaving] = entering
        return NUMERICAL_ERROR


def _solve_unconstrained(lp, cost):
    x = np.zeros(lp.n_vars)
    for j, (lo, hi) in enumerate(lp.bounds):
        if cost[j] > 0:
            x[j] = lo
        elif cost[j] < 0:
            x[j] = hi
        else:
            x[j] = lo if math.isfinite(lo) else (hi if math.isfinite(hi) else 0.0)
        if not math.isfinite(x[j]):
            return LPResult(UNBOUNDED, message=f"{lp.variable_names[j]} is unbounded")
    objective = float(lp.objective @ x)
    return LPResult(OPTIMAL, objective=objective, x=x, row_activity=np.zeros(len(lp.constraints)),
                    duality_gap=0.0, bound=objective, max_violation=0.0)


def implied_upper_bounds(constraints, x_lo, x_hi):
    """Variable upper bounds implied by rows sum(a x) <= u with a >= 0 and x >= 0."""
    x_hi = np.array(x_hi, dtype=float)
    for c in constraints:
        a = c.coefficients
        if not math.isfinite(c.upper) or c.upper < 0.0 or np.any(a < 0.0):
            continue
        positive = a > 0.0
        if np.any(x_lo[positive] < 0.0):
            continue
        x_hi[positive] = np.minimum(x_hi[positive], c.upper / a[positive])
    return np.maximum(x_hi, x_lo)


def _row_scales(a, row_lo, row_hi):
    limits = np.maximum(
        np.where(np.isfinite(row_lo), np.abs(row_lo), 0.0),
        np.where(np.isfinite(row_hi), np.abs(row_hi), 0.0),
    )
    scale = np.where(limits > 0.0, limits, np.max(np.abs(a), axis=1))
    return np.where(scale > 0.0, scale, 1.0)


def max_violation(constraints, x):
    """Largest row violation at ``x``, relative to the row's own magnitude."""
    worst = 0.0
    for c in constraints:
        terms = c.coefficients * x
        activity = math.fsum(terms)
        scale = max(
            float(np.sum(np.abs(terms))),
            abs(c.lower) if math.isfinite(c.lower) else 0.0,
            abs(c.upper) if math.isfinite(c.upper) else 0.0,
            1e-300,
        )
        if math.isfinite(c.lower):
            worst = max(worst, (c.lower - activity) / scale)
        if math.isfinite(c.upper):
            worst = max(worst, (activity - c.upper) / scale)
    return worst


def dual_bound(lp, constraints, duals, x_lo, x_hi):
    """Weak-duality bound on the optimum from row multipliers ``duals``.

    Multipliers pointing at an infinite limit are dropped; the remaining
    reduced costs are charged at the variable bounds.
    """
    sign = -1.0 if lp.sense == 'max' else 1.0
    cost = sign * lp.objective
    y = np.array(duals, dtype=float)
    terms = []
    for i, c in enumerate(constraints):
        if y[i] > 0.0:
            if math.isfinite(c.lower):
                terms.append(y[i] * c.lower)
            else:
                y[i] = 0.0
        elif y[i] < 0.0:
            if math.isfinite(c.upper):
                terms.append(y[i] * c.upper)
            else:
                y[i] = 0.0
    a = np.array([c.coefficients for c in constraints]).reshape(len(constraints), lp.n_vars)
    reduced = cost - a.T @ y
    for j, d in enumerate(reduced):
        if d == 0.0:
            continue
        term = d * (x_lo[j] if d > 0.0 else x_hi[j])
        if not math.isfinite(term):
            return sign * -math.inf
        terms.append(term)
    return sign * math.fsum(terms)


def solve(lp, tol=None):
    """Solve ``lp``; infeasible and unbounded problems are reported by status."""
    lp.validate()
    tol = _default_tol() if tol is None else tol
    n = lp.n_vars
    cost = -lp.objective if lp.sense == 'max' else lp.objective.copy()

    constraints = []
    for c in lp.constraints:
        if not (math.isfinite(c.lower) or math.isfinite(c.upper)):
            continue
        if not np.any(c.coefficients):
            if c.lower > tol or c.upper < -tol:
                return LPResult(INFEASIBLE, message=f"constraint {c.name} has no coefficients")
            continue
        constraints.append(c)

    if not constraints:
        return _solve_unconstrained(lp, cost)

    x_lo = np.array([b[0] for b in lp.bounds], dtype=float)
    x_hi = implied_upper_bounds(constraints, x_lo, [b[1] for b in lp.bounds])
    col_scale = np.where((x_lo == 0.0) & np.isfinite(x_hi) & (x_hi > 0.0), x_hi, 1.0)

    a = np.array([c.coefficients for c in constraints]) * col_scale
    row_lo = np.array([c.lower for c in constraints], dtype=float)
    row_hi = np.array([c.upper for c in constraints], dtype=float)
    row_scale = _row_scales(a, row_lo, row_hi)
    a = a / row_scale[:, None]
    row_lo = row_lo / row_scale
    row_hi = row_hi / row_scale

    lo = x_lo / col_scale
    hi = x_hi / col_scale
    x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))

    m = a.shape[0]
    activity = a @ x0
    signs = np.ones(m)
    basis = []
    r0 = np.zeros(m)
    art0 = np.zeros(m)
    art_hi = np.zeros(m)
    for i in range(m):
        if row_lo[i] - tol <= activity[i] <= row_hi[i] + tol:
            basis.append(n + i)
            r0[i] = activity[i]
        else:
            bound = row_hi[i] if activity[i] > row_hi[i] else row_lo[i]
            signs[i] = -1.0 if activity[i] > row_hi[i] else 1.0
            r0[i] = bound
            art0[i] = abs(activity[i] - bound)
            art_hi[i] = math.inf
            basis.append(n + m + i)

    matrix = np.hstack([a, -np.eye(m), np.diag(signs)])
    lower = np.concatenate([lo, row_lo, np.zeros(m)])
    upper = np.concatenate([hi, row_hi, art_hi])
    values = np.concatenate([x0, r0, art0])
    total = n + 2 * m
    simplex = _Simplex(matrix, lower, upper, values, basis, tol, 50 * total + 1000)

    artificials = [n + m + i for i in range(m) if art_hi[i] > 0]
    if artificials:
        phase1 = np.zeros(total)
        phase1[artificials] = 1.0
        status = simplex.run(phase1)
        if status != OPTIMAL:
            logger.warning(f"LP {lp.name}: phase 1 ended with {status}")
            return LPResult(NUMERICAL_ERROR, iterations=simplex.iterations, message=f"phase 1 {status}")
        infeasibility = float(np.sum(simplex.values[artificials]))
        if infeasibility > tol * len(artificials):
            logger.debug(f"LP {lp.name}: infeasible (phase 1 residual {infeasibility:.3e})")
            return LPResult(INFEASIBLE, iterations=simplex.iterations,
                            message=f"phase 1 residual {infeasibility:.3e}")
        _drive_out_artificials(simplex, n, m)
        simplex.upper[n + m:] = 0.0
        simplex.values[n + m:] = 0.0

    phase2 = np.concatenate([cost * col_scale, np.zeros(2 * m)])
    status = simplex.run(phase2)
    if status != OPTIMAL:
        logger.debug(f"LP {lp.name}: phase 2 ended with {status}")
        return LPResult(status, iterations=simplex.iterations, message=f"phase 2 {status}")

    try:
        simplex.basic_values()
        duals = simplex.duals(phase2) / row_scale
    except np.linalg.LinAlgError:
        return LPResult(NUMERICAL_ERROR, iterations=simplex.iterations, message='singular final basis')

    x_bounds = np.array(lp.bounds, dtype=float).reshape(n, 2)
    x = np.clip(simplex.values[:n] * col_scale, x_bounds[:, 0], x_bounds[:, 1])
    objective = float(lp.objective @ x)
    bound = dual_bound(lp, constraints, duals, x_lo, x_hi)
    gap = (objective - bound) if lp.sense == 'min' else (bound - objective)
    result = LPResult(
        OPTIMAL,
        objective=objective,
        x=x,
        row_activity=np.array([c.coefficients @ x for c in lp.constraints]),
        iterations=simplex.iterations,
        duality_gap=gap,
        bound=bound,
        max_violation=max_violation(lp.constraints, x),
    )

    if result.max_violation > FEASIBILITY_TOL:
        logger.warning(f"LP {lp.name}: final point violates a row by {result.max_violation:.3e} (relative)")
        result.status = NUMERICAL_ERROR
        result.message = f"row violation {result.max_violation:.3e}"
        return result

    if _check_duality() and gap > DUALITY_TOL * max(abs(objective), abs(bound), 1e-300):
        logger.warning(f"LP {lp.name}: weak-duality gap {gap:.3e} at optimum {objective:.6e}")
    return result


def _drive_out_artificials(simplex, n, m):
    """Replace artificials left in the basis at zero by structural or row columns."""
    for pos, var in enumerate(simplex.basis):
        if var < n + m:
            continue
        unit = np.zeros(m)
        unit[pos] = 1.0
        try:
            row = np.linalg.solve(simplex.matrix[:, simplex.basis].T, unit) @ simplex.matrix[:, :n + m]
        except np.linalg.LinAlgError:
            continue
        row[list(j for j in simplex.basis if j < n + m)] = 0.0
        j = int(np.argmax(np.abs(row)))
        if abs(row[j]) > _DRIVE_OUT_TOL:
            simplex.basis[pos] = j
            simplex.values[var] = 0.0
        # otherwise the row is redundant and the artificial stays basic at zero
