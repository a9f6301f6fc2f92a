"""Elementary photon-number distributions and the special functions around them.

Binomial masses are evaluated in the log domain: the monitored input pulses
carry ~1e7-1e9 photons while the per-photon transmission is ~1e-10, so the
naive product underflows long before the answer does.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

# Below this many factors log C(m, n) is summed term by term; gammaln of
# m ~ 1e9 loses ~1e-6 relative accuracy to cancellation.
_PRODUCT_FORM_LIMIT = 256
_TAIL = 1e-16


def _as_count(value, name):
    if value < 0 or float(value) != math.floor(value):
        raise ParameterError(f"{name} must be a non-negative integer, got {value}")
    return int(value)


def log_binomial_coefficient(m, n):
    k = min(n, m - n)
    if k <= _PRODUCT_FORM_LIMIT:
        return math.fsum(math.log(m - i) - math.log(i + 1) for i in range(k))
    return float(special.gammaln(m + 1) - special.gammaln(n + 1) - special.gammaln(m - n + 1))


def log_binomial_pmf(n, m, p):
    n = _as_count(n, 'n')
    m = _as_count(m, 'm')
    if n > m:
        raise ParameterError(f"binomial_pmf domain error: n={n} exceeds m={m}")
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability out of range: {p}")
    if p == 0.0:
        return 0.0 if n == 0 else -math.inf
    if p == 1.0:
        return 0.0 if n == m else -math.inf
    return log_binomial_coefficient(m, n) + n * math.log(p) + (m - n) * math.log1p(-p)


def binomial_pmf(n, m, p):
    """C(m,n) p^n (1-p)^(m-n), stable for m up to ~1e9 and p down to ~1e-10."""
    return math.exp(log_binomial_pmf(n, m, p))


def poisson_pmf(n, mu):
    n = _as_count(n, 'n')
    if mu < 0:
        raise ParameterError(f"Poisson mean must be non-negative, got {mu}")
    if mu == 0:
        return 1.0 if n == 0 else 0.0
    return math.exp(n * math.log(mu) - mu - special.gammaln(n + 1))


def binary_entropy(x):
    """H2(x) in bits; H2(0) = H2(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ParameterError(f"binary_entropy argument out of range: {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


def gaussian_cdf(x, mean, variance):
    if variance <= 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    return 0.5 * float(special.erfc(-(x - mean) / math.sqrt(2.0 * variance)))


@dataclass
class Pmf:
    """Probability masses indexed 0..support_max."""
    mass: np.ndarray
    truncated: bool = True

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        if np.any(self.mass < 0) or np.any(self.mass > 1):
            raise ParameterError("probability mass outside [0, 1]")
        total = self.total
        if self.truncated and total > 1 + 1e-9:
            raise ParameterError(f"truncated pmf sums to {total}")
        if not self.truncated and abs(total - 1) > 1e-9:
            raise ParameterError(f"pmf sums to {total}")

    @property
    def support_max(self):
        return len(self.mass) - 1

    @property
    def total(self):
        return math.fsum(self.mass)

    def __getitem__(self, n):
        if n < 0:
            raise IndexError(n)
        return float(self.mass[n]) if n < len(self.mass) else 0.0


def _log_binomial_masses(m, p, n_max):
    """log Binom(n; m, p) for n = 0..n_max (n > m gives -inf)."""
    n = np.arange(n_max + 1, dtype=float)
    i = np.arange(n_max, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        steps = np.log(np.maximum(m - i, 0.0)) - np.log(i + 1.0)
    log_comb = np.concatenate(([0.0], np.cumsum(steps)))
    out = log_comb + n * math.log(p) + (m - n) * math.log1p(-p)
    out[n > m] = -np.inf
    return out


def binomial_distribution(m, p, n_max):
    m = _as_count(m, 'm')
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability out of range: {p}")
    mass = np.zeros(n_max + 1)
    if p == 0.0:
        mass[0] = 1.0
    elif p == 1.0:
        if m <= n_max:
            mass[m] = 1.0
    else:
        mass = np.exp(_log_binomial_masses(m, p, n_max))
    return Pmf(mass, truncated=n_max < m)


def poisson_distribution(mu, n_max):
    if mu < 0:
        raise ParameterError(f"Poisson mean must be non-negative, got {mu}")
    mass = stats.poisson.pmf(np.arange(n_max + 1), mu) if mu > 0 else np.eye(1, n_max + 1)[0]
    return Pmf(mass, truncated=True)


def poisson_limit_distance(m, p):
    """Total variation distance between Binomial(m, p) and Poisson(m*p)."""
    m = _as_count(m, 'm')
    if not 0.0 <= p <= 1.0:
        raise ParameterError(f"probability out of range: {p}")
    if m == 0 or p == 0.0:
        return 0.0

    mean = m * p
    n_hi = int(max(stats.poisson.isf(_TAIL, mean), stats.binom.isf(_TAIL, m, p))) + 1
    n = np.arange(n_hi + 1)
    if p == 1.0:
        binom = (n == m).astype(float)
    else:
        binom = np.exp(_log_binomial_masses(m, p, n_hi))
    poisson = stats.poisson.pmf(n, mean)
    distance = 0.5 * math.fsum(np.abs(binom - poisson))
    logger.debug(f"Poisson-limit distance m={m} p={p:.3e}: {distance:.3e} over {n_hi + 1} terms")
    return distance
