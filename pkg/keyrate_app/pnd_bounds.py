import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .exceptions import ParameterError
from .photon_stats import binomial_distribution, poisson_distribution

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PndBounds:
    """Envelopes of the output photon-number distribution of untagged pulses.

    ``upper[n]`` and ``lower[n]`` hold for every input photon number inside
    ``window``; entries exist for n = 0..n_max. A Poisson instance (trusted
    source) has equal envelopes and no window.
    """
    upper: np.ndarray
    lower: np.ndarray
    eff_p: float
    window: tuple = None
    poisson_mean: float = None

    @property
    def n_max(self):
        return len(self.upper) - 1

    def p_upper(self, n):
        return float(self.upper[n]) if n <= self.n_max else 0.0

    def p_lower(self, n):
        return float(self.lower[n]) if n <= self.n_max else 0.0

    def tail_mass(self, cut):
        """Upper bound on P(n > cut) for every input photon number in the window."""
        if self.poisson_mean is not None:
            return float(stats.poisson.sf(cut, self.poisson_mean))
        if self.eff_p == 0.0:
            return 0.0
        return float(stats.binom.sf(cut, self.window[1], self.eff_p))

    @classmethod
    def poisson(cls, mean, n_max):
        mass = poisson_distribution(mean, n_max).mass
        return cls(upper=mass, lower=mass.copy(), eff_p=0.0, window=None, poisson_mean=mean)


def pnd_bounds(m_mean, delta, eff_p, n_max):
    """Binomial envelopes over the untagged window [(1-delta)M, (1+delta)M]."""
    if n_max < 2:
        raise ParameterError(f"n_max must be at least 2, got {n_max}")
    if (1.0 + delta) * m_mean * eff_p >= 1.0:
        raise ParameterError(
            "untagged weak-output condition violated: (1+delta)*M*eff_p = "
            f"{(1.0 + delta) * m_mean * eff_p:.4f} >= 1"
        )

    m_lo = math.floor((1.0 - delta) * m_mean)
    m_hi = math.ceil((1.0 + delta) * m_mean)

    at_lo = binomial_distribution(m_lo, eff_p, n_max).mass
    at_hi = binomial_distribution(m_hi, eff_p, n_max).mass

    # n = 0 is largest at the small end of the window, n >= 1 at the large end
    upper = at_hi.copy()
    upper[0] = at_lo[0]
    lower = at_lo.copy()
    lower[0] = at_hi[0]

    logger.debug(f"PND window [{m_lo}, {m_hi}] eff_p={eff_p:.4e}: P(1) in [{lower[1]:.6e}, {upper[1]:.6e}]")
    return PndBounds(upper=upper, lower=lower, eff_p=eff_p, window=(m_lo, m_hi))


def intensity_pnd_bounds(p, side, trusted=False):
    """PndBounds per intensity label for one user."""
    n_max = max(p.a_cut, p.b_cut) + 1
    if trusted:
        return {label: PndBounds.poisson(gamma, n_max) for label, gamma in p.intensities.items()}
    return {
        label: pnd_bounds(side.m_mean, p.delta, side.eff_p[label], n_max)
        for label in p.intensities
    }
