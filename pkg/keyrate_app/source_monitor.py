import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

_BATCH = 100_000


@dataclass(frozen=True)
class MonitorModel:
    """One user's monitoring unit at one distance."""
    m_mean: float
    eta_id: float
    sigma_id: float
    q: float
    delta: float
    varsigma: float = 0.0

    def __post_init__(self):
        if self.m_mean <= 0:
            raise ParameterError(f"mean input photon number must be positive, got {self.m_mean}")
        if self.varsigma < 0:
            raise ParameterError(f"conservative interval must be non-negative, got {self.varsigma}")
        if self.measured_mean <= 0:
            raise ParameterError("measured mean photon number must be positive")

    @property
    def measured_mean(self):
        return self.m_mean * self.eta_id * (1.0 - self.q)

    @classmethod
    def from_params(cls, p, side):
        return cls(
            m_mean=side.m_mean,
            eta_id=p.eta_id,
            sigma_id=p.sigma_id,
            q=p.q,
            delta=p.delta,
            varsigma=p.varsigma,
        )


@dataclass(frozen=True)
class UntaggedStats:
    delta_frac: float
    epsilon_sample: float
    confidence: float
    untagged_fraction: float

    @classmethod
    def trusted(cls):
        return cls(delta_frac=0.0, epsilon_sample=0.0, confidence=1.0, untagged_fraction=1.0)

    def fraction_for(self, intensity):
        """Untagged fraction charged against the gains of one intensity setting.

        Tagged pulses may click with certainty. Pulses covered only by the
        sampling slack lie inside the typical photon-number range, so they
        are charged at the chance that the attenuated pulse carries a photon.
        """
        slack = self.epsilon_sample * -math.expm1(-intensity)
        return max(0.0, 1.0 - self.delta_frac - slack)


def tagged_ratio(model):
    """Fraction of pulses whose monitored photon number leaves the untagged window."""
    spread = math.sqrt(2.0 * model.m_mean + 2.0 * model.sigma_id ** 2)
    return float(special.erfc((model.delta * model.measured_mean + model.varsigma) / spread))


def epsilon_from_confidence(tau, k):
    if not 0.0 < tau < 1.0:
        raise ParameterError(f"confidence must lie in (0, 1), got {tau}")
    if k < 1:
        raise ParameterError(f"pulse count must be at least 1, got {k}")
    return math.sqrt(-math.log1p(-tau) / k)


def sampling_violation_bound(k, epsilon):
    """Upper bound on P(V^e <= V^s - 2*epsilon*k) for a 50/50 sampling split."""
    return math.exp(-k * epsilon ** 2)


def sampling_violation_bound_general(k, epsilon, beta):
    """Bound for a split sending each pulse to encoding with probability beta."""
    if not 0.0 < beta < 1.0:
        raise ParameterError(f"beta must lie in (0, 1), got {beta}")
    return math.exp(-4.0 * k * epsilon ** 2 * beta ** 2)


def untagged_stats(model, tau, k, asymptotic=False):
    delta_frac = tagged_ratio(model)
    epsilon = 0.0 if asymptotic else epsilon_from_confidence(tau, k)
    fraction = max(0.0, 1.0 - delta_frac - epsilon)
    logger.debug(
        f"Monitor M={model.m_mean:.4e}: delta={delta_frac:.4e} epsilon={epsilon:.4e} "
        f"untagged={fraction:.6f}"
    )
    return UntaggedStats(
        delta_frac=delta_frac,
        epsilon_sample=epsilon,
        confidence=tau,
        untagged_fraction=fraction,
    )


def _batch_sizes(n):
    full, rest = divmod(int(n), _BATCH)
    return [_BATCH] * full + ([rest] if rest else [])


def simulate_sampling_violation(k, epsilon, beta=0.5, n_trials=100_000, seed=0, untagged=None):
    """Monte Carlo frequency of the sampling-deviation event.

    Each of the ``untagged`` pulses (default: all 2k) is sent to encoding with
    probability beta and to the monitor otherwise. Returns (frequency, bound).
    """
    untagged = int(2 * k if untagged is None else untagged)
    threshold = 2.0 * epsilon * k
    ratio = beta / (1.0 - beta)

    sizes = _batch_sizes(n_trials)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    hits = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        v_e = rng.binomial(untagged, beta, size=size)
        v_s = untagged - v_e
        hits += int(np.count_nonzero(v_e <= ratio * (v_s - threshold)))

    frequency = hits / n_trials
    bound = sampling_violation_bound_general(k, epsilon, beta)
    logger.debug(f"Sampling MC k={k} eps={epsilon} beta={beta}: {frequency:.5f} vs bound {bound:.5f}")
    return frequency, bound


def simulate_tagged_fraction(model, n_samples=1_000_000, seed=0):
    """Monte Carlo estimate of the tagged ratio and its standard error.

    The monitored deviation is the Poisson fluctuation of the input photon
    number plus the detector's Gaussian noise.
    """
    threshold = model.delta * model.measured_mean + model.varsigma
    sizes = _batch_sizes(n_samples)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    tagged = 0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        photons = rng.poisson(model.m_mean, size=size)
        deviation = (photons - model.m_mean) + rng.normal(0.0, model.sigma_id, size=size)
        tagged += int(np.count_nonzero(np.abs(deviation) > threshold))

    frequency = tagged / n_samples
    stderr = math.sqrt(max(frequency * (1.0 - frequency), 1.0 / n_samples) / n_samples)
    return frequency, stderr
