import logging
import math
from dataclasses import dataclass, field

from scipy import stats

from .exceptions import ParameterError
from .params import INTENSITY_LABELS

logger = logging.getLogger(__name__)

BASES = ('Z', 'X')
# gain and error gain for each of the nine intensity pairs
FINITE_KEY_CONSTRAINTS = 18


@dataclass(frozen=True)
class Observable:
    gain: float
    qber: float
    pair_count: float = None

    def __post_init__(self):
        if not 0.0 <= self.gain <= 1.0 or not 0.0 <= self.qber <= 1.0:
            raise ParameterError(f"observable out of range: gain={self.gain}, qber={self.qber}")

    @property
    def error_gain(self):
        return self.gain * self.qber


@dataclass(frozen=True)
class BoundedObservable:
    lower: float
    upper: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ParameterError(f"inverted interval [{self.lower}, {self.upper}]")

    @classmethod
    def point(cls, value):
        return cls(value, value)

    @property
    def width(self):
        return self.upper - self.lower

    def contains(self, value, tol=0.0):
        return self.lower - tol <= value <= self.upper + tol


@dataclass
class ObservableSet:
    """Gains and QBERs keyed by (label_a, label_b, basis)."""
    values: dict = field(default_factory=dict)

    def get(self, label_a, label_b, basis):
        return self.values[(label_a, label_b, basis)]

    def set(self, label_a, label_b, basis, observable):
        self.values[(label_a, label_b, basis)] = observable

    def keys(self):
        return self.values.keys()

    def items(self):
        return self.values.items()

    def with_pair_counts(self, counts):
        if not isinstance(counts, dict):
            counts = {key: counts for key in self.values}
        return ObservableSet({
            key: Observable(obs.gain, obs.qber, counts[key]) for key, obs in self.values.items()
        })

    def is_complete(self):
        expected = {(a, b, basis) for a in INTENSITY_LABELS for b in INTENSITY_LABELS for basis in BASES}
        return expected <= set(self.values)


@dataclass
class ObservableIntervals:
    """Intervals on gain and error gain keyed like ObservableSet."""
    gains: dict = field(default_factory=dict)
    error_gains: dict = field(default_factory=dict)

    def gain(self, label_a, label_b, basis):
        return self.gains[(label_a, label_b, basis)]

    def error_gain(self, label_a, label_b, basis):
        return self.error_gains[(label_a, label_b, basis)]

    def widened(self, amount):
        """Every interval grown by ``amount`` on both sides, clipped to [0, 1]."""
        grow = lambda b: BoundedObservable(max(0.0, b.lower - amount), min(1.0, b.upper + amount))
        return ObservableIntervals(
            {k: grow(b) for k, b in self.gains.items()},
            {k: grow(b) for k, b in self.error_gains.items()},
        )


def pair_count(k_pulses, basis_prob=0.5, intensity_prob=1.0 / 3.0):
    """Expected number of pulse pairs for one (intensity pair, basis) setting."""
    return 2.0 * k_pulses * basis_prob ** 2 * intensity_prob ** 2


def _untagged_interval(value_lower, value_upper, fa, fb):
    f = fa * fb
    if f <= 0:
        raise ParameterError("no untagged pulses")
    upper = min(1.0, value_upper / f)
    lower = max(0.0, (value_lower - 1.0 + f) / f)
    return BoundedObservable(min(lower, upper), upper)


def untagged_gain_bounds(q_e, fa, fb):
    """Bounds on the untagged gain given the overall gain q_e."""
    return _untagged_interval(q_e, q_e, fa, fb)


def untagged_error_gain_bounds(q_e, e_e, fa, fb):
    error_gain = q_e * e_e
    return _untagged_interval(error_gain, error_gain, fa, fb)


def untagged_intervals(intervals, fa, fb):
    """Propagate measured intervals to untagged-pulse intervals.

    ``fa`` and ``fb`` are either one untagged fraction per user or a mapping
    from intensity label to the fraction charged against that setting.
    """
    def side(fraction, label):
        return fraction[label] if isinstance(fraction, dict) else fraction

    def convert(key, b):
        label_a, label_b, _ = key
        return _untagged_interval(b.lower, b.upper, side(fa, label_a), side(fb, label_b))

    return ObservableIntervals(
        {key: convert(key, b) for key, b in intervals.gains.items()},
        {key: convert(key, b) for key, b in intervals.error_gains.items()},
    )


def point_intervals(obs):
    """Zero-width intervals (asymptotic limit)."""
    return ObservableIntervals(
        {key: BoundedObservable.point(o.gain) for key, o in obs.items()},
        {key: BoundedObservable.point(o.error_gain) for key, o in obs.items()},
    )


def n_sigma_for_budget(epsilon_sec, n_constraints=FINITE_KEY_CONSTRAINTS):
    """Quantile whose two-sided Gaussian tail equals epsilon_sec / n_constraints."""
    if not 0 < epsilon_sec < 1:
        raise ParameterError(f"security bound must lie in (0, 1), got {epsilon_sec}")
    return float(stats.norm.isf(epsilon_sec / n_constraints / 2.0))


def _deviation_interval(value, count, n_sigma):
    if value == 0.0:
        return BoundedObservable(0.0, min(1.0, n_sigma ** 2 / count))
    half_width = n_sigma * math.sqrt(value / count)
    return BoundedObservable(max(0.0, value - half_width), min(1.0, value + half_width))


def finite_key_deviation(obs, epsilon_sec, n_constraints=FINITE_KEY_CONSTRAINTS):
    """Standard-error intervals on every gain and error gain."""
    n_sigma = n_sigma_for_budget(epsilon_sec, n_constraints)
    gains, error_gains = {}, {}
    for key, o in obs.items():
        if not o.pair_count:
            raise ParameterError(f"no statistics for {key}")
        gains[key] = _deviation_interval(o.gain, o.pair_count, n_sigma)
        error_gains[key] = _deviation_interval(o.error_gain, o.pair_count, n_sigma)
    logger.debug(f"Finite-key deviation with n_sigma={n_sigma:.4f} over {len(gains)} settings")
    return ObservableIntervals(gains, error_gains)
