"""Time-bin Bell-state measurement with threshold detectors.

Charlie projects onto the singlet: one click in each time bin, on different
detectors. Coherent-state observables are phase-averaged closed forms; each is
a sum of terms ``coef * exp(-sa*m_a - sb*m_b) * I0(2*sqrt(ca*cb*m_a*m_b))``
with m = eta * gamma. The same term table, expanded in photon number, gives
the Fock-state yields, so both come from one detector model.
"""
import logging
import math
from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import special

from .observable_bounds import BASES, Observable, ObservableSet, pair_count
from .params import side_transmittance

logger = logging.getLogger(__name__)

_ORACLE_BATCH = 100_000


def _i0m1(z):
    """I0(z) - 1 without cancellation for small z."""
    if z < 1e-2:
        z2 = z * z / 4.0
        return z2 * (1.0 + z2 / 4.0 * (1.0 + z2 / 9.0))
    return float(special.i0(z)) - 1.0


def _click(m, y0):
    """Probability a threshold detector fires given Poisson mean m and dark count y0."""
    return -math.expm1(-m) + y0 * math.exp(-m)


def _z_outcomes(ma, mb, y0):
    """Coincidence probabilities for different-bin (correct) and same-bin (error) inputs."""
    w = 1.0 - y0
    correct = 2.0 * w * w * math.exp(-(ma + mb) / 2.0) * _click(ma / 2.0, y0) * _click(mb / 2.0, y0)
    error = 2.0 * y0 * w * w * math.exp(-(ma + mb) / 2.0) * (
        _i0m1(math.sqrt(ma * mb)) + _click((ma + mb) / 2.0, y0)
    )
    return correct, error


def _x_outcomes(ma, mb, y0):
    """Coincidence probabilities for equal (correct) and opposite (error) phases."""
    w = 1.0 - y0
    y = w * math.exp(-(ma + mb) / 4.0)
    not_y = _click((ma + mb) / 4.0, y0)
    x = math.sqrt(ma * mb) / 2.0
    interference = 2.0 * y * _i0m1(x)
    error = 2.0 * y * y * (not_y * not_y - interference)
    correct = 2.0 * y * y * (not_y * not_y + _i0m1(2.0 * x) - interference)
    return max(correct, 0.0), max(error, 0.0)


def _combine(correct, error, e_d):
    gain = 0.5 * (correct + error)
    error_gain = 0.5 * ((1.0 - e_d) * error + e_d * correct)
    return gain, error_gain


# (coef as a function of w and y0, sa, sb, ca, cb)
_FOCK_TERMS = {
    ('Z', 'correct'): (
        (lambda w, y0: 2 * w ** 2, 0.5, 0.5, 0.0, 0.0),
        (lambda w, y0: -2 * w ** 3, 1.0, 0.5, 0.0, 0.0),
        (lambda w, y0: -2 * w ** 3, 0.5, 1.0, 0.0, 0.0),
        (lambda w, y0: 2 * w ** 4, 1.0, 1.0, 0.0, 0.0),
    ),
    ('Z', 'error'): (
        (lambda w, y0: 2 * y0 * w ** 2, 0.5, 0.5, 0.5, 0.5),
        (lambda w, y0: -2 * y0 * w ** 3, 1.0, 1.0, 0.0, 0.0),
    ),
    ('X', 'correct'): (
        (lambda w, y0: 2 * w ** 2, 0.5, 0.5, 0.5, 0.5),
        (lambda w, y0: -4 * w ** 3, 0.75, 0.75, 0.25, 0.25),
        (lambda w, y0: 2 * w ** 4, 1.0, 1.0, 0.0, 0.0),
    ),
    ('X', 'error'): (
        (lambda w, y0: 2 * w ** 2, 0.5, 0.5, 0.0, 0.0),
        (lambda w, y0: -4 * w ** 3, 0.75, 0.75, 0.25, 0.25),
        (lambda w, y0: 2 * w ** 4, 1.0, 1.0, 0.0, 0.0),
    ),
}


def _fock_outcome(terms, n_a, n_b, eta, y0):
    w = 1.0 - y0
    total = []
    for coef, sa, sb, ca, cb in terms:
        c = coef(w, y0)
        for k in range(min(n_a, n_b) + 1):
            if k > 0 and (ca == 0.0 or cb == 0.0):
                break
            total.append(
                c * comb(n_a, k) * comb(n_b, k)
                * (ca * eta) ** k * (cb * eta) ** k
                * (1.0 - sa * eta) ** (n_a - k) * (1.0 - sb * eta) ** (n_b - k)
            )
    return max(math.fsum(total), 0.0)


@dataclass(frozen=True)
class FockYield:
    n_a: int
    n_b: int
    basis: str
    yield_: float
    error_yield: float

    @property
    def qber(self):
        if self.yield_ <= 0.0:
            return 0.5
        return min(1.0, self.error_yield / self.yield_)


@dataclass
class ChannelPoint:
    distance_km: float
    t_side: float
    observables: ObservableSet
    yields: dict = field(default_factory=dict)

    def yield_(self, n_a, n_b, basis='Z'):
        return self.yields[(n_a, n_b, basis)].yield_

    def qber(self, n_a, n_b, basis='X'):
        return self.yields[(n_a, n_b, basis)].qber


def coherent_observable(p, gamma_a, gamma_b, basis, eta):
    """Gain and QBER for coherent inputs of intensity gamma_a, gamma_b."""
    ma, mb = eta * gamma_a, eta * gamma_b
    outcomes = _z_outcomes if basis == 'Z' else _x_outcomes
    gain, error_gain = _combine(*outcomes(ma, mb, p.y0), p.e_d)
    qber = 0.5 if gain <= 0.0 else min(1.0, error_gain / gain)
    return Observable(gain=min(gain, 1.0), qber=qber)


def true_untagged_yields(p, distance_km, s_cut=None):
    """Fock-input yields and error yields for n_a <= A, n_b <= B in both bases."""
    a_cut, b_cut = s_cut or p.s_cut
    eta = p.eta_d * side_transmittance(p, distance_km)
    yields = {}
    for basis in BASES:
        correct_terms = _FOCK_TERMS[(basis, 'correct')]
        error_terms = _FOCK_TERMS[(basis, 'error')]
        for n_a in range(a_cut + 1):
            for n_b in range(b_cut + 1):
                correct = _fock_outcome(correct_terms, n_a, n_b, eta, p.y0)
                error = _fock_outcome(error_terms, n_a, n_b, eta, p.y0)
                gain, error_gain = _combine(correct, error, p.e_d)
                yields[(n_a, n_b, basis)] = FockYield(n_a, n_b, basis, gain, error_gain)
    return yields


def expected_observables(p, distance_km, with_yields=True, s_cut=None):
    t_side = side_transmittance(p, distance_km)
    eta = p.eta_d * t_side
    count = pair_count(p.k_pulses)

    observables = ObservableSet()
    for label_a, gamma_a in p.intensities.items():
        for label_b, gamma_b in p.intensities.items():
            for basis in BASES:
                obs = coherent_observable(p, gamma_a, gamma_b, basis, eta)
                observables.set(label_a, label_b, basis, Observable(obs.gain, obs.qber, count))

    yields = true_untagged_yields(p, distance_km, s_cut) if with_yields else {}
    signal = observables.get('mu', 'mu', 'Z')
    logger.debug(f"Channel at {distance_km} km: t_side={t_side:.4e} Q_mumu={signal.gain:.4e} E={signal.qber:.4e}")
    return ChannelPoint(distance_km=distance_km, t_side=t_side, observables=observables, yields=yields)


@dataclass(frozen=True)
class OracleResult:
    gain: float
    qber: float
    gain_stderr: float
    qber_stderr: float
    n_samples: int
    n_valid: int
    n_error: int


def _oracle_batch(rng, size, ma, mb, y0, e_d):
    a = rng.integers(0, 2, size=size)
    b = rng.integers(0, 2, size=size)
    b_phys = b ^ (rng.random(size) < e_d)
    phase = rng.uniform(0.0, 2.0 * math.pi, size=size)

    # mean photon number per (detector, time bin)
    lam = np.zeros((size, 2, 2))
    rows = np.arange(size)
    diff = a != b_phys
    same = ~diff

    lam[rows[diff], :, a[diff]] = ma / 2.0
    lam[rows[diff], :, b_phys[diff]] = mb / 2.0

    beat = math.sqrt(ma * mb) * np.cos(phase[same])
    lam[rows[same], 0, a[same]] = np.maximum((ma + mb) / 2.0 + beat, 0.0)
    lam[rows[same], 1, a[same]] = np.maximum((ma + mb) / 2.0 - beat, 0.0)

    clicks = (rng.poisson(lam) > 0) | (rng.random(lam.shape) < y0)
    c00, c01 = clicks[:, 0, 0], clicks[:, 0, 1]
    c10, c11 = clicks[:, 1, 0], clicks[:, 1, 1]
    valid = (c00 & c11 & ~c10 & ~c01) | (c10 & c01 & ~c00 & ~c11)
    error = valid & (a == b)
    return int(np.count_nonzero(valid)), int(np.count_nonzero(error))


def z_basis_oracle(p, gamma_a, gamma_b, distance_km, n_samples, seed):
    """Photon-counting simulation of the Z-basis gain and QBER.

    Batches draw from generators spawned off one SeedSequence, so the result
    depends only on (seed, n_samples).
    """
    eta = p.eta_d * side_transmittance(p, distance_km)
    ma, mb = eta * gamma_a, eta * gamma_b

    full, rest = divmod(int(n_samples), _ORACLE_BATCH)
    sizes = [_ORACLE_BATCH] * full + ([rest] if rest else [])
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    n_valid = n_error = 0
    for size, child in zip(sizes, children):
        valid, error = _oracle_batch(np.random.default_rng(child), size, ma, mb, p.y0, p.e_d)
        n_valid += valid
        n_error += error

    gain = n_valid / n_samples
    qber = n_error / n_valid if n_valid else 0.5
    gain_stderr = math.sqrt(gain * (1.0 - gain) / n_samples)
    qber_stderr = math.sqrt(qber * (1.0 - qber) / n_valid) if n_valid else 0.0
    logger.debug(f"Z oracle ({gamma_a}, {gamma_b}) at {distance_km} km: gain={gain:.5e} from {n_samples} samples")
    return OracleResult(gain, qber, gain_stderr, qber_stderr, int(n_samples), n_valid, n_error)
