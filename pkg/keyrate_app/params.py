import dataclasses
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path

from dotenv import dotenv_values

from .exceptions import ConfigError, ParameterError

logger = logging.getLogger(__name__)

INTENSITY_LABELS = ('mu', 'nu', 'omega')

# Operating points applied when a key is omitted from the config file
DEFAULTS = {
    'delta': 0.01,
    'varsigma': 0.0,
    'f_e': 1.16,
    'mu': 0.3,
    'nu': 0.01,
    'omega': 0.0,
    'tau_conf': 1.0 - 1e-7,
    'epsilon_sec': 1e-10,
    'a_cut': 7,
    'b_cut': 7,
}

_LINE_RE = re.compile(r'^\s*(export\s+)?[A-Za-z_][A-Za-z0-9_]*\s*=.*$')


@dataclass(frozen=True)
class ExperimentParams:
    """Hardware constants and operating choices of one run.

    Immutable after construction; use ``dataclasses.replace`` to derive a
    variant (signal intensity per grid point, M_c override).
    """
    eta_d: float
    y0: float
    e_d: float
    rep_rate: float
    alpha_db_per_km: float
    eta_id: float
    sigma_id: float
    q: float
    k_pulses: float
    m_c: float
    epsilon_sec: float = DEFAULTS['epsilon_sec']
    delta: float = DEFAULTS['delta']
    varsigma: float = DEFAULTS['varsigma']
    f_e: float = DEFAULTS['f_e']
    mu: float = DEFAULTS['mu']
    nu: float = DEFAULTS['nu']
    omega: float = DEFAULTS['omega']
    tau_conf: float = DEFAULTS['tau_conf']
    a_cut: int = DEFAULTS['a_cut']
    b_cut: int = DEFAULTS['b_cut']

    def __post_init__(self):
        check_invariants(dataclasses.asdict(self))

    @property
    def intensities(self):
        return {'mu': self.mu, 'nu': self.nu, 'omega': self.omega}

    @property
    def s_cut(self):
        return (self.a_cut, self.b_cut)

    def to_dict(self):
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(frozen=True)
class SideParams:
    """Per-user quantities at one distance (symmetric links)."""
    distance_km: float
    l_side_km: float
    t_side: float
    m_mean: float
    m_measured: float
    q_virtual: float
    lambdas: dict = field(default_factory=dict)
    lambdas_virtual: dict = field(default_factory=dict)
    eff_p: dict = field(default_factory=dict)


FIELD_NAMES = tuple(f.name for f in dataclasses.fields(ExperimentParams))


def check_invariants(values):
    """Raise ParameterError naming the first violated invariant."""
    checks = (
        (0 < values['eta_d'] <= 1, 'detector efficiency: require 0 < eta_d <= 1'),
        (0 <= values['y0'] < 1, 'dark count: require 0 <= y0 < 1'),
        (0 <= values['e_d'] < 0.5, 'misalignment: require 0 <= e_d < 0.5'),
        (values['rep_rate'] > 0, 'repetition rate: require rep_rate > 0'),
        (values['alpha_db_per_km'] >= 0, 'fiber loss: require alpha_db_per_km >= 0'),
        (0 < values['eta_id'] <= 1, 'intensity detector: require 0 < eta_id <= 1'),
        (values['sigma_id'] >= 0, 'intensity detector noise: require sigma_id >= 0'),
        (0 < values['q'] < 1, 'monitor tap: require 0 < q < 1'),
        (values['k_pulses'] >= 1, 'pulse count: require k_pulses >= 1'),
        (values['m_c'] > 0, 'source brightness: require m_c > 0'),
        (0 < values['epsilon_sec'] < 1, 'security bound: require 0 < epsilon_sec < 1'),
        (0 < values['delta'] < 1, 'untagged window: require 0 < delta < 1'),
        (values['varsigma'] >= 0, 'conservative interval: require varsigma >= 0'),
        (values['f_e'] >= 1, 'error correction: require f_e >= 1'),
        (0 <= values['omega'] < values['nu'] < values['mu'],
         'decoy ordering: require 0 <= omega < nu < mu'),
        (0 < values['tau_conf'] < 1, 'confidence: require 0 < tau_conf < 1'),
        (values['a_cut'] >= 2 and values['b_cut'] >= 2, 'S_cut: require a_cut, b_cut >= 2'),
        # M*lambda*q equals the output intensity by construction
        ((1 + values['delta']) * values['mu'] < 1,
         'untagged weak-output condition violated: require (1+delta)*mu < 1'),
    )
    for ok, message in checks:
        if not ok:
            raise ParameterError(message)


def side_transmittance(p, distance_km):
    """One-way channel transmittance of one user's link."""
    if distance_km < 0:
        raise ParameterError(f"distance must be non-negative, got {distance_km}")
    return 10.0 ** (-p.alpha_db_per_km * (distance_km / 2.0) / 10.0)


def derive_side_params(p, distance_km):
    """Input photon number, internal transmittances and monitor mean at one distance."""
    t_side = side_transmittance(p, distance_km)

    # 50:50 split at Charlie, then one-way loss to the user
    m_mean = p.m_c * t_side / 2.0
    m_measured = m_mean * p.eta_id * (1.0 - p.q)
    q_virtual = p.eta_id * (1.0 - p.q)

    lambdas, lambdas_virtual, eff_p = {}, {}, {}
    for label, gamma in p.intensities.items():
        p_out = gamma / m_mean
        lam = p_out / p.q
        lam_virtual = p.q * lam / q_virtual
        if lam > 1 or lam_virtual > 1:
            raise ParameterError(
                f"internal transmittance exceeds 1 for {label}={gamma} at {distance_km} km "
                f"(lambda={lam:.3e}, virtual={lam_virtual:.3e})"
            )
        if (1 + p.delta) * m_mean * lam * p.q >= 1:
            raise ParameterError(
                f"untagged weak-output condition violated for {label}={gamma} at {distance_km} km"
            )
        lambdas[label] = lam
        lambdas_virtual[label] = lam_virtual
        eff_p[label] = p_out

    return SideParams(
        distance_km=distance_km,
        l_side_km=distance_km / 2.0,
        t_side=t_side,
        m_mean=m_mean,
        m_measured=m_measured,
        q_virtual=q_virtual,
        lambdas=lambdas,
        lambdas_virtual=lambdas_virtual,
        eff_p=eff_p,
    )


def _check_lines(path):
    with open(path, encoding='utf-8') as fh:
        for number, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith('#'):
                continue
            if not _LINE_RE.match(line):
                raise ConfigError(f"{path}: malformed line {number}: {stripped!r}", invariant='format')


def load_config(path):
    """Parse and validate a key=value experiment file into ExperimentParams."""
    from .serializers import ExperimentParamsSerializer

    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", invariant='format')

    _check_lines(path)
    raw = dotenv_values(path)

    unknown = sorted(set(raw) - set(FIELD_NAMES))
    if unknown:
        raise ConfigError(f"{path}: unknown keys {', '.join(unknown)}", invariant='format')

    serializer = ExperimentParamsSerializer(data=raw)
    if not serializer.is_valid():
        messages = []
        for name, errors in serializer.errors.items():
            prefix = '' if name == 'non_field_errors' else f"{name}: "
            messages.extend(f"{prefix}{error}" for error in errors)
        raise ConfigError(f"{path}: " + '; '.join(messages), invariant=messages[0] if messages else None)

    params = ExperimentParams(**serializer.validated_data)
    logger.info(f"Loaded configuration from {path} (m_c={params.m_c:g}, mu={params.mu}, nu={params.nu})")
    return params
