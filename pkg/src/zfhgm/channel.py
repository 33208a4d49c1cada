"""
Rank-1 Rician channel statistics and the scalar SNR parameters.

The channel is H = H_d + H_w R_{T,K}^{1/2} with H_d = a b^H and
R_{T,K} = R_T/(K+1). Everything the series and ODE engines need about
stream 1 is condensed into :class:`SnrParams`.
"""

import json
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np
from scipy import integrate


class DegenerateCorrelation(ValueError):
    pass


def db2lin(x_db):
    return 10.0 ** (x_db / 10.0)


def lin2db(x):
    return 10.0 * math.log10(x)


def gamma_s_from_gamma_b(gamma_b_db, bits_per_symbol=2):
    """Linear transmit SNR per symbol from Gamma_b in dB (QPSK by default)."""
    return bits_per_symbol * db2lin(gamma_b_db)


@dataclass(frozen=True)
class ChannelSpec:
    """Antenna counts, K-factor, azimuth spread and the LoS/PAS angles.

    Angles are measured from the array broadside, so the element phase
    progression uses the sine of the angle (``phase="sin"``). ``"cos"``
    measures angles from the array axis instead.
    """

    n_rx: int
    n_tx: int
    k_db: float
    as_deg: float
    theta_r_deg: float = 30.0
    theta_t_deg: float = 5.0
    theta_c_deg: float = 5.0
    spacing_wl: float = 0.5
    phase: str = "sin"

    def __post_init__(self):
        if self.n_tx < 2 or self.n_rx < self.n_tx:
            raise ValueError("need n_tx >= 2 and n_rx >= n_tx")
        if not self.as_deg > 0:
            raise ValueError("azimuth spread must be positive")
        if self.phase not in ("sin", "cos"):
            raise ValueError("phase must be 'sin' or 'cos'")

    @property
    def k_linear(self):
        return db2lin(self.k_db)

    @property
    def n_dof(self):
        return self.n_rx - self.n_tx + 1

    def with_k(self, k_db):
        return replace(self, k_db=k_db)


@dataclass(frozen=True)
class LosComponent:
    a: np.ndarray
    b: np.ndarray

    @property
    def b_tilde(self):
        return self.b[1:]

    @property
    def h_d(self):
        return np.outer(self.a, self.b.conj())


@dataclass(frozen=True)
class CorrelationMatrix:
    """Transmit correlation R_T (Hermitian, PSD, unit diagonal)."""

    r_t: np.ndarray

    @classmethod
    def identity(cls, n):
        return cls(np.eye(n, dtype=complex))

    @classmethod
    def from_covariance(cls, m):
        """Normalize any positive definite covariance to unit diagonal."""
        m = np.asarray(m, dtype=complex)
        d = 1.0 / np.sqrt(np.real(np.diag(m)))
        return cls(m * np.outer(d, d))

    @property
    def n(self):
        return self.r_t.shape[0]

    def scaled(self, k_linear):
        """R_{T,K} = R_T/(K+1)."""
        return self.r_t / (k_linear + 1.0)

    def permuted(self, order):
        return CorrelationMatrix(self.r_t[np.ix_(order, order)])


@dataclass(frozen=True)
class SnrParams:
    """Scalars that fully parameterize the stream-1 SNR distribution.

    ``c1`` is None when x2 = 0 (Rician-Rayleigh case).
    """

    gamma1: float
    x1: float
    x2: float
    c1: float = None
    n_rx: int = 0
    n_tx: int = 0
    extras: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def n_dof(self):
        return self.n_rx - self.n_tx + 1

    @property
    def rician_rayleigh(self):
        return self.x2 == 0

    def at_z(self, z):
        """Same geometry and Gamma_1, with x2 = z and x1 = c1 z."""
        if self.c1 is None:
            raise ValueError("c1 undefined for x2 = 0")
        return replace(self, x2=float(z), x1=float(self.c1 * z))


def steering_vectors(spec):
    """ULA array responses a (unit norm) and b (scaled LoS power)."""
    trig = np.sin if spec.phase == "sin" else np.cos
    ph_r = 2 * np.pi * spec.spacing_wl * trig(np.radians(spec.theta_r_deg))
    ph_t = 2 * np.pi * spec.spacing_wl * trig(np.radians(spec.theta_t_deg))
    a = np.exp(-1j * ph_r * np.arange(spec.n_rx)) / np.sqrt(spec.n_rx)
    k = spec.k_linear
    scale = np.sqrt(k / (k + 1) * spec.n_rx * spec.n_tx)
    b = np.exp(-1j * ph_t * np.arange(spec.n_tx)) / np.sqrt(spec.n_tx) * scale
    return LosComponent(a=a, b=b)


def laplacian_pas_moment(lag, as_deg, theta_c_deg, spacing_wl=0.5, phase="sin"):
    """E[exp(-j 2 pi d lag trig(theta))] under the truncated Laplacian PAS.

    The density is proportional to exp(-sqrt(2)|theta - theta_c|/AS) on
    theta_c +/- 180 degrees and normalized to unit mass.
    """
    sig = np.radians(as_deg)
    tc = np.radians(theta_c_deg)
    trig = np.sin if phase == "sin" else np.cos
    w = lambda u: np.exp(-np.sqrt(2) * abs(u) / sig)
    opts = dict(points=[0.0], limit=500, epsabs=1e-13, epsrel=1e-10)
    mass = integrate.quad(w, -np.pi, np.pi, **opts)[0]
    if lag == 0:
        return 1.0 + 0j
    arg = lambda u: 2 * np.pi * spacing_wl * lag * trig(tc + u)
    re = integrate.quad(lambda u: np.cos(arg(u)) * w(u), -np.pi, np.pi, **opts)[0]
    im = integrate.quad(lambda u: -np.sin(arg(u)) * w(u), -np.pi, np.pi, **opts)[0]
    return (re + 1j * im) / mass


def laplacian_correlation(as_deg, theta_c_deg, n, spacing_wl=0.5, phase="sin"):
    """Toeplitz transmit correlation [R]_{p,q} from the Laplacian PAS."""
    if not as_deg > 0:
        raise ValueError("azimuth spread must be positive")
    lags = [laplacian_pas_moment(k, as_deg, theta_c_deg, spacing_wl, phase)
            for k in range(n)]
    r = np.empty((n, n), dtype=complex)
    for p in range(n):
        for q in range(n):
            v = lags[abs(p - q)]
            r[p, q] = v if p >= q else np.conj(v)
    if np.linalg.eigvalsh(r).min() < -1e-9:
        raise ArithmeticError("correlation matrix is not PSD; quadrature failed")
    return CorrelationMatrix(r)


def correlation_for(spec):
    return laplacian_correlation(spec.as_deg, spec.theta_c_deg, spec.n_tx,
                                 spec.spacing_wl, spec.phase)


def cyclic_order(n, stream):
    return [(stream + i) % n for i in range(n)]


def derive_snr_params(spec, r_t, gamma_s, stream=0, los=None):
    """Reduce (spec, R_T, Gamma_s) to the stream SNR parameters.

    Stream ``k`` is handled by cyclically permuting b and R_T so that it
    comes first.
    """
    if los is None:
        los = steering_vectors(spec)
    order = cyclic_order(spec.n_tx, stream)
    b = los.b[order]
    k = spec.k_linear
    r = r_t.permuted(order).scaled(k)
    r11, r21, r22 = r[0, 0].real, r[1:, 0], r[1:, 1:]
    if np.linalg.cond(r22) > 1e14:
        raise DegenerateCorrelation("degenerate correlation")
    r21_t = np.linalg.solve(r22, r21)
    inv11 = 1.0 / (r11 - np.real(np.vdot(r21, r21_t)))
    bt = b[1:]
    mu1 = np.conj(b[0]) - np.vdot(bt, r21_t)
    x1 = float(inv11 * abs(mu1) ** 2)
    x2 = float(np.real(np.vdot(bt, np.linalg.solve(r22, bt))))
    if x2 < 1e-300:
        x2 = 0.0
    c1 = x1 / x2 if x2 > 0 else None
    return SnrParams(gamma1=float(gamma_s / inv11), x1=x1, x2=x2, c1=c1,
                     n_rx=spec.n_rx, n_tx=spec.n_tx,
                     extras={"r21": r21_t, "mu1": mu1, "inv11": inv11})


def load_scenarios(path=None):
    """Scenario table (channel defaults and lognormal parameters) from JSON."""
    if path is None:
        text = resources.files("zfhgm").joinpath("data/scenarios.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    return json.loads(text)


def scenario_spec(name, n_rx=6, n_tx=4, config=None, **overrides):
    """ChannelSpec at the distribution means of a named scenario."""
    cfg = (config or load_scenarios())[name]
    kw = dict(k_db=cfg["k_db_mean"], as_deg=10 ** cfg["as_log10_mean"])
    kw.update({k: cfg[k] for k in ("theta_r_deg", "theta_t_deg", "theta_c_deg")
               if k in cfg})
    kw.update(overrides)
    return ChannelSpec(n_rx=n_rx, n_tx=n_tx, **kw)


def sample_winner_params(scenario, count, rng_seed, config=None):
    """Draw (K dB, AS deg) pairs from the scenario's lognormal laws.

    K in dB is Gaussian (K lognormal); log10(AS) is Gaussian.
    """
    table = config if config is not None else load_scenarios()
    if scenario not in table:
        raise KeyError("no distribution config for scenario %r" % scenario)
    cfg = table[scenario]
    try:
        mk, sk = cfg["k_db_mean"], cfg["k_db_std"]
        ma, sa = cfg["as_log10_mean"], cfg["as_log10_std"]
    except KeyError as err:
        raise KeyError("incomplete distribution config: %s" % err) from None
    rng = np.random.default_rng(rng_seed)
    k = mk + sk * rng.standard_normal(count)
    a = 10 ** (ma + sa * rng.standard_normal(count))
    return [(float(x), float(y)) for x, y in zip(k, a)]
