"""
Closed-form baselines: the gamma (central Wishart) approximation, the
Rayleigh outage formula and the worst-case LoS condition.
"""

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy import special, stats

from .channel import CorrelationMatrix, cyclic_order, steering_vectors
from .series import Capacity, Mgf, OutageProb, Pdf


@dataclass(frozen=True)
class GammaApprox:
    gamma1_hat: float
    n_dof: int
    r_hat: np.ndarray = None


def _inv11(r):
    r11, r21, r22 = r[0, 0].real, r[1:, 0], r[1:, 1:]
    return 1.0 / (r11 - np.real(np.vdot(r21, np.linalg.solve(r22, r21))))


def gamma_approx(spec, r_t, gamma_s, stream=0, los=None):
    """Gamma_hat_1 from R_hat = R_{T,K} + H_d^H H_d / N_R."""
    if not isinstance(r_t, CorrelationMatrix):
        r_t = CorrelationMatrix(np.asarray(r_t, dtype=complex))
    los = los or steering_vectors(spec)
    hd = los.h_d
    r_hat = r_t.scaled(spec.k_linear) + hd.conj().T @ hd / spec.n_rx
    order = cyclic_order(spec.n_tx, stream)
    r_hat = r_hat[np.ix_(order, order)]
    return GammaApprox(gamma_s / _inv11(r_hat), spec.n_dof, r_hat)


def gamma_measure(kind, n, scale):
    """m.g.f., p.d.f., outage or capacity of a Gamma(n, scale) variable."""
    if isinstance(kind, Mgf):
        return (1.0 - scale * kind.s) ** (-n)
    if isinstance(kind, Pdf):
        return float(stats.gamma(n, scale=scale).pdf(kind.t))
    if isinstance(kind, OutageProb):
        return rayleigh_outage(n, kind.tau / scale)
    if isinstance(kind, Capacity):
        x = 1.0 / scale
        # E log2(1 + g) = e^x sum_{j=1}^n E_j(x) / ln 2
        if x > 700:
            return sum(1.0 / (x + j) for j in range(1, n + 1)) / math.log(2)
        return math.exp(x) * math.fsum(special.expn(j, x)
                                       for j in range(1, n + 1)) / math.log(2)
    raise TypeError("unknown measure %r" % (kind,))


def gamma_approx_measures(spec, r_t, gamma_s, kind, stream=0, los=None):
    g = gamma_approx(spec, r_t, gamma_s, stream, los)
    return gamma_measure(kind, g.n_dof, g.gamma1_hat)


def rayleigh_outage(n_dof, tau_over_gamma1):
    """P(n_dof, tau/Gamma_1): outage of a Gamma(n_dof, Gamma_1) SNR."""
    if n_dof < 1:
        raise ValueError("n_dof must be positive")
    if tau_over_gamma1 < 0:
        raise ValueError("threshold ratio must be nonnegative")
    return float(special.gammainc(n_dof, tau_over_gamma1))


def worst_case_los(spec, r_t, los=None):
    """LoS component of ``spec`` with b_1 moved onto the worst-case condition.

    b_1^* is set to b_tilde^H r_{2,1}, so h_{d,1} = H_{d,2} r_{2,1} and
    x1 = 0 for stream 1.
    """
    if not isinstance(r_t, CorrelationMatrix):
        r_t = CorrelationMatrix(np.asarray(r_t, dtype=complex))
    los = los or steering_vectors(spec)
    r = r_t.scaled(spec.k_linear)
    r21 = np.linalg.solve(r[1:, 1:], r[1:, 0])
    b = los.b.copy()
    b[0] = np.conj(np.vdot(b[1:], r21))
    return type(los)(a=los.a, b=b)


@dataclass(frozen=True)
class WorstCase:
    residual: float
    x1: float


def worst_case_condition(spec, r_t, stream=0, los=None):
    """||h_{d,1} - H_{d,2} r_{2,1}|| and x1 for stream ``stream``.

    x1 vanishes exactly when the LoS column of the stream is the
    correlation-weighted combination of the other LoS columns.
    """
    if not isinstance(r_t, CorrelationMatrix):
        r_t = CorrelationMatrix(np.asarray(r_t, dtype=complex))
    los = los or steering_vectors(spec)
    order = cyclic_order(spec.n_tx, stream)
    hd = los.h_d[:, order]
    r = r_t.permuted(order).scaled(spec.k_linear)
    r21 = np.linalg.solve(r[1:, 1:], r[1:, 0])
    res = hd[:, 0] - hd[:, 1:] @ r21
    resid = float(np.linalg.norm(res))
    return WorstCase(resid, float(_inv11(r) * resid ** 2))


def rician_rayleigh_mgf(p, s):
    """Closed-form m.g.f. for x2 = 0: (1 - Gamma_1 s)^{-N} 1F1(N; N_R; sigma)."""
    g = p.gamma1 * s
    sigma = g / (1.0 - g) * p.x1
    return float((1.0 - g) ** (-p.n_dof) * mpmath.hyp1f1(p.n_dof, p.n_rx, sigma))
