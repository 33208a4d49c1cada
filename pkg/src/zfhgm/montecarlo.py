"""
Monte Carlo ground truth for the ZF stream SNR.

Channels are drawn as H = H_d + H_w R_{T,K}^{1/2} in batches. Every batch
gets its own child of one SeedSequence, so a run is reproducible for a
fixed seed and batch size no matter how batches are spread over workers.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .channel import CorrelationMatrix, cyclic_order, steering_vectors


@dataclass(frozen=True)
class SimConfig:
    n_samples: int = 1_000_000
    seed: int = 0
    batch_size: int = 20_000

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")

    def batches(self):
        full, rest = divmod(self.n_samples, self.batch_size)
        return [self.batch_size] * full + ([rest] if rest else [])


@dataclass
class Estimate:
    mean: float
    se: float


@dataclass
class Estimates:
    p_out: Estimate
    cap_per_stream: list
    ml_sum_rate: Estimate
    zf_sum_rate: Estimate
    mean_snr: Estimate
    n_samples: int
    resampled: int = 0


def _chol_factor(r):
    # R^{1/2} as the conjugate transpose of the Cholesky factor: R = L L^H
    return np.linalg.cholesky(r).conj().T


def sample_channel(spec, r_t, rng, size=None, los=None):
    """Draw H (or a stack of ``size`` draws) for ``spec``.

    ``r_t`` is the unit-diagonal R_T; it is scaled by 1/(K+1) here.
    """
    if not isinstance(r_t, CorrelationMatrix):
        r_t = CorrelationMatrix(np.asarray(r_t, dtype=complex))
    los = los or steering_vectors(spec)
    root = _chol_factor(r_t.scaled(spec.k_linear))
    shape = (spec.n_rx, spec.n_tx) if size is None else (size, spec.n_rx, spec.n_tx)
    w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    return los.h_d + w @ root


def zf_snr(h, gamma_s, stream=0):
    """Per-stream ZF SNR Gamma_s/[(H^H H)^{-1}]_{kk}; batched over leading axes."""
    g = np.swapaxes(h.conj(), -1, -2) @ h
    inv = np.linalg.inv(g)
    return gamma_s / np.real(inv[..., stream, stream])


def zf_snr_hermitian(h, gamma_s, stream=0):
    """Same SNR as Gamma_s h_k^H Q h_k, Q the projector off the other columns."""
    order = cyclic_order(h.shape[-1], stream)
    h = h[..., order]
    h1, h2 = h[..., :, 0], h[..., :, 1:]
    h2h = np.swapaxes(h2.conj(), -1, -2)
    proj = h2 @ np.linalg.solve(h2h @ h2, h2h)
    q = np.eye(h.shape[-2]) - proj
    return gamma_s * np.real(np.einsum("...i,...ij,...j->...", h1.conj(), q, h1))


def _all_snrs(h, gamma_s):
    g = np.swapaxes(h.conj(), -1, -2) @ h
    inv = np.linalg.inv(g)
    d = np.real(np.diagonal(inv, axis1=-2, axis2=-1))
    return gamma_s / d, g


def _ml_rate(g, gamma_s):
    # log2 det(I + Gamma_s H H^H) = log2 det(I + Gamma_s H^H H)
    n = g.shape[-1]
    sign, logdet = np.linalg.slogdet(np.eye(n) + gamma_s * g)
    return logdet / math.log(2)


def _bad(snr):
    return ~np.all(np.isfinite(snr) & (snr > 0), axis=-1)


def _batch_sums(args):
    spec, r_t, gamma_s, tau, size, seed_seq = args
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    los = steering_vectors(spec)
    h = sample_channel(spec, r_t, rng, size, los)
    snr, g = _all_snrs(h, gamma_s)
    bad = _bad(snr)
    redrawn = 0
    while bad.any():
        # numerically singular H^H H: redraw those samples
        k = int(bad.sum())
        redrawn += k
        h[bad] = sample_channel(spec, r_t, rng, k, los)
        snr[bad], g[bad] = _all_snrs(h[bad], gamma_s)
        bad = _bad(snr)
    cap = np.log2(1.0 + snr)
    zf = cap.sum(axis=-1)
    ml = _ml_rate(g, gamma_s)
    out = snr[:, 0] < tau
    return dict(n=size, out=int(out.sum()),
                cap=cap.sum(axis=0), cap2=(cap * cap).sum(axis=0),
                zf=float(zf.sum()), zf2=float((zf * zf).sum()),
                ml=float(ml.sum()), ml2=float((ml * ml).sum()),
                snr=float(snr[:, 0].sum()), snr2=float((snr[:, 0] ** 2).sum()),
                redrawn=redrawn)


def _workers():
    try:
        return max(1, int(os.environ.get("ZFHGM_WORKERS", "1")))
    except ValueError:
        return 1


def _mean_se(s, s2, n):
    m = s / n
    var = max(s2 / n - m * m, 0.0) * n / max(n - 1, 1)
    return Estimate(float(m), math.sqrt(var / n))


def estimate(spec, r_t, gamma_s, tau, cfg=None, workers=None):
    """Outage, per-stream capacity and sum rates for stream 1 at (Gamma_s, tau).

    Batches can run in a process pool (``ZFHGM_WORKERS``); accumulators are
    merged in batch order, so the result depends only on ``cfg``.
    """
    cfg = cfg or SimConfig()
    sizes = cfg.batches()
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    jobs = [(spec, r_t, gamma_s, tau, n, s) for n, s in zip(sizes, seeds)]
    workers = workers or _workers()
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_batch_sums, jobs))
    else:
        parts = [_batch_sums(j) for j in jobs]
    n = sum(p["n"] for p in parts)
    tot = {k: sum(p[k] for p in parts) for k in parts[0] if k != "n"}
    po = tot["out"] / n
    caps = [_mean_se(s, s2, n) for s, s2 in zip(tot["cap"], tot["cap2"])]
    return Estimates(
        p_out=Estimate(po, math.sqrt(po * (1 - po) / n)),
        cap_per_stream=caps,
        ml_sum_rate=_mean_se(tot["ml"], tot["ml2"], n),
        zf_sum_rate=_mean_se(tot["zf"], tot["zf2"], n),
        mean_snr=_mean_se(tot["snr"], tot["snr2"], n),
        n_samples=n, resampled=tot["redrawn"])


# transformation chain ------------------------------------------------------

def _unitary_with_first(v):
    """Unitary matrix whose first column is the unit vector ``v``."""
    n = v.size
    m = np.eye(n, dtype=complex)
    m[:, 0] = v
    q, r = np.linalg.qr(m)
    # QR fixes the first column up to a phase; undo it
    q[:, 0] *= r[0, 0] / abs(r[0, 0])
    q[:, 0] = v
    return q


def _upper_cholesky(m):
    """Upper triangular A with positive real diagonal and A A^H = m."""
    j = np.eye(m.shape[0])[::-1]
    low = np.linalg.cholesky(j @ m @ j)
    return j @ low @ j


@dataclass
class TransformChain:
    """Intermediates of the SNR factorization for one or more draws."""

    v: np.ndarray
    v_tilde: np.ndarray
    a: np.ndarray
    f: np.ndarray = field(repr=False)
    g2: np.ndarray = field(repr=False)
    u2: np.ndarray = field(repr=False)
    t2: np.ndarray = field(repr=False)
    beta1: np.ndarray = None
    beta2: np.ndarray = None
    q2_11: np.ndarray = None


def _positive_qr(g):
    u, t = np.linalg.qr(g)
    d = np.diagonal(t, axis1=-2, axis2=-1)
    ph = d / np.abs(d)
    return u * ph[..., None, :], t * np.conj(ph)[..., :, None]


def transform_chain(spec, r_t, h, los=None):
    """Apply the row rotation, column rotation, decorrelation and QR to H."""
    los = los or steering_vectors(spec)
    r = r_t.scaled(spec.k_linear)
    # unitary V with first row a^H, i.e. V^H has first column a
    v = _unitary_with_first(los.a / np.linalg.norm(los.a)).conj().T
    bt = los.b_tilde
    nb = np.linalg.norm(bt)
    if nb == 0:
        v_tilde = np.eye(spec.n_tx - 1, dtype=complex)
    else:
        v_tilde = _unitary_with_first(bt / nb)
    a = _upper_cholesky(v_tilde.conj().T @ r[1:, 1:] @ v_tilde)
    f = v @ h
    e2 = f[..., 1:] @ v_tilde
    g2 = e2 @ np.linalg.inv(a.conj().T)
    u2, t2 = _positive_qr(g2)
    row = u2[..., 0, :]
    u11 = np.abs(row[..., 0]) ** 2
    beta1 = 1.0 - u11
    beta2 = 1.0 - (np.abs(row[..., 1:]) ** 2).sum(axis=-1) / beta1
    q2_11 = 1.0 - (np.abs(row) ** 2).sum(axis=-1)
    return TransformChain(v=v, v_tilde=v_tilde, a=a, f=f, g2=g2, u2=u2, t2=t2,
                          beta1=beta1, beta2=beta2, q2_11=q2_11)


def beta1_moment(n1, n_rx, x2, tol=1e-15, max_terms=10000):
    """E{beta1^n1} as a Poisson(x2) mixture of central beta moments."""
    total = 0.0
    w = math.exp(-x2)
    for n2 in range(max_terms):
        if n2 > 0:
            w *= x2 / n2
        term = w
        for i in range(n1):
            term *= (n_rx - 1 + i) / (n2 + n_rx + i)
        total += term
        if n2 > x2 and term < tol * total:
            break
    return total


@dataclass
class LemmaReport:
    n_samples: int
    x2: float
    moments: list
    ks_beta2: object
    corr: float
    max_factorization_error: float

    def moment_ok(self, n1=1, k=3.0):
        m = self.moments[n1 - 1]
        return abs(m["sample"] - m["series"]) <= k * m["se"]

    @property
    def corr_ok(self):
        return abs(self.corr) < 3 / math.sqrt(self.n_samples)


def lemma_checks(spec, r_t, cfg=None):
    """Empirical check of the beta1/beta2 laws and their independence."""
    from .channel import derive_snr_params
    cfg = cfg or SimConfig(n_samples=100_000)
    x2 = derive_snr_params(spec, r_t, 1.0).x2
    los = steering_vectors(spec)
    sizes = cfg.batches()
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(sizes))
    b1, b2, worst = [], [], 0.0
    for n, s in zip(sizes, seeds):
        rng = np.random.Generator(np.random.PCG64(s))
        h = sample_channel(spec, r_t, rng, n, los)
        ch = transform_chain(spec, r_t, h, los)
        worst = max(worst, float(np.max(np.abs(ch.q2_11 - ch.beta1 * ch.beta2))))
        b1.append(ch.beta1)
        b2.append(ch.beta2)
    b1, b2 = np.concatenate(b1), np.concatenate(b2)
    n = b1.size
    moments = []
    for n1 in (1, 2, 3):
        p = b1 ** n1
        moments.append(dict(order=n1, sample=float(p.mean()),
                            se=float(p.std(ddof=1) / math.sqrt(n)),
                            series=beta1_moment(n1, spec.n_rx, x2)))
    ks = stats.kstest(b2, stats.beta(spec.n_dof, spec.n_tx - 2).cdf)
    corr = float(np.corrcoef(b1, b2)[0, 1])
    return LemmaReport(n, x2, moments, ks, corr, worst)
