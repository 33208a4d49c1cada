"""
Truncated infinite series for the ZF SNR measures.

With x2 = z and x1 = c1 z every measure has the form

    h(z) = e^{-z} sum_n G_n z^n / n!,
    G_n  = sum_m C(n, m) (N)_m / (N_R + n - m)_m H_m c1^m,

where H_m is an alternating binomial sum of gamma-distribution quantities
(m.g.f., p.d.f., c.d.f. at tau, or mean of log2(1 + t)). Evaluation runs in
double precision (with compensated inner sums and a cancellation
diagnostic) or at any precision through an mpmath context.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from .special import (cancellation_ratio, compensated_sum, gammainc_table,
                      log1p_gamma_table, make_context)


class ExactContext:
    """Rational arithmetic with the small subset of the mpmath API we use."""

    mpf = staticmethod(Fraction)
    fsum = staticmethod(sum)
    exact = True

    @staticmethod
    def factorial(n):
        return Fraction(math.factorial(int(n)))

    @staticmethod
    def binomial(n, k):
        return Fraction(math.comb(int(n), int(k)))


EXACT = ExactContext()


class _FloatContext:
    exact = False
    fsum = staticmethod(compensated_sum)

    @staticmethod
    def mpf(x):
        return float(x)

    @staticmethod
    def factorial(n):
        return float(math.factorial(int(n)))

    @staticmethod
    def binomial(n, k):
        return float(math.comb(int(n), int(k)))


FLOAT = _FloatContext()


# measure kinds ------------------------------------------------------------

@dataclass(frozen=True)
class MeasureKind:
    name = "measure"


@dataclass(frozen=True)
class Mgf(MeasureKind):
    """M(s) = E[exp(s gamma)], requires 1 - s Gamma_1 > 0."""

    s: float
    name = "mgf"


@dataclass(frozen=True)
class Pdf(MeasureKind):
    t: float
    name = "pdf"


@dataclass(frozen=True)
class OutageProb(MeasureKind):
    """P(gamma < tau) with tau in linear units."""

    tau: float
    name = "outage"


@dataclass(frozen=True)
class Capacity(MeasureKind):
    """Ergodic capacity E[log2(1 + gamma)] in bit/s/Hz."""

    name = "capacity"


def measure_from_dict(d):
    kind = d["kind"]
    if kind == "mgf":
        return Mgf(float(d["s"]))
    if kind == "pdf":
        return Pdf(float(d["t"]))
    if kind == "outage":
        return OutageProb(float(d["tau"]))
    if kind == "capacity":
        return Capacity()
    raise ValueError("unknown measure kind %r" % kind)


def measure_to_dict(kind):
    d = {"kind": kind.name}
    for key in ("s", "t", "tau"):
        if hasattr(kind, key):
            d[key] = getattr(kind, key)
    return d


@dataclass(frozen=True)
class TruncationPolicy:
    rel_tol: float = 1e-10
    n_max: int = 150
    precision: int = None  # decimal digits; None means double precision

    def __post_init__(self):
        if not self.rel_tol > 0 or self.n_max < 1:
            raise ValueError("need rel_tol > 0 and n_max >= 1")


@dataclass(frozen=True)
class SeriesResult:
    value: float
    n_used: int
    converged: bool
    max_term_magnitude: float
    cancellation: float = 1.0

    @property
    def trusted(self):
        return self.converged and self.cancellation <= CANCELLATION_LIMIT


CANCELLATION_LIMIT = 1e12


def _context(policy_or_ctx):
    if policy_or_ctx is None:
        return FLOAT
    if isinstance(policy_or_ctx, TruncationPolicy):
        if policy_or_ctx.precision is None:
            return FLOAT
        return make_context(policy_or_ctx.precision)
    return policy_or_ctx


# kernels -------------------------------------------------------------------

def _shape_values(kind, p, kmax, ctx):
    """f[k] for k = 0..kmax: the gamma(k, Gamma_1) quantity behind H_m."""
    g1 = ctx.mpf(p.gamma1)
    if isinstance(kind, Mgf):
        s = ctx.mpf(kind.s)
        if not 1 - s * g1 > 0:
            raise ValueError("m.g.f. argument outside 1 - s Gamma_1 > 0")
        q = 1 / (1 - s * g1)
        out, v = [], ctx.mpf(1)
        for _ in range(kmax + 1):
            out.append(v)
            v = v * q
        return out
    if getattr(ctx, "exact", False):
        raise TypeError("only the m.g.f. kernel is rational")
    if isinstance(kind, OutageProb):
        if not kind.tau > 0:
            raise ValueError("tau must be positive")
        return gammainc_table(kmax, ctx.mpf(kind.tau) / g1,
                              None if ctx is FLOAT else ctx)
    if isinstance(kind, Capacity):
        tab = log1p_gamma_table(kmax, 1 / g1, None if ctx is FLOAT else ctx)
        ln2 = math.log(2) if ctx is FLOAT else ctx.ln2
        return [v / ln2 for v in tab]
    if isinstance(kind, Pdf):
        t = ctx.mpf(kind.t)
        if t < 0:
            raise ValueError("t must be nonnegative")
        out = [ctx.mpf(0)]
        for k in range(1, kmax + 1):
            out.append(_gamma_pdf(t, k, g1, ctx))
        return out
    raise TypeError("unknown measure kind")


def _gamma_pdf(t, k, g1, ctx):
    if t == 0:
        return ctx.mpf(1) / g1 if k == 1 else ctx.mpf(0)
    if ctx is FLOAT:
        return math.exp((k - 1) * math.log(t) - t / g1 - math.lgamma(k)
                        - k * math.log(g1))
    return ctx.exp((k - 1) * ctx.log(t) - t / g1 - ctx.loggamma(k) - k * ctx.log(g1))


def kernel_table(kind, p, mmax, ctx=None):
    """H_0..H_mmax for the measure ``kind``.

    H_m = sum_{m1} C(m, m1) (-1)^{m1} f_{N + m - m1}, each inner sum
    accumulated with compensated (double) or context-precision summation.
    Also returns, for double precision, the largest |inner term| per m.
    """
    ctx = _context(ctx)
    n = p.n_dof
    f = _shape_values(kind, p, n + mmax, ctx)
    out, big = [], []
    for m in range(mmax + 1):
        terms = []
        c = 1
        for m1 in range(m + 1):
            v = f[n + m - m1] * c
            terms.append(-v if m1 % 2 else v)
            c = c * (m - m1) // (m1 + 1)
        out.append(ctx.fsum(terms))
        big.append(max(abs(v) for v in terms))
    return out, big


def kernel_h(kind, m, p, ctx=None):
    """Single kernel value H_m."""
    return kernel_table(kind, p, m, ctx)[0][m]


# single series -----------------------------------------------------------

def g_coefficients(kind, p, count, ctx=None, c1=None):
    """G_0..G_{count-1} of the single series (any arithmetic context)."""
    ctx = _context(ctx)
    if c1 is None:
        c1 = p.c1
    h, _ = kernel_table(kind, p, count - 1, ctx)
    n, nr = p.n_dof, p.n_rx
    c1 = ctx.mpf(c1)
    if ctx is FLOAT:
        return _g_double(h, n, nr, c1, count)[0]
    fact = ctx.factorial
    # G_n = n!/(N_R+n-1)! sum_m u_m v_{n-m}
    u, cm, poch = [], ctx.mpf(1), ctx.mpf(1)
    for m in range(count):
        u.append(poch * h[m] * cm / fact(m))
        poch *= n + m
        cm *= c1
    v = [fact(nr + j - 1) / fact(j) for j in range(count)]
    return [fact(k) / fact(nr + k - 1) * ctx.fsum(u[m] * v[k - m] for m in range(k + 1))
            for k in range(count)]


def _log_weight(n, m, ndof, nr, c1):
    # log of C(n,m) (N)_m / (N_R+n-m)_m c1^m
    if m and c1 == 0:
        return -math.inf
    return (math.lgamma(n + 1) - math.lgamma(m + 1) - math.lgamma(n - m + 1)
            + math.lgamma(ndof + m) - math.lgamma(ndof)
            + math.lgamma(nr + n - m) - math.lgamma(nr + n)
            + (m * math.log(c1) if m else 0.0))


def _g_double(h, ndof, nr, c1, count):
    g, big = [], []
    for k in range(count):
        terms = [math.exp(_log_weight(k, m, ndof, nr, c1)) * h[m]
                 for m in range(k + 1)]
        g.append(compensated_sum(terms))
        big.append(max(abs(t) for t in terms))
    return g, big


def eval_series(kind, p, policy=None):
    """Truncated single series at z = x2 (x1 = c1 x2).

    Terms are added until the relative change drops below ``rel_tol`` past
    the Poisson mode (n > z), or ``n_max`` terms are used. For x2 = 0 the
    Rician-Rayleigh sum over n1 is used instead.
    """
    policy = policy or TruncationPolicy()
    ctx = _context(policy)
    if p.x2 == 0:
        return _rician_rayleigh_series(kind, p, policy, ctx)
    z = p.x2
    nmax = policy.n_max
    if ctx is FLOAT:
        h, hbig = kernel_table(kind, p, nmax, ctx)
        lz = math.log(z)
        total, terms, biggest = 0.0, [], 0.0
        for n in range(nmax + 1):
            inner = []
            for m in range(n + 1):
                w = math.exp(_log_weight(n, m, p.n_dof, p.n_rx, p.c1)
                             - z + n * lz - math.lgamma(n + 1))
                inner.append(w * h[m])
                biggest = max(biggest, w * hbig[m])
            term = compensated_sum(inner)
            terms.append(term)
            total = compensated_sum(terms)
            if _settled(term, total, n, z, policy.rel_tol):
                return SeriesResult(total, n + 1, True, biggest,
                                    cancellation_ratio([biggest], total))
        return SeriesResult(total, nmax + 1, False, biggest,
                            cancellation_ratio([biggest], total))
    g = g_coefficients(kind, p, nmax + 1, ctx)
    zz = ctx.mpf(z)
    w = ctx.exp(-zz)
    terms = []
    total = ctx.mpf(0)
    for n in range(nmax + 1):
        term = w * g[n]
        terms.append(term)
        total += term
        if _settled(term, total, n, z, policy.rel_tol):
            biggest = max(abs(t) for t in terms)
            return SeriesResult(total, n + 1, True, biggest,
                                cancellation_ratio([biggest], total))
        w = w * zz / (n + 1)
    biggest = max(abs(t) for t in terms)
    return SeriesResult(total, nmax + 1, False, biggest,
                        cancellation_ratio([biggest], total))


def _settled(term, total, n, z, rel_tol):
    if n < z:
        return False
    if total == 0:
        return term == 0
    return abs(term) <= rel_tol * abs(total)


def _rician_rayleigh_series(kind, p, policy, ctx):
    nmax = policy.n_max
    h, hbig = kernel_table(kind, p, nmax, ctx)
    x1 = ctx.mpf(p.x1)
    w = ctx.mpf(1)
    terms, big = [], []
    total = ctx.mpf(0)
    for n in range(nmax + 1):
        terms.append(w * h[n])
        big.append(abs(w) * hbig[n])
        total = ctx.fsum(terms)
        if _settled(terms[-1], total, n, float(x1), policy.rel_tol) or x1 == 0:
            return SeriesResult(total, n + 1, True, max(big),
                                cancellation_ratio(big, total))
        w = w * (p.n_dof + n) / (p.n_rx + n) * x1 / (n + 1)
    return SeriesResult(total, nmax + 1, False, max(big),
                        cancellation_ratio(big, total))


def eval_series_derivatives(kind, p, z0, order, policy=None):
    """[d^k h/dz^k at z0 for k = 0..order] (x1 = c1 z).

    Raises ArithmeticError when any of the shifted sums fails to converge,
    in which case a smaller z0 is needed.
    """
    policy = policy or TruncationPolicy()
    ctx = _context(policy)
    z = ctx.mpf(z0)
    nmax = policy.n_max
    g = g_coefficients(kind, p, nmax + order + 1, ctx)
    sums = []
    for l in range(order + 1):
        w = ctx.mpf(1)
        acc = []
        total = ctx.mpf(0)
        ok = False
        for j in range(nmax + 1):
            term = g[l + j] * w
            acc.append(term)
            total = total + term
            if _settled(term, total, j, float(z), policy.rel_tol) and j > 0:
                ok = True
                break
            w = w * z / (j + 1)
        if not ok:
            raise ArithmeticError(
                "derivative series of order %d did not converge at z0=%g; "
                "use a smaller z0" % (l, float(z0)))
        sums.append(ctx.fsum(acc))
    ez = math.exp(-float(z)) if ctx is FLOAT else ctx.exp(-z)
    out = []
    for k in range(order + 1):
        terms = [ctx.binomial(k, l) * sums[l] * (-1) ** (k - l) for l in range(k + 1)]
        out.append(ez * ctx.fsum(terms))
    return out


# double series -----------------------------------------------------------

def eval_double_series(kind, p, policy=None):
    """The (n1, n2) double series with Poisson(x2) weights.

    Independent of :func:`eval_series`; used as a cross-check.
    """
    policy = policy or TruncationPolicy()
    ctx = _context(policy)
    nmax = policy.n_max
    h, hbig = kernel_table(kind, p, nmax, ctx)
    x1, x2 = ctx.mpf(p.x1), ctx.mpf(p.x2)
    if ctx is FLOAT:
        exp, log = math.exp, math.log
    else:
        exp, log = ctx.exp, ctx.log
    # Poisson weights for n2, truncated once the tail is negligible
    pois = []
    if x2 == 0:
        pois = [ctx.mpf(1)]
    else:
        w = exp(-x2)
        n2, acc = 0, ctx.mpf(0)
        eps = 1e-17 if ctx is FLOAT else ctx.eps
        while True:
            pois.append(w)
            acc += w
            n2 += 1
            w = w * x2 / n2
            if n2 > x2 and w < eps * acc * 1e-3:
                break
            if w == 0 and n2 > x2:
                break
    nr, nd = p.n_rx, p.n_dof
    # ratio[n2] tracks (N)_{n1}/(N_R+n2)_{n1} x1^{n1}/n1!
    ratio = [ctx.mpf(1) for _ in pois]
    total = ctx.mpf(0)
    terms, big = [], []
    for n1 in range(nmax + 1):
        inner = ctx.fsum(pw * r for pw, r in zip(pois, ratio))
        term = inner * h[n1]
        terms.append(term)
        big.append(abs(inner) * hbig[n1])
        total = ctx.fsum(terms)
        if _settled(term, total, n1, float(x1), policy.rel_tol) or x1 == 0:
            return SeriesResult(total, n1 + 1, True, max(big),
                                cancellation_ratio(big, total))
        for j in range(len(ratio)):
            ratio[j] = ratio[j] * (nd + n1) / (nr + j + n1) * x1 / (n1 + 1)
    return SeriesResult(total, nmax + 1, False, max(big),
                        cancellation_ratio(big, total))
