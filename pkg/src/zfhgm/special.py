"""
Special functions used by the series kernels.

Every routine has a double-precision path (plain floats) and an
arbitrary-precision path driven by an ``mpmath`` context passed in as
``ctx``. Contexts are created per call by :func:`make_context`, so
concurrent evaluations never share a mutable precision setting.
"""

import math

import numpy as np
from mpmath import MPContext
from scipy import special as sps


class SeriesDivergence(ArithmeticError):
    """Raised when a series does not settle within its term budget.

    The partial sum reached so far is kept in ``partial``.
    """

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def make_context(dps):
    """Return a fresh mpmath context working at `dps` decimal digits."""
    ctx = MPContext()
    ctx.dps = int(dps)
    return ctx


def poch(a, k, ctx=None):
    """Pochhammer symbol (a)_k = a (a+1) ... (a+k-1), with (a)_0 = 1."""
    r = ctx.mpf(1) if ctx is not None else 1.0
    for i in range(k):
        r *= a + i
    return r


def compensated_sum(values):
    """Accurate float sum of an iterable (Shewchuk partials via math.fsum)."""
    return math.fsum(values)


def hyp1f1(n, d, sigma, ctx=None, max_terms=100000):
    """Kummer function 1F1(n; d; sigma) by direct summation.

    Parameters
    ----------
    n, d : int
        Upper and lower parameters, d >= 1.
    sigma : float
        Argument.
    ctx : mpmath context, optional
        When given, the sum is carried out at the context's precision.
    max_terms : int
        Term budget before :class:`SeriesDivergence` is raised.
    """
    if d < 1:
        raise ValueError("lower parameter must be >= 1")
    if ctx is None:
        sigma, eps, term, fsum = float(sigma), 2.0 ** -53, 1.0, compensated_sum
    else:
        sigma, eps, term, fsum = ctx.mpf(sigma), ctx.eps, ctx.mpf(1), ctx.fsum
    terms = [term]
    total = term
    for k in range(max_terms):
        term = term * (n + k) / (d + k) * sigma / (k + 1)
        if term == 0:
            return fsum(terms)
        terms.append(term)
        total += term
        # terms shrink monotonically once k passes |sigma| and |n - d|
        if k > abs(sigma) + abs(n - d) and abs(term) <= eps * abs(total):
            return fsum(terms)
    raise SeriesDivergence("1F1 series did not converge", total)


def gammainc_table(kmax, x, ctx=None):
    """Regularized lower incomplete gamma P(k, x) for k = 0..kmax.

    Integer shapes only. The top value comes from the convergent series
    P(k, x) = e^{-x} sum_{j>=k} x^j/j!, then the downward recurrence
    P(k-1, x) = P(k, x) + e^{-x} x^{k-1}/(k-1)! adds positive terms, so no
    cancellation occurs. P(0, x) = 1 by convention.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    if ctx is None:
        return _gammainc_table_double(kmax, float(x))
    out = [None] * (kmax + 1)
    x = ctx.mpf(x)
    if x == 0:
        return [ctx.mpf(1)] + [ctx.mpf(0)] * kmax
    pmf = ctx.exp(-x + kmax * ctx.log(x) - ctx.loggamma(kmax + 1))
    tail, term, j = pmf, pmf, kmax
    while True:
        j += 1
        term *= x / j
        tail += term
        if term < ctx.eps * tail:
            break
    out[kmax] = tail
    for k in range(kmax, 0, -1):
        pmf = pmf * k / x
        out[k - 1] = out[k] + pmf
    out[0] = ctx.mpf(1)
    return out


def _gammainc_table_double(kmax, x):
    if x == 0:
        return [1.0] + [0.0] * kmax
    lx = math.log(x)
    lpmf = -x + kmax * lx - math.lgamma(kmax + 1)
    # tail sum relative to the pmf at kmax
    rel, term, j = 1.0, 1.0, kmax
    while True:
        j += 1
        term *= x / j
        rel += term
        if term < 1e-17 * rel:
            break
    logp = [0.0] * (kmax + 1)
    logp[kmax] = lpmf + math.log(rel)
    for k in range(kmax, 0, -1):
        # pmf at k - 1
        lpmf = -x + (k - 1) * lx - math.lgamma(k)
        logp[k - 1] = float(np.logaddexp(logp[k], lpmf))
    out = [min(math.exp(v), 1.0) for v in logp]
    out[0] = 1.0
    return out


def gammainc_lower(k, x, ctx=None):
    """Regularized lower incomplete gamma P(k, x) with integer shape k."""
    return gammainc_table(k, x, ctx)[k]


def log1p_gamma_table(kmax, x, ctx=None):
    """Values C_k = e^x sum_{j=1..k} E_j(x) for k = 0..kmax.

    C_k equals the mean of ln(1+t) for t distributed as a gamma variable
    with integer shape k and scale 1/x. C_0 = 0.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if ctx is None:
        x = float(x)
        if x > 700:
            u = [_scaled_expn_asym(j, x) for j in range(1, kmax + 1)]
        else:
            ex = math.exp(x)
            u = [ex * float(sps.expn(j, x)) for j in range(1, kmax + 1)]
        out = [0.0]
        acc = []
        for v in u:
            acc.append(v)
            out.append(compensated_sum(acc))
        return out
    # forward recurrence u_{j+1} = (1 - x u_j)/j amplifies error by
    # x^j/j!, so run it with enough guard digits to absorb that
    guard = int(float(x) / math.log(10) + 10)
    with_guard = make_context(ctx.dps + guard)
    xg = with_guard.mpf(x)
    u = with_guard.exp(xg) * with_guard.e1(xg)
    out = [ctx.mpf(0)]
    acc = with_guard.mpf(0)
    for j in range(1, kmax + 1):
        acc += u
        out.append(ctx.mpf(acc))
        u = (1 - xg * u) / j
    return out


def _scaled_expn_asym(n, x):
    # e^x E_n(x) for large x: 1/(x+n) * (1 + n/(x+n)^2 + ...)
    s = x + n
    return (1.0 + n / s ** 2 + n * (n - 2 * x) / s ** 4) / s


def cancellation_ratio(values, total):
    """Largest |term| relative to |total|, a cancellation diagnostic."""
    big = max((abs(v) for v in values), default=0.0)
    if total == 0:
        return math.inf if big > 0 else 1.0
    return float(big / abs(total))
