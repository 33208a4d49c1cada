"""
Guess-and-certify construction of linear ODEs in z for the series measures.

An operator L = sum_{i<=p} q_i(z) d^i/dz^i with polynomial q_i annihilates
f = sum_j a_j z^j iff, for every n >= 0,

    sum_{i,k} c_{ik} (n-k+1)_i a_{n-k+i} = 0,     c_{ik} = [z^k] q_i,

(terms with n < k dropped). Fitting a prefix of Taylor coefficients gives
a homogeneous linear system for the c_{ik}; a nonzero null vector is a
candidate operator, which is then checked on coefficients that took no part
in the fit.
"""

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .series import EXACT, g_coefficients, measure_to_dict
from .special import make_context


class NoOperatorFound(ArithmeticError):
    pass


class InsufficientPrecision(ArithmeticError):
    def __init__(self, message, needed=None):
        super().__init__(message)
        self.needed = needed


class SingularExpansionPoint(ValueError):
    pass


def _is_exact(ctx):
    return getattr(ctx, "exact", False)


@dataclass
class OdeOperator:
    """sum_i q_i(z) d^i/dz^i; ``coeffs[i][k]`` is the z^k coefficient of q_i."""

    coeffs: list
    ctx: object = field(default=None, repr=False, compare=False)
    provenance: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        while len(self.coeffs) > 1 and all(c == 0 for c in self.coeffs[-1]):
            self.coeffs.pop()
        if all(c == 0 for c in self.coeffs[-1]):
            raise ValueError("leading coefficient is identically zero")

    @property
    def order(self):
        return len(self.coeffs) - 1

    @property
    def degree(self):
        return max(_deg(q) for q in self.coeffs)

    @property
    def leading(self):
        return self.coeffs[-1]

    def normalized(self):
        """Scale so the top-degree coefficient of q_p equals 1."""
        lead = self.leading[_deg(self.leading)]
        coeffs = [[c / lead for c in q] for q in self.coeffs]
        return OdeOperator(coeffs, self.ctx, dict(self.provenance))

    def rescaled(self, rho):
        """Operator in z from one in w = z/rho: c_ik -> c_ik rho^(i-k)."""
        rho = self.ctx.mpf(rho) if self.ctx is not None else rho
        coeffs = [[c * rho ** (i - k) for k, c in enumerate(q)]
                  for i, q in enumerate(self.coeffs)]
        return OdeOperator(coeffs, self.ctx, dict(self.provenance)).normalized()

    def exp_conjugated(self, c=1):
        """Operator L' with L'(f) = e^{-cz} L(e^{cz} f), i.e. d -> d + c.

        If L annihilates g then L' annihilates e^{-cz} g. Order, degree and
        the leading coefficient are unchanged.
        """
        p = self.order
        c = self.ctx.mpf(c) if self.ctx is not None else c
        width = max(len(q) for q in self.coeffs)
        out = [[0] * width for _ in range(p + 1)]
        for i, q in enumerate(self.coeffs):
            for j in range(i + 1):
                f = math.comb(i, j) * c ** (i - j)
                for k, v in enumerate(q):
                    out[j][k] = out[j][k] + f * v
        for q in out:
            while len(q) > 1 and q[-1] == 0:
                q.pop()
        return OdeOperator(out, self.ctx, dict(self.provenance))

    def float_coeffs(self):
        return [np.array([float(c) for c in q]) for q in self.coeffs]

    def residuals(self, a, rows):
        """Relative recurrence residuals |r_n| / sum|terms| for n in rows."""
        out = []
        for n in rows:
            terms = _row_terms(self.coeffs, a, n)
            scale = sum(abs(t) for t in terms)
            tot = sum(terms) if _is_exact(self.ctx) else math.fsum(float(t) for t in terms) \
                if self.ctx is None else self.ctx.fsum(terms)
            out.append(abs(tot) / scale if scale else abs(tot))
        return out

    def apply_to_poly(self, a, count):
        """Taylor coefficients of L f for f = sum a_j z^j (first ``count``)."""
        return [sum(_row_terms(self.coeffs, a, n)) for n in range(count)]

    def to_json(self):
        return json.dumps({
            "order": self.order,
            "degree": self.degree,
            "exact": _is_exact(self.ctx),
            "coeffs": [[_num_to_str(c, self.ctx) for c in q] for q in self.coeffs],
            "provenance": self.provenance,
        }, indent=1, default=_json_default)

    @classmethod
    def from_json(cls, text, dps=None):
        d = json.loads(text)
        if d.get("exact"):
            ctx = EXACT
            coeffs = [[Fraction(c) for c in q] for q in d["coeffs"]]
        else:
            digits = dps or max(len(c) for q in d["coeffs"] for c in q)
            ctx = make_context(max(digits, 30))
            coeffs = [[ctx.mpf(c) for c in q] for q in d["coeffs"]]
        return cls(coeffs, ctx, d.get("provenance", {}))


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    return str(o)


def _num_to_str(c, ctx):
    if isinstance(c, Fraction):
        return str(c)
    if ctx is not None and hasattr(ctx, "nstr"):
        return ctx.nstr(c, ctx.dps, min_fixed=1, max_fixed=0)
    return repr(float(c))


def _deg(q):
    for k in range(len(q) - 1, -1, -1):
        if q[k] != 0:
            return k
    return -1


def _row_terms(coeffs, a, n):
    terms = []
    for i, q in enumerate(coeffs):
        for k, c in enumerate(q):
            if c == 0 or n < k:
                continue
            j = n - k + i
            terms.append(c * _rising(n - k + 1, i) * a[j])
    return terms


def _rising(x, i):
    r = 1
    for t in range(i):
        r *= x + t
    return r


@dataclass
class Certification:
    fit_coeff_count: int
    holdout_coeff_count: int
    max_residual: float
    tolerance: float
    passed: bool


@dataclass
class CompanionSystem:
    """First-order form v' = A(z) v of a scalar operator on (h, h', ...)."""

    dim: int
    q: list
    singular_points: list
    roots: list = field(default_factory=list)  # all roots of q_p, complex

    def a_of_z(self, z):
        qs = [np.polyval(c[::-1], z) for c in self.q]
        a = np.zeros((self.dim, self.dim))
        a[np.arange(self.dim - 1), np.arange(1, self.dim)] = 1.0
        a[-1, :] = [-qs[i] / qs[-1] for i in range(self.dim)]
        return a

    def rhs(self, z, v):
        # cheaper than forming A(z) at every stage
        qs = [_horner(c, z) for c in self.q]
        out = np.empty_like(v)
        out[:-1] = v[1:]
        out[-1] = -np.dot(qs[:-1], v) / qs[-1]
        return out


def _horner(c, z):
    r = 0.0
    for x in c[::-1]:
        r = r * z + x
    return r


# ---------------------------------------------------------------------------

def hypergeometric_annihilator(n, d):
    """z F'' + (d - z) F' - n F for F = 1F1(n; d; z)."""
    if n < 1 or d < 1:
        raise ValueError("parameters must be positive integers")
    return OdeOperator([[Fraction(-n)], [Fraction(d), Fraction(-1)],
                        [Fraction(0), Fraction(1)]], EXACT)


def hyp1f1_taylor(n, d, count):
    """Exact Taylor coefficients (n)_j/((d)_j j!) of 1F1(n; d; z)."""
    out, c = [], Fraction(1)
    for j in range(count):
        out.append(c)
        c = c * (n + j) / ((d + j) * (j + 1))
    return out


class Coefficients(list):
    """Taylor coefficients with absolute error estimates and their context."""

    def __init__(self, values, errors, ctx):
        super().__init__(values)
        self.errors = errors
        self.ctx = ctx


def scale_coefficients(a, rho):
    """Coefficients of f(rho w) in w: a_j rho^j (errors scaled alike)."""
    ctx = a.ctx
    rho = ctx.mpf(rho)
    vals, errs, r = [], [], ctx.mpf(1)
    for v, e in zip(a, a.errors):
        vals.append(v * r)
        errs.append(e * r)
        r *= rho
    return Coefficients(vals, errs, ctx)


def _taylor_from_g(g, ctx):
    # a_j = sum_l G_l/l! (-1)^{j-l}/(j-l)!
    count = len(g)
    inv_f = [1 / ctx.factorial(j) for j in range(count)]
    gs = [g[l] * inv_f[l] for l in range(count)]
    alt = [inv_f[j] if j % 2 == 0 else -inv_f[j] for j in range(count)]
    return [ctx.fsum(gs[l] * alt[j - l] for l in range(j + 1)) for j in range(count)]


def _g_taylor(g, ctx):
    # g(z) = e^z h(z) = sum G_l z^l / l!
    return [v / ctx.factorial(l) for l, v in enumerate(g)]


def series_coefficients(kind, p, count, precision=100, guard=30, of="h"):
    """Taylor coefficients at z = 0 (x1 = c1 z, x2 = z) of h, or of e^z h.

    ``of="g"`` gives g(z) = e^z h(z), whose coefficients G_l/l! avoid the
    alternating convolution with e^{-z}. Computed twice, at ``precision``
    and ``precision + guard`` digits; the difference serves as the error
    estimate. Exact rationals are returned for the m.g.f. when
    ``precision`` is ``"exact"``.
    """
    if of not in ("h", "g"):
        raise ValueError("of must be 'h' or 'g'")
    taylor = _taylor_from_g if of == "h" else _g_taylor
    if precision == "exact":
        p = _rational_params(p)
        g = g_coefficients(kind, p, count, EXACT, c1=p.c1)
        vals = taylor(g, EXACT)
        return Coefficients(vals, [Fraction(0)] * count, EXACT)
    if precision < 50 and count >= 40:
        raise InsufficientPrecision("use at least 50 digits for 40+ coefficients")
    lo, hi = make_context(precision), make_context(precision + guard)
    a_lo = taylor(g_coefficients(kind, p, count, lo), lo)
    a_hi = taylor(g_coefficients(kind, p, count, hi), hi)
    vals = [lo.mpf(x) for x in a_hi]
    errs = [abs(lo.mpf(x) - lo.mpf(y)) for x, y in zip(a_lo, a_hi)]
    # log10 of the worst relative error (floats would underflow here)
    rel = [lo.log10(e / abs(v)) for e, v in zip(errs, vals) if v and e]
    worst = float(max(rel)) if rel else -math.inf
    # keep the coefficient noise well below the nullspace pivot threshold
    if not worst < -0.75 * precision:
        lost = precision + max(worst, -precision)
        raise InsufficientPrecision(
            "coefficient cancellation ate the working precision "
            "(relative error 1e%.0f at %d digits); raise the precision"
            % (worst, precision), needed=int(4 * lost) + 20)
    return Coefficients(vals, errs, lo)


def _rational_params(p):
    from dataclasses import replace
    return replace(p, gamma1=Fraction(p.gamma1), c1=Fraction(p.c1))


# linear algebra -------------------------------------------------------------

def _system(a, p, d, nrows):
    cols = [(i, k) for i in range(p + 1) for k in range(d + 1)]
    rows = []
    for n in range(nrows):
        rows.append([_rising(n - k + 1, i) * a[n - k + i] if n >= k else 0
                     for (i, k) in cols])
    return cols, rows


def nullspace(rows, ncols, ctx, rel_tol=None):
    """Basis of {x : rows x = 0} by Gauss-Jordan with partial pivoting.

    Exact for rationals; for floating contexts every row is scaled to unit
    max-norm and pivots below ``rel_tol`` count as zero. Also returns the
    smallest accepted pivot, a conditioning diagnostic.
    """
    exact = _is_exact(ctx)
    m = []
    for r in rows:
        if exact:
            m.append(list(r))
            continue
        sc = max(abs(v) for v in r)
        m.append([v / sc for v in r] if sc else list(r))
    if rel_tol is None:
        rel_tol = 0 if exact else ctx.mpf(10) ** (-PIVOT_DIGITS * ctx.dps)
    piv, r = [], 0
    small = None
    nr = len(m)
    for c in range(ncols):
        if r == nr:
            break
        best = max(range(r, nr), key=lambda i: abs(m[i][c]))
        if abs(m[best][c]) <= rel_tol:
            continue
        m[r], m[best] = m[best], m[r]
        inv = 1 / m[r][c]
        small = abs(m[r][c]) if small is None else min(small, abs(m[r][c]))
        m[r] = [v * inv for v in m[r]]
        for i in range(nr):
            f = m[i][c]
            if i != r and f != 0:
                row_i, row_r = m[i], m[r]
                for cc in range(c, ncols):
                    row_i[cc] -= f * row_r[cc]
        piv.append(c)
        r += 1
    pivset = set(piv)
    free = [c for c in range(ncols) if c not in pivset]
    zero, one = (Fraction(0), Fraction(1)) if exact else (ctx.mpf(0), ctx.mpf(1))
    basis = []
    for fc in free:
        v = [zero] * ncols
        v[fc] = one
        for ri, c in enumerate(piv):
            v[c] = -m[ri][fc]
        basis.append(v)
    return basis, small


def _ctx_of(a):
    ctx = getattr(a, "ctx", None)
    if ctx is not None:
        return ctx
    if a and isinstance(a[0], Fraction):
        return EXACT
    return make_context(100)


# pivots below 10^{-PIVOT_DIGITS dps} (rows at unit max-norm) count as zero;
# coefficients carry at least 0.75 dps correct digits
PIVOT_DIGITS = 0.65


def _fit_rows(p, d, margin=10):
    return (p + 1) * (d + 1) + margin


def _operator_basis(a, p, d, ctx, kept=None):
    nrows = _fit_rows(p, d)
    if nrows + p > len(a):
        raise ValueError("not enough coefficients for order %d degree %d" % (p, d))
    cols, rows = _system(a, p, d, nrows)
    basis, small = nullspace(rows, len(cols), ctx)
    if kept is not None:
        kept["min_pivot"] = small
    return cols, basis


def _vec_to_op(vec, cols, p, d, ctx, prov=None):
    coeffs = [[None] * (d + 1) for _ in range(p + 1)]
    for (i, k), v in zip(cols, vec):
        coeffs[i][k] = v
    return OdeOperator(coeffs, ctx, dict(prov or {}))


def _min_lc_element(basis, cols, p, d, ctx):
    """Combination of ``basis`` whose leading coefficient q_p has least degree.

    Echelon reduction of the q_p coefficient vectors from the top degree
    down; the last pivot row found carries the minimal degree.
    """
    exact = _is_exact(ctx)
    lead_idx = [cols.index((p, k)) for k in range(d + 1)]
    rows = [([v[j] for j in lead_idx], list(v)) for v in basis]
    thr = 0 if exact else ctx.mpf(10) ** (-PIVOT_DIGITS * ctx.dps)
    last = None
    for k in range(d, -1, -1):
        cand = [j for j, (l, _) in enumerate(rows)
                if abs(l[k]) > thr * max(1, max(abs(x) for x in l))]
        if not cand:
            continue
        j0 = max(cand, key=lambda j: abs(rows[j][0][k]))
        pl, pv = rows.pop(j0)
        last = (pl, pv)
        new = []
        for l, v in rows:
            f = l[k] / pl[k]
            new.append(([x - f * y for x, y in zip(l, pl)],
                        [x - f * y for x, y in zip(v, pv)]))
        rows = new
    if last is None:
        return None
    vec = last[1]
    if not exact:
        # drop entries that are pure round-off
        big = max(abs(x) for x in vec)
        vec = [x if abs(x) > thr * big else ctx.mpf(0) for x in vec]
    return vec


def _min_degree(a, p, dmax, ctx):
    """Least d <= dmax with a nonzero order-p annihilator, or None."""
    try:
        _, basis = _operator_basis(a, p, dmax, ctx)
    except ValueError:
        return None
    if not basis:
        return None
    lo, hi = 0, dmax
    while lo < hi:
        mid = (lo + hi) // 2
        if _operator_basis(a, p, mid, ctx)[1]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def certify(op, coeffs, fit_count, tol=None):
    """Check the operator's recurrence on coefficients beyond ``fit_count``.

    Only rows whose coefficient window lies entirely in the holdout part
    are used. Float contexts get a tolerance of 10^{-0.3 dps}. When the
    coefficients carry error estimates the tolerance is the rounding noise
    of the fit (10^{-dps} over the smallest pivot, with margin) widened by
    the propagated coefficient error; an approximate annihilator whose
    residual does not shrink with the working precision fails this.
    """
    ctx = op.ctx if op.ctx is not None else _ctx_of(coeffs)
    d, p = op.degree, op.order
    first = fit_count + d
    last = len(coeffs) - 1 - p
    rows = range(first, last + 1)
    holdout = len(coeffs) - fit_count
    if not rows:
        return Certification(fit_count, holdout, math.inf, 0.0, False)
    exact = _is_exact(ctx)
    errs = getattr(coeffs, "errors", None)
    # rounding noise of the null vector, amplified by the fit's conditioning
    pivot = op.provenance.get("min_pivot")
    if exact:
        fit_noise = 0
    elif not pivot:
        fit_noise = 10.0 ** (-0.9 * ctx.dps)
    else:
        fit_noise = min(1e6 * 10.0 ** (-ctx.dps) / pivot, 10.0 ** (-0.3 * ctx.dps))
    worst = 0.0
    worst_tol = 0.0
    for n in rows:
        terms = _row_terms(op.coeffs, coeffs, n)
        scale = sum(abs(t) for t in terms)
        tot = sum(terms) if exact else ctx.fsum(terms)
        res = abs(tot) / scale if scale else abs(tot)
        if tol is None:
            row_tol = 0.0 if exact else 10.0 ** (-0.3 * ctx.dps)
            if errs is not None and not exact and scale:
                # known coefficient errors: the residual may exceed the
                # rounding noise of the fit only by the propagated error
                prop = sum(abs(c) * _rising(n - k + 1, i) * errs[n - k + i]
                           for i, q in enumerate(op.coeffs)
                           for k, c in enumerate(q) if n >= k and c != 0)
                row_tol = max(fit_noise, 1e3 * float(prop / scale))
        else:
            row_tol = tol
        res = float(res) if not exact else res
        if exact:
            ok = res == 0 if tol is None else res < row_tol
        else:
            ok = res < row_tol
        if not ok and (res - row_tol) > (worst - worst_tol):
            worst, worst_tol = res, row_tol
        if ok and worst_tol == 0.0 and res > worst:
            worst, worst_tol = res, row_tol
        if not ok:
            return Certification(fit_count, holdout, float(res), float(row_tol), False)
    return Certification(fit_count, holdout, float(worst), float(worst_tol),
                         holdout >= fit_count)


def guess_annihilator(coeffs, max_order, max_degree=8, tol=None, degree_cap=24,
                      degree_step=4, min_order=1):
    """Smallest-order operator annihilating the coefficient sequence.

    The degree bound starts at ``max_degree`` and grows by ``degree_step``
    up to ``degree_cap``. At each bound, orders ``min_order..max_order`` are
    tried in turn; the first with a nonempty null space wins, its minimal
    degree is located, and the candidate is certified on held-out
    coefficients before being returned (normalized).
    """
    ctx = _ctx_of(coeffs)
    n = len(coeffs)
    bounds = list(range(max_degree, degree_cap + 1, degree_step)) or [max_degree]
    tried = False
    for dbound in bounds:
        for p in range(min_order, max_order + 1):
            if 2 * (_fit_rows(p, dbound) + p) > n:
                continue
            tried = True
            d = _min_degree(coeffs, p, dbound, ctx)
            if d is None:
                continue
            op = _best_at(coeffs, p, d, ctx)
            if op is None:
                continue
            fit = _fit_rows(p, d) + p
            cert = certify(op, coeffs, fit, tol)
            if cert.passed:
                op.provenance.update(fit_coeffs=fit, holdout_coeffs=n - fit,
                                     max_residual=cert.max_residual)
                return op
    if not tried:
        raise ValueError("need at least 2*((max_order+1)*(max_degree+1)+10+max_order) "
                         "coefficients")
    raise NoOperatorFound("no operator found; raise bounds")


def _best_at(coeffs, p, d, ctx):
    kept = {}
    cols, basis = _operator_basis(coeffs, p, d, ctx, kept)
    if not basis:
        return None
    vec = _min_lc_element(basis, cols, p, d, ctx)
    if vec is None:
        return None
    prov = {}
    if kept.get("min_pivot") is not None and not _is_exact(ctx):
        prov["min_pivot"] = float(kept["min_pivot"])
    try:
        return _vec_to_op(vec, cols, p, d, ctx, prov).normalized()
    except ValueError:
        return None


def leading_roots(op):
    """Roots of the leading coefficient q_p (float)."""
    lc = [float(c) for c in op.leading]
    k = _deg(op.leading)
    if k <= 0:
        return np.array([])
    return np.roots(lc[:k + 1][::-1])


def real_roots_in(op, lo, hi, clearance=1e-9):
    out = []
    for r in leading_roots(op):
        if abs(r.imag) <= 1e-7 * max(1.0, abs(r)) and lo - clearance <= r.real <= hi + clearance:
            out.append(float(r.real))
    return sorted(out)


def desingularize(coeffs, op, lo, hi, extra_orders=2, degree_slack=8, tol=None):
    """Return an operator whose leading coefficient has no root on [lo, hi].

    If ``op`` already qualifies it is returned. Otherwise orders
    ``op.order + 1 ..`` are tried; at each degree the member of the
    operator space with minimal-degree leading coefficient is taken.
    """
    if not real_roots_in(op, lo, hi):
        return op
    ctx = op.ctx if op.ctx is not None else _ctx_of(coeffs)
    n = len(coeffs)
    for p in range(op.order + 1, op.order + extra_orders + 1):
        dmax_avail = _max_degree_for(p, n)
        dmin = _min_degree(coeffs, p, min(dmax_avail, op.degree), ctx)
        if dmin is None:
            continue
        for d in range(dmin, min(dmin + degree_slack, dmax_avail) + 1):
            cand = _best_at(coeffs, p, d, ctx)
            if cand is None or real_roots_in(cand, lo, hi):
                continue
            fit = _fit_rows(p, d) + p
            cert = certify(cand, coeffs, fit, tol)
            if cert.passed:
                cand.provenance.update(op.provenance)
                cand.provenance.update(fit_coeffs=fit, holdout_coeffs=n - fit,
                                       max_residual=cert.max_residual,
                                       desingularized_from=op.order)
                return cand
    raise NoOperatorFound("could not clear singular points %s from [%g, %g]"
                          % (real_roots_in(op, lo, hi), lo, hi))


def _max_degree_for(p, n):
    # largest d with 2*(fit rows + p) <= n
    d = 0
    while 2 * (_fit_rows(p, d + 1) + p) <= n:
        d += 1
    return d


def to_companion(op, z0=None, interval=None):
    """Companion system for the stack (h, h', ..., h^{(p-1)})."""
    q = op.float_coeffs()
    if z0 is not None and np.polyval(q[-1][::-1], z0) == 0:
        raise SingularExpansionPoint("expansion point is singular; shift z0")
    if interval is not None:
        sing = real_roots_in(op, interval[0], interval[1])
    else:
        sing = sorted(float(r.real) for r in leading_roots(op)
                      if abs(r.imag) <= 1e-7 * max(1.0, abs(r)))
    if z0 is not None and any(abs(z0 - s) < 1e-9 for s in sing):
        raise SingularExpansionPoint("expansion point is singular; shift z0")
    return CompanionSystem(dim=op.order, q=q, singular_points=sing,
                           roots=[complex(r) for r in leading_roots(op)])


def adaptive_coefficients(kind, p, count, precision=100, max_precision=3000, of="h"):
    """series_coefficients, raising the precision until the error check passes."""
    digits = precision
    while True:
        try:
            return series_coefficients(kind, p, count, precision=digits, of=of)
        except InsufficientPrecision as err:
            if digits >= max_precision:
                raise
            digits = min(max(digits + 50, err.needed or 0), max_precision)


def operator_for(kind, p, lo, hi, max_order=7, precision=200, max_degree=8,
                 degree_cap=24, clear_path=True):
    """Certified operator in z for ``kind`` at parameters ``p``.

    With ``clear_path`` the operator is desingularized so its leading
    coefficient has no root on [lo, hi]; otherwise the minimal operator is
    returned as guessed.

    The operator is guessed for g = e^z h (cancellation-free coefficients)
    and conjugated back to h. The degree bound grows until guessing
    succeeds; the working precision grows whenever the coefficient error
    check fails.
    """
    fetch = lambda n, digits: scale_coefficients(
        adaptive_coefficients(kind, p, n, digits, of="g"), rho)
    dcap = max_degree
    last_err = None
    # guess in w = z/rho so the coefficients stay balanced over the path
    rho = max(float(hi), 1.0)
    while dcap <= degree_cap:
        count = 2 * (_fit_rows(max_order, dcap) + max_order)
        a = fetch(count, precision)
        try:
            op = guess_annihilator(a, max_order, max_degree=max_degree,
                                   degree_cap=dcap)
        except NoOperatorFound as err:
            last_err = err
            dcap += 4
            continue
        # more room for the desingularization search
        need = 2 * (_fit_rows(op.order + 2, op.degree + 8) + op.order + 2)
        if clear_path and need > len(a):
            a = fetch(need, a.ctx.dps)
        if clear_path:
            op = desingularize(a, op, lo / rho, hi / rho)
        op = op.rescaled(rho).exp_conjugated(1)
        op.provenance.update(scale=rho, guessed_for="exp(z) h(z)", measure=measure_to_dict(kind), gamma1=p.gamma1,
                             c1=p.c1, n_rx=p.n_rx, n_tx=p.n_tx,
                             precision=a.ctx.dps, interval=[lo, hi])
        return op
    raise NoOperatorFound(str(last_err))
