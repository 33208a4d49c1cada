"""
Holonomic gradient method: integrate a companion system in z from a small
z0, where the series is accurate, out to the target z.
"""

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import deq
from .channel import correlation_for, derive_snr_params
from .series import (OutageProb, TruncationPolicy, eval_series,
                     eval_series_derivatives)


class SingularPathError(ArithmeticError):
    pass


class StiffOrSingular(ArithmeticError):
    pass


class OutageBoundsError(ArithmeticError):
    pass


class HgmStageError(RuntimeError):
    """A component failure, labelled with the pipeline stage."""

    def __init__(self, stage, err):
        super().__init__("%s: %s" % (stage, err))
        self.stage = stage
        self.cause = err


@dataclass(frozen=True)
class SolverConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    max_step: float = math.inf
    singularity_clearance: float = 1e-6
    max_steps: int = 200000
    # step around real singular points in the complex plane instead of failing
    detour: bool = False

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class HgmProblem:
    system: deq.CompanionSystem
    z0: float
    v0: np.ndarray
    targets: list

    def __post_init__(self):
        self.v0 = np.asarray(self.v0, dtype=float)
        t = list(self.targets)
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("targets must be strictly increasing")
        if t and t[0] < self.z0:
            raise ValueError("targets must not precede z0")
        if any(abs(self.z0 - s) < 1e-9 for s in self.system.singular_points):
            raise ValueError("z0 sits on a singular point")


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])
_E = _B - _B4
# continuous extension of order 4 (Shampine's coefficients)
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])


@dataclass
class Trajectory:
    """Accepted steps with their stage derivatives, for dense output."""

    z: list = field(default_factory=list)
    y: list = field(default_factory=list)
    k: list = field(default_factory=list)
    nfev: int = 0

    def __call__(self, zq):
        i = int(np.searchsorted(self.z, zq, side="right")) - 1
        i = min(max(i, 0), len(self.k) - 1)
        h = self.z[i + 1] - self.z[i]
        x = (zq - self.z[i]) / h
        q = self.k[i].T @ _P
        return self.y[i] + h * q @ np.array([x, x * x, x ** 3, x ** 4])


def _rms(x):
    return math.sqrt(float(np.mean(np.abs(x) ** 2)))


def _initial_step(f, z0, y0, f0, cfg, span):
    sc = cfg.abs_tol + np.abs(y0) * cfg.rel_tol
    d0, d1 = _rms(y0 / sc), _rms(f0 / sc)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    d2 = _rms((f(z0 + h0, y1) - f0) / sc) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span, cfg.max_step)


def dopri5(f, z0, y0, targets, cfg=None, trajectory=False):
    """Adaptive Dormand-Prince 5(4) integration of y' = f(z, y).

    Steps are shortened to land exactly on each target. Returns the states
    at the targets (and the trajectory for dense output when requested).
    """
    cfg = cfg or SolverConfig()
    y = np.array(y0, dtype=complex if np.iscomplexobj(y0) else float)
    z = float(z0)
    out = []
    traj = Trajectory(z=[z], y=[y.copy()]) if trajectory else None
    if not targets:
        return (out, traj) if trajectory else out
    fz = f(z, y)
    nfev = 1
    span = targets[-1] - z
    h = _initial_step(f, z, y, fz, cfg, span) if span > 0 else 0.0
    nfev += 1
    ti = 0
    steps = 0
    while ti < len(targets):
        tgt = targets[ti]
        if tgt - z <= 1e-14 * max(1.0, abs(tgt)):
            out.append(y.copy())
            ti += 1
            continue
        h = min(h, cfg.max_step)
        last = False
        if z + h >= tgt:
            h = tgt - z
            last = True
        ks = np.empty((7, y.size), dtype=y.dtype)
        ks[0] = fz
        for s in range(1, 7):
            ys = y + h * np.dot(_A[s], ks[:s])
            ks[s] = f(z + _C[s] * h, ys)
        nfev += 6
        y_new = y + h * np.dot(_B, ks)
        err_vec = h * np.dot(_E, ks)
        sc = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
        err = _rms(err_vec / sc)
        if not np.isfinite(err):
            err = math.inf
        if err <= 1.0:
            z = tgt if last else z + h
            y = y_new
            fz = ks[6]
            if traj is not None:
                traj.z.append(z)
                traj.y.append(y.copy())
                traj.k.append(ks.copy())
            fac = 5.0 if err == 0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = h * fac if not last else max(h * fac, h)
        else:
            h = h * max(0.2, 0.9 * err ** -0.2)
        steps += 1
        if h < 1e-14 * max(1.0, abs(z)) or steps > cfg.max_steps:
            raise StiffOrSingular("stiff or singular system near z=%g" % z)
    if traj is not None:
        traj.nfev = nfev
        return out, traj
    return out


def integrate(problem, cfg=None):
    """h at every target of ``problem`` (first stack component)."""
    cfg = cfg or SolverConfig()
    states = integrate_states(problem, cfg)
    return [float(np.real(s[0])) for s in states]


def _obstacles(system, lo, hi, cfg):
    return [s for s in system.singular_points
            if lo - cfg.singularity_clearance <= s <= hi + cfg.singularity_clearance]


def integrate_states(problem, cfg=None):
    cfg = cfg or SolverConfig()
    if not problem.targets:
        return []
    lo, hi = problem.z0, problem.targets[-1]
    bad = _obstacles(problem.system, lo, hi, cfg)
    if bad and not cfg.detour:
        raise SingularPathError(
            "singular point(s) %s on the path [%g, %g]; re-guess with a "
            "higher order or move z0" % (bad, lo, hi))
    if not bad:
        return dopri5(problem.system.rhs, problem.z0, problem.v0,
                      list(problem.targets), cfg)
    return _detour_states(problem, bad, cfg)


def detour_path(z0, targets, bad, roots):
    """Waypoints from z0 to the last target, bumping over each point in ``bad``.

    Each bump is a box of half-width r in the upper half plane, with r at
    most half the distance to any other root, the path ends, targets or
    neighbouring bumps. The solution is analytic at apparent singularities,
    so its continuation along the bump is the value on the real axis.
    """
    stops = [z0] + list(targets)
    pts = [z0]
    for c in sorted(set(bad)):
        others = [abs(complex(c) - r) for r in roots if abs(complex(c) - r) > 1e-9]
        gaps = others + [abs(c - s) for s in stops] + [abs(c - b) for b in bad if b != c]
        r = 0.5 * min(gaps) if gaps else 0.5
        r = min(r, 1.0)
        if r <= 1e-6:
            raise SingularPathError("no room to step around the singular point %g" % c)
        pts += [c - r, complex(c - r, r), complex(c + r, r), c + r]
    if pts[-1] != stops[-1]:
        pts.append(stops[-1])
    return pts


def _detour_states(problem, bad, cfg):
    sysm = problem.system
    pts = detour_path(problem.z0, problem.targets, bad, sysm.roots)
    # real waypoints split the targets into runs along the real axis
    v = np.asarray(problem.v0, dtype=complex)
    out = []
    tgts = list(problem.targets)
    ti = 0
    for a, b in zip(pts, pts[1:]):
        a, b = complex(a), complex(b)
        d = b - a
        f = lambda t, y, a=a, d=d: d * sysm.rhs(a + t * d, y)
        ts = []
        if a.imag == 0 and b.imag == 0:
            while ti < len(tgts) and tgts[ti] <= b.real:
                ts.append((tgts[ti] - a.real) / d.real)
                ti += 1
        res = dopri5(f, 0.0, v, ts + [1.0], cfg)
        out.extend(res[:len(ts)])
        v = res[-1]
    return out


def initial_vector(kind, p, z0, dim, precision=60, rel_tol=1e-12, n_max=1000):
    """[h(z0), h'(z0), ..., h^{(dim-1)}(z0)] from the series."""
    pol = TruncationPolicy(rel_tol=rel_tol, n_max=n_max, precision=precision)
    return [float(v) for v in eval_series_derivatives(kind, p, z0, dim - 1, pol)]


def z_at_k(z_target, k_target_db, k_db):
    """x2 scales linearly with K (linear units) at fixed geometry."""
    return z_target * 10 ** ((k_db - k_target_db) / 10.0)


@dataclass
class HgmOutcome:
    value: float
    z0: float
    z_target: float
    k0_db: float
    operator: object
    v0: list
    seconds: float
    params: object

    @property
    def dim(self):
        return self.operator.order if self.operator is not None else 0


def hgm_solve(spec, kind, gamma_s, cfg=None, r_t=None, stream=0, k0_db=-25.0,
              precision=200, max_order=7, operator=None, singular="detour"):
    """End-to-end HGM evaluation at the target K of ``spec``.

    Parameters are frozen at the target (Gamma_1, c1, tau, ...), the operator
    in z is guessed and certified, the initial stack is summed at
    z0 = z(K0) with K0 in {-25, -30, ...} dB, and the companion system is
    integrated to z_target = x2.

    Apparent singularities of the minimal operator on the path are stepped
    around in the complex plane (``singular="detour"``) or removed by
    re-guessing at higher order (``singular="desingularize"``). The latter
    can add fast-growing spurious solutions, so it is not the default.
    """
    if singular not in ("detour", "desingularize"):
        raise ValueError("singular must be 'detour' or 'desingularize'")
    cfg = cfg or SolverConfig()
    if singular == "detour" and not cfg.detour:
        cfg = replace(cfg, detour=True)
    t0 = time.perf_counter()
    try:
        if r_t is None:
            r_t = correlation_for(spec)
        p = derive_snr_params(spec, r_t, gamma_s, stream)
    except Exception as err:
        raise HgmStageError("channel", err) from err
    pol = TruncationPolicy(rel_tol=1e-12, n_max=1000, precision=50)
    if p.x2 == 0 or spec.k_db <= k0_db:
        # nothing to integrate: the series itself is the answer
        try:
            res = eval_series(kind, p, pol)
        except Exception as err:
            raise HgmStageError("series", err) from err
        val = _checked(kind, float(res.value))
        return HgmOutcome(val, p.x2, p.x2, spec.k_db, None, [val],
                          time.perf_counter() - t0, p)
    zt = p.x2
    z0 = z_at_k(zt, spec.k_db, k0_db)
    try:
        op = operator or deq.operator_for(kind, p, z0, zt, max_order=max_order,
                                          precision=precision,
                                          clear_path=singular == "desingularize")
    except Exception as err:
        raise HgmStageError("operator", err) from err
    dim = op.order
    k0 = k0_db
    while True:
        try:
            v0 = initial_vector(kind, p, z0, dim)
            break
        except ArithmeticError as err:
            k0 -= 5.0
            z0 = z_at_k(zt, spec.k_db, k0)
            if k0 < -80:
                raise HgmStageError("initial", err) from err
    try:
        system = deq.to_companion(op, z0, (z0, zt))
        # the system is linear, so scale the stack to make abs_tol relative
        scale = abs(v0[0]) or 1.0
        prob = HgmProblem(system, z0, np.array(v0) / scale, [zt])
        val = integrate(prob, cfg)[0] * scale
    except Exception as err:
        raise HgmStageError("integrate", err) from err
    val = _checked(kind, val)
    return HgmOutcome(val, z0, zt, k0, op, v0, time.perf_counter() - t0, p)


def _checked(kind, val):
    if isinstance(kind, OutageProb):
        if not -1e-8 <= val <= 1 + 1e-8:
            raise OutageBoundsError(
                "outage %g outside [0, 1]: wrong operator or singular passage" % val)
        val = min(max(val, 0.0), 1.0)
    return val


def hgm_measure(spec, kind, gamma_s, cfg=None, **kw):
    """HGM value of ``kind`` for the channel at the target K of ``spec``."""
    return hgm_solve(spec, kind, gamma_s, cfg, **kw).value
