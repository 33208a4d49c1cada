"""
Experiment drivers: outage and capacity sweeps, WINNER-averaged outage,
the outage-table reproduction and the validation suite.

Every driver returns rows (dicts) in grid order. Grid points may run in a
process pool (``ZFHGM_WORKERS``); assembly is in grid order so the CSV is
identical for a given config and seed.
"""

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import numpy as np

from . import baselines, deq, hgm, montecarlo
from .channel import (ChannelSpec, CorrelationMatrix, correlation_for, db2lin,
                      derive_snr_params, gamma_s_from_gamma_b, load_scenarios,
                      sample_winner_params, scenario_spec)
from .series import (Capacity, Mgf, OutageProb, TruncationPolicy,
                     eval_double_series, eval_series, measure_to_dict)

ENGINES = ("series", "double", "hgm", "mc", "gamma", "rayleigh")
AXES = ("gamma_b", "as", "k", "theta_t")
TAU_DB = 8.2


@dataclass
class ExperimentConfig:
    scenario: str = "A1"
    n_a: int = 1
    n_rx: int = 6
    n_tx: int = 4
    k_db: float = None
    as_deg: float = None
    theta_r_deg: float = None
    theta_t_deg: float = None
    theta_c_deg: float = None
    axis: str = "gamma_b"
    grid: list = field(default_factory=lambda: [15.0, 25.0])
    engines: list = field(default_factory=lambda: ["series", "hgm"])
    tau_db: float = TAU_DB
    gamma_b_db: float = 15.0
    gamma_s_db: float = 10.0
    mc_samples: int = 100_000
    mc_batch: int = 20_000
    winner_samples: int = 2100
    seed: int = 0
    precision: int = 200
    series_n_max: int = 150
    scenarios_file: str = None

    def __post_init__(self):
        if not self.engines:
            raise ValueError("select at least one engine")
        bad = [e for e in self.engines if e not in ENGINES]
        if bad:
            raise ValueError("unknown engine(s) %s; choose from %s" % (bad, ENGINES))
        if self.axis not in AXES:
            raise ValueError("axis must be one of %s" % (AXES,))
        if not self.grid or list(self.grid) != sorted(self.grid):
            raise ValueError("grid must be nonempty and sorted")
        if self.n_a < 1:
            raise ValueError("n_a must be positive")

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path) as fh:
            data = json.load(fh)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def scenario_table(self):
        return load_scenarios(self.scenarios_file)

    def base_spec(self):
        over = {k: getattr(self, k) for k in
                ("k_db", "as_deg", "theta_r_deg", "theta_t_deg", "theta_c_deg")
                if getattr(self, k) is not None}
        return scenario_spec(self.scenario, self.n_rx * self.n_a,
                             self.n_tx * self.n_a, self.scenario_table(), **over)

    def spec_at(self, x):
        """Channel spec at grid value ``x`` (unchanged for the Gamma_b axis)."""
        s = self.base_spec()
        if self.axis == "as":
            return replace(s, as_deg=x)
        if self.axis == "k":
            return replace(s, k_db=x)
        if self.axis == "theta_t":
            return replace(s, theta_t_deg=x)
        return s

    @property
    def tau(self):
        return db2lin(self.tau_db)

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _workers():
    try:
        return max(1, int(os.environ.get("ZFHGM_WORKERS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = _workers()
    if n > 1 and len(items) > 1:
        with ProcessPoolExecutor(n) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _row(axis_value, engine, value=None, converged="", ci_lo="", ci_hi="", error=""):
    return dict(x=axis_value, engine=engine,
                value="" if value is None else "%.12e" % value,
                converged=converged, ci_lo=ci_lo, ci_hi=ci_hi, error=error)


def _ci(est, k=3.0):
    return "%.6e" % (est.mean - k * est.se), "%.6e" % (est.mean + k * est.se)


# outage ---------------------------------------------------------------------

def _outage_point(job):
    cfg, gb = job
    spec = cfg.base_spec()
    r_t = correlation_for(spec)
    gs = gamma_s_from_gamma_b(gb)
    kind = OutageProb(cfg.tau)
    rows, timing = [], {}
    for eng in cfg.engines:
        t0 = time.perf_counter()
        try:
            rows.append(_outage_engine(eng, cfg, spec, r_t, gs, kind, gb))
        except Exception as err:  # recorded in-row; the sweep continues
            rows.append(_row(gb, eng, error="%s: %s" % (type(err).__name__, err)))
        timing[eng] = time.perf_counter() - t0
    return rows, timing


def _outage_engine(eng, cfg, spec, r_t, gs, kind, gb):
    if eng in ("series", "double"):
        p = derive_snr_params(spec, r_t, gs)
        pol = TruncationPolicy(n_max=cfg.series_n_max)
        res = eval_series(kind, p, pol) if eng == "series" else eval_double_series(kind, p, pol)
        ok = res.converged and res.trusted
        return _row(gb, eng, float(res.value), "yes" if ok else "no")
    if eng == "hgm":
        out = hgm.hgm_solve(spec, kind, gs, r_t=r_t, precision=cfg.precision)
        return _row(gb, eng, out.value, "yes")
    if eng == "mc":
        sim = montecarlo.SimConfig(cfg.mc_samples, cfg.seed, cfg.mc_batch)
        est = montecarlo.estimate(spec, r_t, gs, cfg.tau, sim, workers=1)
        lo, hi = _ci(est.p_out)
        return _row(gb, eng, est.p_out.mean, "", lo, hi)
    if eng == "gamma":
        return _row(gb, eng, baselines.gamma_approx_measures(spec, r_t, gs, kind), "yes")
    if eng == "rayleigh":
        return _row(gb, eng, rayleigh_reference(spec, r_t, gs, cfg.tau), "yes")
    raise ValueError(eng)


def rayleigh_reference(spec, r_t, gamma_s, tau):
    """Outage under Rayleigh fading (K = 0) with the same R_T."""
    p = derive_snr_params(spec.with_k(-math.inf), r_t, gamma_s)
    return baselines.rayleigh_outage(spec.n_dof, tau / p.gamma1)


def run_outage_sweep(cfg):
    """Rows (Gamma_b, engine, value, converged, CI) plus per-point timings."""
    if cfg.axis != "gamma_b":
        raise ValueError("outage sweeps run over gamma_b")
    parts = _pmap(_outage_point, [(cfg, x) for x in cfg.grid])
    rows = [r for rs, _ in parts for r in rs]
    timings = [dict(x=x, **t) for x, (_, t) in zip(cfg.grid, parts)]
    return rows, timings


# averaged outage ------------------------------------------------------------

def _averaged_point(job):
    cfg, gb, draws = job
    base = cfg.base_spec()
    gs = gamma_s_from_gamma_b(gb)
    kind = OutageProb(cfg.tau)
    vals, ray, failures = [], [], 0
    for k_db, as_deg in draws:
        spec = replace(base, k_db=k_db, as_deg=as_deg)
        r_t = correlation_for(spec)
        ray.append(rayleigh_reference(spec, r_t, gs, cfg.tau))
        try:
            vals.append(hgm.hgm_solve(spec, kind, gs, r_t=r_t,
                                      precision=cfg.precision).value)
        except Exception:
            failures += 1
    return vals, ray, failures


class TooManyFailures(RuntimeError):
    pass


def run_averaged_outage(cfg):
    """Outage averaged over (K, AS) draws from the scenario's lognormal laws."""
    draws = sample_winner_params(cfg.scenario, cfg.winner_samples, cfg.seed,
                                 cfg.scenario_table())
    parts = _pmap(_averaged_point, [(cfg, x, draws) for x in cfg.grid])
    rows = []
    total_fail = 0
    for gb, (vals, ray, fails) in zip(cfg.grid, parts):
        total_fail += fails
        if fails > 0.01 * len(draws):
            raise TooManyFailures("%d of %d HGM evaluations failed at %g dB"
                                  % (fails, len(draws), gb))
        rows.append(_row(gb, "hgm-avg", math.fsum(vals) / len(vals),
                         "yes" if not fails else "%d failed" % fails))
        rows.append(_row(gb, "rayleigh-avg", math.fsum(ray) / len(ray), "yes"))
    return rows, dict(samples=len(draws), failures=total_fail)


# capacity -------------------------------------------------------------------

def _capacity_point(job):
    cfg, x = job
    spec = cfg.spec_at(x)
    r_t = correlation_for(spec)
    gs = db2lin(cfg.gamma_s_db)
    rows, timing = [], {}
    for eng in cfg.engines:
        t0 = time.perf_counter()
        try:
            rows.extend(_capacity_engine(eng, cfg, spec, r_t, gs, x))
        except Exception as err:
            rows.append(_row(x, eng, error="%s: %s" % (type(err).__name__, err)))
        timing[eng] = time.perf_counter() - t0
    return rows, timing


def _capacity_engine(eng, cfg, spec, r_t, gs, x):
    streams = range(spec.n_tx)
    kind = Capacity()
    if eng == "hgm":
        # symmetric arrays give identical parameters for mirrored streams
        done, vals = {}, []
        for k in streams:
            p = derive_snr_params(spec, r_t, gs, k)
            key = (p.gamma1, p.x1, p.x2)
            if key not in done:
                done[key] = hgm.hgm_solve(spec, kind, gs, r_t=r_t, stream=k,
                                          precision=cfg.precision).value
            vals.append(done[key])
        return [_row(x, "hgm-zf", math.fsum(vals), "yes")]
    if eng in ("series", "double"):
        pol = TruncationPolicy(n_max=cfg.series_n_max)
        fn = eval_series if eng == "series" else eval_double_series
        res = [fn(kind, derive_snr_params(spec, r_t, gs, k), pol) for k in streams]
        ok = all(r.converged and r.trusted for r in res)
        return [_row(x, eng + "-zf", math.fsum(float(r.value) for r in res),
                     "yes" if ok else "no")]
    if eng == "mc":
        sim = montecarlo.SimConfig(cfg.mc_samples, cfg.seed, cfg.mc_batch)
        est = montecarlo.estimate(spec, r_t, gs, cfg.tau, sim, workers=1)
        return [_row(x, "mc-zf", est.zf_sum_rate.mean, "", *_ci(est.zf_sum_rate)),
                _row(x, "mc-ml", est.ml_sum_rate.mean, "", *_ci(est.ml_sum_rate))]
    if eng == "gamma":
        tot = math.fsum(baselines.gamma_approx_measures(spec, r_t, gs, kind, k)
                        for k in streams)
        return [_row(x, "gamma-zf", tot, "yes")]
    raise ValueError("engine %s does not compute capacity" % eng)


def run_capacity_sweep(cfg):
    """ZF sum rate (per engine) and ML sum rate along an AS, K or theta_T grid."""
    if cfg.axis == "gamma_b":
        raise ValueError("capacity sweeps run over as, k or theta_t")
    parts = _pmap(_capacity_point, [(cfg, x) for x in cfg.grid])
    rows = [r for rs, _ in parts for r in rs]
    timings = [dict(x=x, **t) for x, (_, t) in zip(cfg.grid, parts)]
    return rows, timings


# outage table ------------------------------------------------------------

def reference_table():
    text = resources.files("zfhgm").joinpath("data/table1.json").read_text()
    return json.loads(text)


def _table_row(job):
    entry, precision, tau = job
    spec = scenario_spec(entry["scenario"], 6 * entry["n_a"], 4 * entry["n_a"])
    r_t = correlation_for(spec)
    kind = OutageProb(tau)
    out = dict(scenario=entry["scenario"], as_deg="%.0f" % spec.as_deg,
               n_a=entry["n_a"])
    for tag, gb, ref in (("a", entry["gb_a"], entry["a"]), ("b", entry["gb_b"], entry["b"])):
        gs = gamma_s_from_gamma_b(gb)
        p = derive_snr_params(spec, r_t, gs)
        t0 = time.perf_counter()
        res = eval_series(kind, p, TruncationPolicy(n_max=150))
        ts = time.perf_counter() - t0
        t0 = time.perf_counter()
        try:
            val = hgm.hgm_solve(spec, kind, gs, r_t=r_t, precision=precision).value
            err = ""
        except Exception as e:
            val, err = math.nan, "%s: %s" % (type(e).__name__, e)
        th = time.perf_counter() - t0
        out.update({
            "gb_" + tag: gb,
            "hgm_" + tag: "%.4e" % val,
            "ref_" + tag: "%.3g" % ref,
            "rel_err_" + tag: "%.3f" % (val / ref - 1) if not math.isnan(val) else "",
            "series_" + tag: "%.4e" % float(res.value),
            "series_ok_" + tag: "yes" if res.converged and res.trusted else "no",
            "series_n_" + tag: res.n_used,
            "error_" + tag: err,
            "_seconds_" + tag: dict(series=ts, hgm=th),
        })
    return out


def run_table1(entries=None, precision=200, tau_db=TAU_DB):
    entries = entries if entries is not None else reference_table()
    rows = _pmap(_table_row, [(e, precision, db2lin(tau_db)) for e in entries])
    timings = [{k[1:]: r.pop(k) for k in list(r) if k.startswith("_")} for r in rows]
    return rows, timings


# operator guessing ----------------------------------------------------------

def guess_ode(cfg, measure="outage", stream=0):
    """Certified operator (JSON) for the measure at the config's first grid point."""
    spec = cfg.spec_at(cfg.grid[0])
    gb = cfg.grid[0] if cfg.axis == "gamma_b" else cfg.gamma_b_db
    gs = gamma_s_from_gamma_b(gb) if cfg.axis == "gamma_b" else db2lin(cfg.gamma_s_db)
    kind = {"outage": OutageProb(cfg.tau), "capacity": Capacity(),
            "mgf": Mgf(-1.0)}[measure]
    p = derive_snr_params(spec, correlation_for(spec), gs, stream)
    if p.x2 == 0:
        raise ValueError("x2 = 0: the series is closed form here, no ODE needed")
    z0 = hgm.z_at_k(p.x2, spec.k_db, -25.0)
    return deq.operator_for(kind, p, z0, p.x2, precision=cfg.precision)


# validation -----------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: dict


def _check(name, fn):
    try:
        ok, detail = fn()
    except Exception as err:
        ok, detail = False, dict(error="%s: %s" % (type(err).__name__, err))
    return Check(name, bool(ok), detail)


def _same_operator(a, b):
    if a.order != b.order:
        return False
    w = max(a.degree, b.degree) + 1
    pad = lambda q: list(q) + [0] * (w - len(q))
    return all(pad(x) == pad(y) for x, y in zip(a.coeffs, b.coeffs))


def run_validation_suite(cfg=None, mc_samples=100_000, x1_sign=1.0):
    """Self-checks with their own oracles; ``x1_sign`` exists for mutation tests."""
    cfg = cfg or ExperimentConfig()
    spec = cfg.base_spec()
    r_t = correlation_for(spec)
    gs = gamma_s_from_gamma_b(cfg.gamma_b_db)
    checks = []

    def z0_mapping():
        s = ChannelSpec(6, 4, -25.0, 51.0)
        x2 = derive_snr_params(s, CorrelationMatrix.identity(4), 1.0).x2
        return round(x2, 5) == 0.05692, dict(x2=x2)

    def anchors():
        r51 = abs(correlation_for(replace(spec, as_deg=51.0)).r_t[0, 1])
        r11 = abs(correlation_for(replace(spec, as_deg=11.0)).r_t[0, 1])
        return abs(r51 - 0.12) <= 0.02 and abs(r11 - 0.83) <= 0.02, dict(r51=r51, r11=r11)

    def ode_recovery():
        a = deq.hyp1f1_taylor(3, 8, 60)
        op = deq.guess_annihilator(a, 3, max_degree=2)
        cert = deq.certify(op, a, op.provenance["fit_coeffs"])
        want = deq.hypergeometric_annihilator(3, 8).normalized()
        return _same_operator(op, want) and cert.max_residual == 0, dict(
            operator=str(op.coeffs), residual=float(cert.max_residual))

    def x_proportionality():
        p1 = derive_snr_params(spec, r_t, gs)
        p2 = derive_snr_params(replace(spec, k_db=spec.k_db + 3), r_t, gs)
        x1 = x1_sign * p1.x1
        ratio = db2lin(3.0)
        ok = (x1 > 0 and abs(p2.x1 / x1 - ratio) < 1e-9
              and abs(p2.x2 / p1.x2 - ratio) < 1e-9)
        return ok, dict(x1=x1, x2=p1.x2, c1=p1.c1)

    def worst_case():
        wc = baselines.worst_case_condition(spec, r_t)
        p = derive_snr_params(spec, r_t, gs)
        return abs(wc.x1 - p.x1) <= 1e-10 * max(1, p.x1), dict(x1=wc.x1, residual=wc.residual)

    def gamma_probe():
        los = baselines.worst_case_los(spec, r_t)
        kind = OutageProb(cfg.tau)
        p = derive_snr_params(spec, r_t, gs, los=los)
        exact = float(eval_series(kind, p, TruncationPolicy(precision=50)).value)
        approx = baselines.gamma_approx_measures(spec, r_t, gs, kind, los=los)
        return abs(exact - approx) <= 1e-8 * exact, dict(exact=exact, approx=approx)

    def reductions():
        p = derive_snr_params(spec, r_t, gs)
        p0 = replace(p, x1=0.0, x2=0.0, c1=None)
        kind = OutageProb(cfg.tau)
        s = float(eval_series(kind, p0, TruncationPolicy(precision=50)).value)
        ray = baselines.rayleigh_outage(p.n_dof, cfg.tau / p.gamma1)
        pr = replace(p, x2=0.0, c1=None)
        mg = Mgf(-0.3 / p.gamma1)
        ser = float(eval_series(mg, pr, TruncationPolicy(precision=50)).value)
        cf = baselines.rician_rayleigh_mgf(pr, mg.s)
        ok = abs(s - ray) <= 1e-10 * ray and abs(ser - cf) <= 1e-10 * abs(cf)
        return ok, dict(series=s, rayleigh=ray, rr_series=ser, rr_closed=cf)

    def engines_agree():
        s0 = replace(spec, k_db=0.0)
        p = derive_snr_params(s0, r_t, gs)
        kind = OutageProb(cfg.tau)
        pol = TruncationPolicy(rel_tol=1e-14, n_max=400, precision=50)
        a = float(eval_series(kind, p, pol).value)
        b = float(eval_double_series(kind, p, pol).value)
        c = hgm.hgm_solve(s0, kind, gs, r_t=r_t, precision=cfg.precision).value
        rel = max(abs(a - b), abs(a - c), abs(b - c)) / a
        return rel < 1e-6, dict(series=a, double=b, hgm=c, max_rel=rel)

    def dual_formula():
        rng = np.random.default_rng(cfg.seed)
        h = montecarlo.sample_channel(spec, r_t, rng, 200)
        worst = 0.0
        for k in range(spec.n_tx):
            a = montecarlo.zf_snr(h, gs, k)
            b = montecarlo.zf_snr_hermitian(h, gs, k)
            worst = max(worst, float(np.max(np.abs(a / b - 1))))
        return worst < 1e-9, dict(max_rel=worst)

    def lemmas():
        rep = montecarlo.lemma_checks(spec, r_t, montecarlo.SimConfig(mc_samples, cfg.seed))
        ok = (rep.moment_ok(1) and rep.ks_beta2.pvalue > 0.01 and rep.corr_ok
              and rep.max_factorization_error < 1e-10)
        return ok, dict(moments=rep.moments, ks_p=float(rep.ks_beta2.pvalue),
                        corr=rep.corr, factorization=rep.max_factorization_error)

    for name, fn in [("z0_mapping", z0_mapping), ("correlation_anchors", anchors),
                     ("ode_recovery_1f1", ode_recovery),
                     ("x_proportionality", x_proportionality),
                     ("worst_case_x1", worst_case), ("gamma_exactness", gamma_probe),
                     ("reductions", reductions), ("engine_coherence_k0", engines_agree),
                     ("dual_formula", dual_formula), ("lemmas", lemmas)]:
        checks.append(_check(name, fn))
    return checks


# output ---------------------------------------------------------------------

def rows_to_csv(rows):
    if not rows:
        return ""
    buf = io.StringIO()
    cols = list(rows[0])
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def write_outputs(out_dir, name, rows, config, timings=None):
    """CSV plus a sidecar JSON of the resolved config; timings go separately."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, name + ".csv")
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))
    with open(os.path.join(out_dir, name + ".json"), "w") as fh:
        fh.write(config if isinstance(config, str) else json.dumps(config, indent=2,
                                                                    sort_keys=True))
    if timings is not None:
        with open(os.path.join(out_dir, name + ".timings.json"), "w") as fh:
            json.dump(timings, fh, indent=2, default=float)
    return path
