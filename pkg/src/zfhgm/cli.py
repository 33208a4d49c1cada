"""Command line driver: ``zfhgm <subcommand> [options]``."""

import argparse
import json
import os
import sys
from dataclasses import asdict

from . import experiments as ex


def _config(args, **defaults):
    over = dict(defaults)
    for key in ("seed", "precision"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if getattr(args, "engines", None):
        over["engines"] = [e.strip() for e in args.engines.split(",") if e.strip()]
    if getattr(args, "grid", None):
        over["grid"] = [float(v) for v in args.grid.split(",")]
    for key in ("scenario", "n_a", "axis", "k_db", "as_deg", "mc_samples",
                "winner_samples", "gamma_s_db", "gamma_b_db"):
        if getattr(args, key, None) is not None:
            over[key] = getattr(args, key)
    if args.config:
        return ex.ExperimentConfig.from_file(args.config, **over)
    return ex.ExperimentConfig(**over)


def _common(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, help="RNG seed (u64)")
    p.add_argument("--engines", help="comma list of %s" % ",".join(ex.ENGINES))
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--precision", type=int, help="working digits for ODE guessing")
    p.add_argument("--scenario", help="scenario name (A1, C2)")
    p.add_argument("--n-a", dest="n_a", type=int, help="antenna multiplier on (6, 4)")
    p.add_argument("--grid", help="comma separated, sorted grid values")
    p.add_argument("--k-db", dest="k_db", type=float)
    p.add_argument("--as-deg", dest="as_deg", type=float)
    p.add_argument("--mc-samples", dest="mc_samples", type=int)


def build_parser():
    ap = argparse.ArgumentParser(prog="zfhgm", description=__doc__)
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("outage-sweep", help="P_o versus Gamma_b per engine")
    _common(p)

    p = sub.add_parser("outage-averaged", help="P_o averaged over K and AS draws")
    _common(p)
    p.add_argument("--winner-samples", dest="winner_samples", type=int)

    p = sub.add_parser("capacity-sweep", help="sum rate along an AS, K or theta_T grid")
    _common(p)
    p.add_argument("--axis", choices=["as", "k", "theta_t"])
    p.add_argument("--gamma-s-db", dest="gamma_s_db", type=float)

    p = sub.add_parser("table1", help="reproduce the N_a x (6, 4) outage table")
    _common(p)
    p.add_argument("--rows", help="comma list of row indices (default all)")

    p = sub.add_parser("validate", help="run the self-validation suite")
    _common(p)

    p = sub.add_parser("guess-ode", help="print a certified operator as JSON")
    _common(p)
    p.add_argument("--measure", choices=["outage", "capacity", "mgf"], default="outage")
    p.add_argument("--gamma-b-db", dest="gamma_b_db", type=float)
    p.add_argument("--stream", type=int, default=0)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    cmd = args.cmd
    if cmd == "outage-sweep":
        cfg = _config(args)
        rows, timings = ex.run_outage_sweep(cfg)
        path = ex.write_outputs(args.out, "outage_sweep", rows, cfg.to_json(), timings)
        print(path)
        return 0
    if cmd == "outage-averaged":
        cfg = _config(args, engines=["hgm"], grid=[15.0, 20.0, 25.0])
        rows, info = ex.run_averaged_outage(cfg)
        path = ex.write_outputs(args.out, "outage_averaged", rows, cfg.to_json(), info)
        print(path)
        return 0
    if cmd == "capacity-sweep":
        cfg = _config(args, axis="as", grid=[10.0, 30.0, 52.0], engines=["hgm", "mc"])
        rows, timings = ex.run_capacity_sweep(cfg)
        path = ex.write_outputs(args.out, "capacity_sweep", rows, cfg.to_json(), timings)
        print(path)
        return 0
    if cmd == "table1":
        entries = ex.reference_table()
        if args.rows:
            entries = [entries[int(i)] for i in args.rows.split(",")]
        prec = args.precision or ex.ExperimentConfig.precision
        rows, timings = ex.run_table1(entries, precision=prec)
        conf = dict(entries=entries, precision=prec, tau_db=ex.TAU_DB)
        path = ex.write_outputs(args.out, "table1", rows, conf, timings)
        print(path)
        return 0
    if cmd == "validate":
        cfg = _config(args)
        checks = ex.run_validation_suite(cfg)
        report = [asdict(c) for c in checks]
        text = json.dumps(report, indent=2, default=str)
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "validation.json"), "w") as fh:
            fh.write(text)
        for c in checks:
            print("%-22s %s" % (c.name, "pass" if c.passed else "FAIL"))
        return 0 if all(c.passed for c in checks) else 1
    if cmd == "guess-ode":
        cfg = _config(args, grid=[args.gamma_b_db if args.gamma_b_db is not None else 15.0])
        op = ex.guess_ode(cfg, args.measure, args.stream)
        print(op.to_json())
        return 0
    return 2


if __name__ == "__main__":
    sys.exit(main())
