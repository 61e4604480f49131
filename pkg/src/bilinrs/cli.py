"""Command line front end: ``bilinrs simulate`` and ``bilinrs trace``."""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from .channel import build_covariance, crandn, drop_users, psd_sqrt
from .common import optimize_common
from .errors import ConfigError, NumericalBreakdown
from .iwmmse import estimate_all, run_iwmmse
from .powersplit import evaluate_split, optimize_split, write_search_trace
from .private import optimize_private
from .sim import METHODS, PROFILES, emit_report, parse_config, run_sweep, trial_streams
from .sinr import SinrOperators
from .training import build_pilot_matrix, observe, training_noise_variance


def _overrides(args) -> dict:
    values = {}
    if args.methods:
        values["methods"] = tuple(args.methods)
    if args.seed is not None:
        values["seed"] = args.seed
    if args.trials is not None:
        values["n_iter"] = args.trials
    if getattr(args, "p_dl_db", None):
        values["p_dl_db"] = tuple(args.p_dl_db)
    return values


def _add_common(p):
    p.add_argument("--config", help="key=value configuration file")
    p.add_argument("--profile", choices=sorted(PROFILES), default="paper")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default="out", help="output directory (default: %(default)s)")


def cmd_simulate(args) -> int:
    cfg = parse_config(args.config, _overrides(args), profile=args.profile)

    def progress(done, total):
        if not args.quiet:
            print(f"\rtrial {done}/{total}", end="", file=sys.stderr, flush=True)

    report = run_sweep(cfg, workers=args.workers, progress=progress)
    if not args.quiet:
        print(file=sys.stderr)
    for path in emit_report(report, args.out):
        print(path)
    if report.failed:
        print(f"{report.failed} failed trial evaluations:", file=sys.stderr)
        for p in report.points:
            if p.failed:
                print(f"  {p.method} @ {p.P_dl_dB} dB: {p.failed} of {p.failed + p.trials}", file=sys.stderr)
        return 3
    return 0


def _trial_setup(cfg, trial):
    sc = cfg.scenario
    geo, ch, nz = trial_streams(sc.seed, trial, cfg.fixed_geometry)
    cov = build_covariance(drop_users(sc, geo), sc)
    return sc, cov, ch, nz


def cmd_trace(args) -> int:
    """Convergence CSVs of the solvers for one drop at one power."""
    cfg = parse_config(args.config, _overrides(args), profile=args.profile)
    sc, cov, ch, nz = _trial_setup(cfg, args.trial)
    P_dl = 10.0 ** (args.power / 10.0)
    s2 = training_noise_variance(P_dl, cfg.T_dl)
    Phi = build_pilot_matrix(sc.M, cfg.T_dl)
    ops = SinrOperators.build(cov, Phi, s2)
    os.makedirs(args.out, exist_ok=True)
    written = []

    if args.solver in ("private", "all"):
        res = optimize_private(ops, args.alpha_c, P_dl)
        path = os.path.join(args.out, "trace_private.csv")
        _write_rows(path, ["iteration", "sum_rate_lb", "power"], res.trace)
        written.append(path)
    if args.solver in ("common", "all"):
        priv = optimize_private(ops, args.alpha_c, P_dl)
        res = optimize_common(priv.A_p, ops, args.alpha_c, P_dl, record=True)
        path = os.path.join(args.out, "trace_common.csv")
        _write_rows(path, ["step", "worst_user", "min_common_sinr", "u", "power"], res.trace)
        written.append(path)
    if args.solver in ("split", "all"):
        base = evaluate_split(0.0, ops, P_dl)
        _, search = optimize_split(ops, P_dl, baseline=base)
        path = os.path.join(args.out, "trace_split.csv")
        write_search_trace(path, search.history)
        written.append(path)
    if args.solver in ("iwmmse", "all"):
        roots = np.stack([psd_sqrt(C) for C in cov.C])
        H = np.einsum("kmn,kn->km", roots, crandn(ch, sc.K, sc.M))
        Y = observe(H, Phi, s2, noise=crandn(nz, sc.K, cfg.T_dl))
        res = run_iwmmse(estimate_all(Y, cov.C, Phi, s2), P_dl, rs=True)
        path = os.path.join(args.out, "trace_iwmmse.csv")
        _write_rows(path, ["iteration", "objective"], list(enumerate(res.trace)))
        written.append(path)
    for path in written:
        print(path)
    return 0


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in row])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bilinrs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo sum-rate sweep over P_dl")
    _add_common(sim)
    sim.add_argument("--methods", nargs="+", choices=METHODS)
    sim.add_argument("--trials", type=int, help="trials per power point")
    sim.add_argument("--p-dl-db", type=float, nargs="+", help="power grid in dB")
    sim.add_argument("--workers", type=int, default=1, help="worker processes")
    sim.add_argument("--quiet", action="store_true")
    sim.set_defaults(func=cmd_simulate)

    tr = sub.add_parser("trace", help="dump solver convergence traces as CSV")
    _add_common(tr)
    tr.add_argument("--solver", choices=["private", "common", "split", "iwmmse", "all"], default="all")
    tr.add_argument("--power", type=float, default=30.0, help="P_dl in dB (default: %(default)s)")
    tr.add_argument("--alpha-c", type=float, default=0.5, help="common power fraction for private/common traces")
    tr.add_argument("--trial", type=int, default=0, help="trial index selecting the drop")
    tr.set_defaults(func=cmd_trace, methods=None, trials=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalBreakdown as exc:
        print(f"numerical breakdown: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
