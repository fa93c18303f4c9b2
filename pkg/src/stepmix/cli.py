"""Command-line interface: ``stepmix {fit,simulate,theory,report}``."""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import sys
import warnings

import numpy as np

from . import __version__
from .ecm import FitConfig, FitError, fit
from .fisher import expected_information, standard_errors
from .io import (
    InputError,
    build_report,
    dump_report,
    fit_from_report,
    load_report,
    read_traces,
    read_truth,
    write_traces,
    write_truth,
)
from .metrics import evaluate
from .model import ModelError
from .simulate import DesignError, SimDesign, generate, parse_assignments, run_study
from .theory import probability_table

logger = logging.getLogger("stepmix")

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 1, 2

# flag name -> FitConfig field; also the accepted keys of --config files
FIT_KEYS = {
    "nb_init": "nb_init",
    "nb_m_step": "nb_m_step",
    "max_iter": "max_em_iter",
    "max_em_iter": "max_em_iter",
    "tol": "rel_tol",
    "rel_tol": "rel_tol",
    "seed": "seed",
    "fix_delta": "fix_delta",
}


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.replace(";", ",").split(",") if v.strip()]


def _open_out(path):
    return sys.stdout if path in (None, "-") else open(path, "w", newline="")


def _close_out(fh):
    if fh is not sys.stdout:
        fh.close()


def _effective_config(args) -> dict:
    cfg = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        for key, val in raw.items():
            if key not in FIT_KEYS:
                raise InputError(f"{args.config}: unknown config key {key!r}")
            cfg[FIT_KEYS[key]] = val
    for flag in ("nb_init", "nb_m_step", "max_iter", "tol", "seed", "fix_delta"):
        val = getattr(args, flag)
        if val is not None:
            cfg[FIT_KEYS[flag]] = val
    return FitConfig(**cfg).to_dict()


def cmd_fit(args) -> int:
    try:
        config = _effective_config(args)
        profiles = read_traces(args.input)
    except (InputError, OSError, ValueError, TypeError) as exc:
        print(f"stepmix fit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        result = fit(profiles, FitConfig(**config))
    except FitError as exc:
        print(f"stepmix fit: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if result.params.delta > 0:
        print(
            f"stepmix fit: warning: fitted jump {result.params.delta:.4g} is positive; "
            "profiles are expected to decrease",
            file=sys.stderr,
        )
    se = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            se = standard_errors(expected_information(profiles, result))
    except (ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("standard errors unavailable: %s", exc)
    stamp = None if args.no_timestamp else _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    report = build_report(profiles, result, config, se=se, timestamp=stamp)
    dump_report(report, sys.stdout if args.out == "-" else args.out)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _write_rows(fh, header, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row.get(h, "")) for h in header])


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_simulate(args) -> int:
    if (args.study is None) == (args.design is None):
        print("stepmix simulate: give exactly one of --study or --design", file=sys.stderr)
        return EXIT_INPUT
    try:
        if args.design is not None:
            spec = parse_assignments(args.design)
            if "seed" not in spec:
                spec["seed"] = args.seed
            if "pi" in spec:
                spec["pi"] = tuple(spec["pi"])
            design = SimDesign(**spec)
            profiles, truth = generate(design)
            out = _open_out(args.out)
            try:
                write_traces(out, profiles)
            finally:
                _close_out(out)
            if args.truth_out:
                write_truth(args.truth_out, truth)
            return EXIT_OK
        overrides = parse_assignments(args.cell) if args.cell else {}
        rows = run_study(args.study, overrides, replicates=args.replicates, seed=args.seed, workers=args.threads)
    except (DesignError, ValueError, TypeError, ModelError) as exc:
        print(f"stepmix simulate: {exc}", file=sys.stderr)
        return EXIT_INPUT
    out = _open_out(args.out)
    try:
        _write_rows(out, ["study", "cell", "replicate", "metric", "value"], rows)
    finally:
        _close_out(out)
    return EXIT_OK


def cmd_theory(args) -> int:
    try:
        deltas = _float_list(args.delta_grid)
        nms = _int_list(args.nm_grid)
    except ValueError as exc:
        print(f"stepmix theory: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if not deltas or not nms:
        print("stepmix theory: grids must be non-empty", file=sys.stderr)
        return EXIT_INPUT
    if not args.sigma > 0:
        print("stepmix theory: --sigma must be positive", file=sys.stderr)
        return EXIT_INPUT
    rows = probability_table(args.n, args.sigma, deltas, nms, mc_draws=args.mc, seed=args.seed, workers=args.threads)
    header = ["delta", "n_m", "V", "p_closed"] + (["p_mc", "mc_se"] if args.mc else []) + ["error"]
    out = _open_out(args.out)
    try:
        _write_rows(out, header, rows)
    finally:
        _close_out(out)
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        report = load_report(args.fit)
        truth = read_truth(args.truth)
    except (InputError, OSError) as exc:
        print(f"stepmix report: {exc}", file=sys.stderr)
        return EXIT_INPUT
    fit_ids = [e["id"] for e in report["per_profile"]]
    missing = sorted(set(fit_ids) - set(truth.ids))
    extra = sorted(set(truth.ids) - set(fit_ids))
    if missing or extra:
        msg = []
        if missing:
            msg.append("not in truth: " + ", ".join(missing))
        if extra:
            msg.append("not in fit: " + ", ".join(extra))
        print("stepmix report: profile id mismatch; " + "; ".join(msg), file=sys.stderr)
        return EXIT_INPUT
    # align truth to report order
    order = {pid: i for i, pid in enumerate(truth.ids)}
    idx = [order[pid] for pid in fit_ids]
    truth.labels = truth.labels[idx]
    truth.change_points = [truth.change_points[i] for i in idx]
    truth.lengths = truth.lengths[idx]
    truth.ids = fit_ids
    result = fit_from_report(report)
    rows = [{"metric": m, "value": v} for m, v in evaluate(truth, result).as_rows()]
    out = _open_out(args.out)
    try:
        _write_rows(out, ["metric", "value"], rows)
    finally:
        _close_out(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stepmix",
        description="Classify stepwise-decreasing intensity profiles into four step-count clusters.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit the mixture to a trace CSV and write a JSON report")
    p.add_argument("--input", required=True, help="trace CSV with header profile_id,t,intensity")
    p.add_argument("--out", required=True, help="report JSON path ('-' for stdout)")
    p.add_argument("--nb-init", type=int, help="number of random starts (default 10)")
    p.add_argument("--nb-m-step", type=int, help="CM sweeps per E-step (default 1)")
    p.add_argument("--max-iter", type=int, help="maximum EM iterations per start (default 100)")
    p.add_argument("--tol", type=float, help="relative log-likelihood tolerance (default 1e-8)")
    p.add_argument("--seed", type=int, help="random seed for the starts (default 0)")
    p.add_argument("--fix-delta", type=float, help="hold the jump at this value instead of estimating it")
    p.add_argument("--config", help="JSON file of fit options; flags override it")
    p.add_argument("--no-timestamp", action="store_true", help="write created_at as null")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("simulate", help="simulate a dataset or run a simulation study")
    p.add_argument("--study", type=int, choices=(1, 2, 3), help="study grid to run; writes tidy metrics CSV")
    p.add_argument("--cell", help='restrict grid axes, e.g. "delta=-5,type=(10,1)"')
    p.add_argument("--replicates", type=int, default=30, help="replicates per cell (default 30)")
    p.add_argument("--design", help='single design, e.g. "S=4,n=50,delta=-5,sigma=1e-9"; writes a trace CSV')
    p.add_argument("--truth-out", help="with --design: also write the ground truth CSV here")
    p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
    p.add_argument("--threads", type=int, help="worker processes (default STEPMIX_THREADS or 1)")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("theory", help="tabulate the cluster-4 to cluster-3 misclassification probability")
    p.add_argument("--n", type=int, default=200, help="profile length (default 200)")
    p.add_argument("--sigma", type=float, default=1.0, help="noise standard deviation (default 1)")
    p.add_argument("--delta-grid", default="-0.5,-1,-2,-3", help="comma-separated jumps")
    p.add_argument("--nm-grid", default="2,5,10,20", help="comma-separated overlap lengths n2 = n3")
    p.add_argument("--mc", type=int, default=0, help="also estimate by Monte Carlo with this many draws")
    p.add_argument("--seed", type=int, default=0, help="Monte Carlo seed (default 0)")
    p.add_argument("--threads", type=int, help="worker threads (default STEPMIX_THREADS or 1)")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("report", help="score a fit report against ground truth")
    p.add_argument("--fit", required=True, help="report JSON from 'stepmix fit'")
    p.add_argument("--truth", required=True, help="truth CSV: profile_id,cluster,change_points,n,delta")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
