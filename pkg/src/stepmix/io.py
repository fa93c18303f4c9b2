"""Trace CSV, ground-truth CSV and fit-report JSON."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .ecm import FitResult
from .model import MixtureParams, ModelError, N_CHANGE_POINTS, Profile, empty_change_points
from .simulate import GroundTruth

TRACE_HEADER = ["profile_id", "t", "intensity"]
TRUTH_HEADER = ["profile_id", "cluster", "change_points", "n", "delta"]
REPORT_SCHEMA = "stepmix.fit-report/1"


class InputError(ValueError):
    """Malformed input file; the message carries file and line number."""


def read_traces(path) -> list[Profile]:
    path = Path(path)
    profiles: list[Profile] = []
    seen: set[str] = set()
    current_id = None
    values: list[float] = []

    def flush(lineno):
        if current_id is None:
            return
        try:
            profiles.append(Profile(current_id, np.array(values)))
        except ModelError as exc:
            raise InputError(f"{path}:{lineno}: {exc}") from None

    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRACE_HEADER:
            raise InputError(f"{path}:1: expected header {','.join(TRACE_HEADER)}")
        lineno = 1
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise InputError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            pid, t_txt, x_txt = (c.strip() for c in row)
            try:
                t = int(t_txt)
            except ValueError:
                raise InputError(f"{path}:{lineno}: t is not an integer: {t_txt!r}") from None
            try:
                x = float(x_txt)
            except ValueError:
                raise InputError(f"{path}:{lineno}: intensity is not a number: {x_txt!r}") from None
            if not math.isfinite(x):
                raise InputError(f"{path}:{lineno}: intensity is not finite")
            if pid != current_id:
                flush(lineno)
                if pid in seen:
                    raise InputError(f"{path}:{lineno}: rows of profile {pid!r} are not contiguous")
                seen.add(pid)
                current_id = pid
                values = []
            if t != len(values) + 1:
                raise InputError(f"{path}:{lineno}: profile {pid!r} expected t={len(values) + 1}, got {t}")
            values.append(x)
        flush(lineno)
    if not profiles:
        raise InputError(f"{path}: no profiles")
    return profiles


def write_traces(path_or_fh, profiles) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for p in profiles:
            for t, x in enumerate(p.values, start=1):
                w.writerow([p.id, t, repr(float(x))])

    _with_output(path_or_fh, _write)


def write_truth(path_or_fh, truth: GroundTruth) -> None:
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_HEADER)
        for pid, k, cps, n in zip(truth.ids, truth.labels, truth.change_points, truth.lengths):
            w.writerow([pid, int(k), ";".join(str(c) for c in cps), int(n), repr(float(truth.delta))])

    _with_output(path_or_fh, _write)


def read_truth(path) -> GroundTruth:
    path = Path(path)
    ids, labels, cps, lengths, deltas = [], [], [], [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"profile_id", "cluster", "change_points", "n"} <= set(reader.fieldnames):
            raise InputError(f"{path}:1: expected header {','.join(TRUTH_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                k = int(row["cluster"])
                c = tuple(int(v) for v in row["change_points"].split(";") if v.strip())
                if k not in N_CHANGE_POINTS or len(c) != N_CHANGE_POINTS[k]:
                    raise ValueError(f"cluster {k} with change-points {c}")
                n = int(row["n"])
                d = row.get("delta") or ""
                deltas.append(float(d) if d.strip() else math.nan)
            except (TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            ids.append(row["profile_id"].strip())
            labels.append(k)
            cps.append(c)
            lengths.append(n)
    finite = [d for d in deltas if math.isfinite(d)]
    return GroundTruth(
        labels=np.array(labels),
        change_points=cps,
        lengths=np.array(lengths),
        delta=finite[0] if finite else math.nan,
        mu=math.nan,
        sigma=math.nan,
        ids=ids,
    )


def _with_output(path_or_fh, write):
    if hasattr(path_or_fh, "write"):
        write(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            write(fh)


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def build_report(profiles, result: FitResult, config: dict, se=None, timestamp=None) -> dict:
    p = result.params
    hard = result.hard_assignment
    per_profile = []
    for s, prof in enumerate(profiles):
        entry = {
            "id": prof.id,
            "n": int(prof.n),
            "cluster_posteriors": [_num(v) for v in result.tau[s]],
            "hard_cluster": int(hard[s]),
            "mu_by_cluster": [_num(v) for v in p.mu[s]],
            "sigma2_by_cluster": [_num(v) for v in p.sigma2[s]],
            "change_points_by_cluster": [
                [int(c) for c in p.change_points[s, k - 1, : N_CHANGE_POINTS[k]]] for k in (1, 2, 3, 4)
            ],
        }
        if se is not None:
            entry["se_mu_by_cluster"] = [_num(v) for v in se.mu[s]]
            entry["se_sigma2_by_cluster"] = [_num(v) for v in se.sigma2[s]]
        per_profile.append(entry)
    report = {
        "schema": REPORT_SCHEMA,
        "pi": [_num(v) for v in p.pi],
        "delta": _num(p.delta),
        "converged": bool(result.converged),
        "n_iter": int(result.n_iter),
        "best_start": int(result.start),
        "loglik_trace": [_num(v) for v in result.loglik_trace],
        "standard_errors": None
        if se is None
        else {"pi": [_num(v) for v in se.pi], "delta": _num(se.delta)},
        "config_echo": config,
        "seed": config.get("seed"),
        "per_profile": per_profile,
        "created_at": timestamp,
    }
    return report


def dump_report(report: dict, path_or_fh) -> None:
    _with_output(path_or_fh, lambda fh: fh.write(json.dumps(report, indent=2, allow_nan=False) + "\n"))


def load_report(path) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from None
    if report.get("schema") != REPORT_SCHEMA:
        raise InputError(f"{path}: unsupported report schema {report.get('schema')!r}")
    return report


def fit_from_report(report: dict) -> FitResult:
    """Rebuild a :class:`FitResult` (parameters and posteriors) from a report."""
    per = report["per_profile"]
    S = len(per)
    cps = empty_change_points(S)
    mu = np.array([[np.nan if v is None else v for v in e["mu_by_cluster"]] for e in per], dtype=float)
    sigma2 = np.array([[np.nan if v is None else v for v in e["sigma2_by_cluster"]] for e in per], dtype=float)
    for s, e in enumerate(per):
        for k, c in enumerate(e["change_points_by_cluster"], start=1):
            cps[s, k - 1, : len(c)] = c
    tau = np.array([e["cluster_posteriors"] for e in per], dtype=float)
    pi = np.asarray(report["pi"], dtype=float)
    params = MixtureParams(pi / pi.sum(), report["delta"], mu, sigma2, cps)
    return FitResult(params, tau, list(report["loglik_trace"]), bool(report["converged"]), n_iter=report.get("n_iter", 0))
