"""Quality criteria for a fit against known labels and change-points.

Cluster identities are structural (fixed by the model), so labels are
compared directly, never up to permutation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .model import N_CHANGE_POINTS


def _labels(x) -> np.ndarray:
    if hasattr(x, "labels"):
        x = x.labels
    elif hasattr(x, "hard_assignment"):
        x = x.hard_assignment
    return np.asarray(x, dtype=int)


def relative_jump_distance(delta_hat: float, delta: float) -> float:
    """Signed relative error ``(delta_hat - delta) / |delta|``."""
    if delta == 0:
        raise ValueError("true jump must be non-zero")
    return (delta_hat - delta) / abs(delta)


def misclassification_rate(truth, fit) -> float:
    true = _labels(truth)
    assigned = _labels(fit)
    if true.shape != assigned.shape:
        raise ValueError("label vectors differ in length")
    return float(np.mean(true != assigned))


def confusion_proportions(truth, fit) -> np.ndarray:
    """Row ``k-1``: distribution of assigned clusters among profiles truly in ``k``.

    Rows for clusters with no true members are NaN.
    """
    true = _labels(truth)
    assigned = _labels(fit)
    if true.shape != assigned.shape:
        raise ValueError("label vectors differ in length")
    out = np.full((4, 4), np.nan)
    for k in range(1, 5):
        members = assigned[true == k]
        if members.size:
            out[k - 1] = np.bincount(members - 1, minlength=4)[:4] / members.size
    return out


def normalized_infinite_distance(truth, fit) -> dict[int, float]:
    """Per true cluster k in {2, 3, 4}: mean over its members of the largest
    change-point error, divided by the profile length.

    The fitted change-points compared are those of the *true* cluster, whatever
    cluster the profile was assigned to. Clusters without members are omitted.
    """
    labels = _labels(truth)
    fitted = np.asarray(fit.params.change_points if hasattr(fit, "params") else fit)
    lengths = np.asarray(truth.lengths, dtype=float)
    out = {}
    for k in (2, 3, 4):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        c = N_CHANGE_POINTS[k]
        dists = []
        for s in idx:
            t_true = np.asarray(truth.change_points[s][:c])
            t_hat = fitted[s, k - 1, :c]
            dists.append(np.max(np.abs(t_true - t_hat)) / lengths[s])
        out[k] = float(np.mean(dists))
    return out


@dataclass
class EvalReport:
    d_r: Optional[float]
    d_inf_per_cluster: dict
    misclass_rate: float
    confusion: np.ndarray
    assigned_fraction: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def as_rows(self) -> list[tuple[str, float]]:
        rows = []
        if self.d_r is not None:
            rows.append(("d_r", float(self.d_r)))
        for k, v in sorted(self.d_inf_per_cluster.items()):
            rows.append((f"d_inf_k{k}", float(v)))
        rows.append(("misclass_rate", float(self.misclass_rate)))
        for i in range(4):
            if np.all(np.isnan(self.confusion[i])):
                continue
            for j in range(4):
                rows.append((f"confusion_{i + 1}_{j + 1}", float(self.confusion[i, j])))
        for j in range(4):
            rows.append((f"assigned_frac_{j + 1}", float(self.assigned_fraction[j])))
        return rows


def evaluate(truth, fit) -> EvalReport:
    assigned = _labels(fit)
    delta = getattr(truth, "delta", None)
    d_r = None
    if delta is not None and np.isfinite(delta) and delta != 0:
        d_r = relative_jump_distance(fit.params.delta, delta)
    return EvalReport(
        d_r=d_r,
        d_inf_per_cluster=normalized_infinite_distance(truth, fit),
        misclass_rate=misclassification_rate(truth, assigned),
        confusion=confusion_proportions(truth, assigned),
        assigned_fraction=np.bincount(assigned - 1, minlength=4)[:4] / assigned.size,
    )
