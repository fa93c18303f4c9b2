"""Probability that a one-jump-of-2δ profile is better fitted by two δ jumps.

Setting: a cluster-4 profile with true change-point ``t41_star`` is compared,
at the true jump and with profiled baselines, against a cluster-3
segmentation ``t31 < t41_star < t32``. With equal proportions the profile is
assigned to cluster 3 when its residual sum of squares is smaller. The
difference of the two residual sums is Gaussian, giving a closed form in
terms of the overlap lengths

    n2 = t41_star - t31,   n3 = t32 - t41_star,
    V  = n2 + n3 - (n2 - n3)**2 / n.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ecm import resolve_workers
from .model import Segmentation, incidence


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class MisclassScenario:
    n: int
    t31: int
    t41_star: int
    t32: int
    delta: float
    sigma4_star: float = 1.0

    def __post_init__(self):
        if not (1 <= self.t31 < self.t41_star < self.t32 <= self.n - 1):
            raise ScenarioError(
                f"need 1 <= t31 < t41* < t32 <= n-1, got ({self.t31}, {self.t41_star}, {self.t32}) with n={self.n}"
            )
        if not self.sigma4_star > 0:
            raise ScenarioError("sigma4_star must be positive")

    @classmethod
    def symmetric(cls, n: int, n_m: int, delta: float, sigma4_star: float = 1.0) -> "MisclassScenario":
        """Cluster-3 change-points ``n_m`` either side of a central true change-point."""
        t41 = n // 2
        return cls(n, t41 - n_m, t41, t41 + n_m, delta, sigma4_star)

    @property
    def n2(self) -> int:
        return self.t41_star - self.t31

    @property
    def n3(self) -> int:
        return self.t32 - self.t41_star

    @property
    def V(self) -> float:
        return self.n2 + self.n3 - (self.n2 - self.n3) ** 2 / self.n


def misclass_probability(sc: MisclassScenario) -> float:
    """``P(Q(T3) < Q(T4*)) = 1 - F(-delta sqrt(V) / (2 sigma))``, F the standard normal cdf.

    The upper tail is evaluated with ``erfc`` so small probabilities keep
    full relative accuracy.
    """
    V = sc.V
    if not V > 0:
        raise ScenarioError(f"degenerate overlap, V={V}")
    x = -sc.delta * math.sqrt(V) / (2.0 * sc.sigma4_star)
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def q_contrast(y, seg: Segmentation, delta: float) -> float:
    """Residual sum of squares with the baseline profiled out at fixed ``delta``."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    T = seg.incidence(y.size)
    z = y - T * delta
    r = z - z.mean()
    return float(r @ r)


def _mc_chunk(sc: MisclassScenario, draws: int, seed_seq, mu: float) -> int:
    rng = np.random.default_rng(seed_seq)
    n = sc.n
    T3 = incidence(n, 3, (sc.t31, sc.t32))
    T4 = incidence(n, 4, (sc.t41_star,))
    y = mu + T4 * sc.delta + rng.normal(0.0, sc.sigma4_star, size=(draws, n))
    z3 = y - T3 * sc.delta
    z4 = y - T4 * sc.delta
    q3 = np.sum((z3 - z3.mean(axis=1, keepdims=True)) ** 2, axis=1)
    q4 = np.sum((z4 - z4.mean(axis=1, keepdims=True)) ** 2, axis=1)
    return int(np.count_nonzero(q3 - q4 < 0))


def monte_carlo_misclass(
    sc: MisclassScenario, draws: int = 100_000, seed: int = 0, mu: float = 2.0, chunk: int = 10_000, workers=None
) -> tuple[float, float]:
    """Simulate cluster-4 profiles and count how often the cluster-3
    segmentation has the smaller residual sum.

    Returns the estimate and its binomial standard error. Each chunk of draws
    has its own seeded stream, so the estimate does not depend on ``workers``.
    """
    sizes = [min(chunk, draws - i) for i in range(0, draws, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    workers = resolve_workers(workers)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            hits = sum(pool.map(lambda a: _mc_chunk(sc, a[0], a[1], mu), zip(sizes, seeds)))
    else:
        hits = sum(_mc_chunk(sc, m, ss, mu) for m, ss in zip(sizes, seeds))
    p = hits / draws
    return p, math.sqrt(max(p * (1 - p), 0.0) / draws)


def probability_table(n: int, sigma: float, deltas, nms, mc_draws: int = 0, seed: int = 0, workers=None) -> list[dict]:
    """Rows ``(delta, n_m, V, p_closed[, p_mc, mc_se])``; infeasible cells carry an ``error``."""
    rows = []
    for i, delta in enumerate(deltas):
        for j, nm in enumerate(nms):
            row = {"delta": float(delta), "n_m": int(nm)}
            try:
                sc = MisclassScenario.symmetric(n, int(nm), float(delta), sigma)
                row["V"] = sc.V
                row["p_closed"] = misclass_probability(sc)
                if mc_draws:
                    p, se = monte_carlo_misclass(sc, mc_draws, seed=seed + 1000 * i + j, workers=workers)
                    row["p_mc"] = p
                    row["mc_se"] = se
                row["error"] = ""
            except ScenarioError as exc:
                row["error"] = str(exc)
            rows.append(row)
    return rows
