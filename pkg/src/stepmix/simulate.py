"""Synthetic stepwise profiles and the simulation-study grids.

Every profile is drawn from its own random stream seeded by
``(design.seed, profile index)``, so a profile's data do not depend on how
many other profiles are generated or in which order.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .ecm import FitConfig, fit, resolve_workers
from .metrics import evaluate
from .model import Profile, Segmentation, mean_vector


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class SimDesign:
    """Simulation design.

    ``mid_step`` is the cluster-3 spacing as a fraction of ``n``: the two
    change-points are ``round(mid_step * n) + 1`` apart.
    """

    S: int
    n: int
    delta: float
    mid_step: float = 0.3
    mu: float = 2.0
    sigma: float = 1.0
    pi: tuple = (0.25, 0.25, 0.25, 0.25)
    seed: int = 0

    def __post_init__(self):
        if self.S < 1:
            raise DesignError("S must be positive")
        if self.sigma < 0:
            raise DesignError("sigma must be non-negative")
        pi = np.asarray(self.pi, dtype=float)
        if pi.shape != (4,) or np.any(pi < 0) or abs(pi.sum() - 1) > 1e-12:
            raise DesignError(f"pi must be a 4-vector of proportions, got {self.pi}")
        lo, hi = self.support
        if not (1 <= lo <= hi <= self.n - 1):
            raise DesignError(f"empty change-point support [{lo}, {hi}] for n={self.n}")
        if pi[2] > 0 and lo + self.gap > hi:
            raise DesignError(f"cluster-3 spacing {self.gap} does not fit in [{lo}, {hi}]")

    @property
    def support(self) -> tuple[int, int]:
        # integer arithmetic: 0.1 * n is not exact in floating point
        return -(-self.n // 10), (9 * self.n) // 10

    @property
    def gap(self) -> int:
        return int(round(self.mid_step * self.n)) + 1


@dataclass
class GroundTruth:
    labels: np.ndarray
    change_points: list
    lengths: np.ndarray
    delta: float
    mu: float
    sigma: float
    ids: list = field(default_factory=list)


def _draw_profile(design: SimDesign, s: int):
    rng = np.random.default_rng([design.seed, s])
    k = int(rng.choice(4, p=np.asarray(design.pi, dtype=float))) + 1
    lo, hi = design.support
    if k == 1:
        cps = ()
    elif k == 3:
        first = int(rng.integers(lo, hi - design.gap + 1))
        cps = (first, first + design.gap)
    else:
        cps = (int(rng.integers(lo, hi + 1)),)
    m = mean_vector(design.n, k, design.mu, design.delta, Segmentation(k, cps))
    y = m + rng.normal(0.0, design.sigma, design.n)
    return k, cps, y


def generate(design: SimDesign) -> tuple[list[Profile], GroundTruth]:
    """Draw ``design.S`` labelled profiles."""
    profiles, labels, cps = [], [], []
    for s in range(design.S):
        k, c, y = _draw_profile(design, s)
        profiles.append(Profile(str(s + 1), y))
        labels.append(k)
        cps.append(c)
    truth = GroundTruth(
        labels=np.array(labels),
        change_points=cps,
        lengths=np.full(design.S, design.n),
        delta=design.delta,
        mu=design.mu,
        sigma=design.sigma,
        ids=[p.id for p in profiles],
    )
    return profiles, truth


# --- study grids ------------------------------------------------------------

DELTAS = (-5.0, -2.0, -1.0, -0.5)
MID_STEPS = (0.0, 0.3, 0.6)

STUDY_GRIDS = {
    1: {"S": (100,), "n": (100,), "delta": DELTAS, "type": ((1, 1), (10, 1), (1, 10)), "mid_step": MID_STEPS},
    2: {"S": (100, 250, 500), "n": (100, 250, 500), "delta": DELTAS, "type": ((10, 1),), "mid_step": MID_STEPS},
    3: {
        "S": (100,),
        "n": (250,),
        "delta": DELTAS,
        "type": ((10, 1),),
        "mid_step": MID_STEPS,
        "factor": (0.8, 0.9, 1.0, 1.1, 1.2, 1.5, 2.0),
    },
}


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    if isinstance(v, float) and v.is_integer():
        return str(int(v))
    return str(v)


def cell_label(cell: dict) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in cell.items())


def study_cells(study_id: int, overrides: Optional[dict] = None) -> list[dict]:
    if study_id not in STUDY_GRIDS:
        raise ValueError(f"unknown study {study_id}; choose 1, 2 or 3")
    grid = dict(STUDY_GRIDS[study_id])
    for key, val in (overrides or {}).items():
        if key not in grid:
            raise ValueError(f"study {study_id} has no axis {key!r}")
        vals = val if isinstance(val, (list, tuple)) and not (key == "type" and _is_pair(val)) else [val]
        grid[key] = tuple(tuple(v) if key == "type" else v for v in vals)
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def _is_pair(val) -> bool:
    return len(val) == 2 and all(isinstance(v, (int, np.integer)) for v in val)


def replicate_seeds(base_seed: int, cell: dict, replicate: int) -> tuple[int, int]:
    """(data seed, fit seed) for one replicate.

    Derived from the data-generating axes only, so cells that differ only in
    fitting options (type, factor) see identical datasets and starts.
    """
    entropy = [
        int(base_seed),
        int(cell["S"]),
        int(cell["n"]),
        int(round(abs(cell["delta"]) * 1000)),
        int(round(cell["mid_step"] * 1000)),
        int(replicate),
    ]
    state = np.random.SeedSequence(entropy).generate_state(2)
    return int(state[0]), int(state[1])


def cell_design(cell: dict, data_seed: int) -> SimDesign:
    return SimDesign(S=cell["S"], n=cell["n"], delta=float(cell["delta"]), mid_step=cell["mid_step"], seed=data_seed)


def cell_config(study_id: int, cell: dict, fit_seed: int) -> FitConfig:
    nb_init, nb_m_step = cell["type"]
    max_iter = 1000 if (study_id == 1 and (nb_init, nb_m_step) == (1, 1)) else 100
    fix = None
    if "factor" in cell:
        fix = float(cell["factor"]) * float(cell["delta"])
    return FitConfig(nb_init=nb_init, nb_m_step=nb_m_step, max_em_iter=max_iter, seed=fit_seed, fix_delta=fix)


def run_replicate(study_id: int, cell: dict, replicate: int, base_seed: int = 0) -> list[tuple[str, float]]:
    data_seed, fit_seed = replicate_seeds(base_seed, cell, replicate)
    profiles, truth = generate(cell_design(cell, data_seed))
    res = fit(profiles, cell_config(study_id, cell, fit_seed), workers=1)
    return evaluate(truth, res).as_rows() + [
        ("delta_hat", float(res.params.delta)),
        ("loglik", float(res.loglik)),
        ("n_iter", float(res.n_iter)),
        ("converged", float(res.converged)),
    ]


def _job(args):
    return run_replicate(*args)


def run_study(
    study_id: int,
    overrides: Optional[dict] = None,
    replicates: int = 30,
    seed: int = 0,
    workers=None,
) -> list[dict]:
    """Run every cell of a study grid and return tidy rows
    ``{study, cell, replicate, metric, value}``.

    ``overrides`` maps grid axes to a value or list of values, e.g.
    ``{"delta": -5, "type": (10, 1)}``.
    """
    cells = study_cells(study_id, overrides)
    jobs = [(study_id, cell, r, seed) for cell in cells for r in range(replicates)]
    workers = resolve_workers(workers)
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(min(workers, len(jobs))) as pool:
            outputs = list(pool.map(_job, jobs))
    else:
        outputs = [_job(j) for j in jobs]
    rows = []
    for (sid, cell, r, _), metrics in zip(jobs, outputs):
        label = cell_label(cell)
        for name, value in metrics:
            rows.append({"study": sid, "cell": label, "replicate": r, "metric": name, "value": value})
    return rows


def parse_assignments(text: str) -> dict:
    """Parse ``"delta=-5,type=(10,1)"`` into ``{"delta": -5.0, "type": (10, 1)}``.

    Values may be separated by ``,`` or ``;``; parenthesised tuples are kept
    whole.
    """
    out = {}
    depth = 0
    token = ""
    parts = []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch in ",;" and depth == 0:
            parts.append(token)
            token = ""
        else:
            token += ch
    parts.append(token)
    for part in parts:
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"expected key=value, got {part!r}")
        key, val = (s.strip() for s in part.split("=", 1))
        out[key] = _parse_value(val)
    return out


def _parse_value(val: str):
    if val.startswith("(") and val.endswith(")"):
        return tuple(_parse_value(v.strip()) for v in val[1:-1].split(",") if v.strip())
    try:
        return int(val)
    except ValueError:
        pass
    try:
        f = float(val)
    except ValueError:
        raise ValueError(f"cannot parse value {val!r}") from None
    if not math.isfinite(f):
        raise ValueError(f"non-finite value {val!r}")
    return f
