"""ECM inference for the four-cluster stepwise mixture.

One EM iteration is an E-step (posterior cluster probabilities) followed by
a sweep of conditional maximisations in the fixed order proportions ->
jump -> per-profile (baseline, variance, change-points).
"""

from __future__ import annotations

import logging
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels as K
from .model import (
    LOG_2PI,
    N_CHANGE_POINTS,
    MixtureParams,
    ModelError,
    Profile,
    ProfileParams,
    Segmentation,
    as_profiles,
    empty_change_points,
    sigma2_floor,
)

logger = logging.getLogger(__name__)

PI_FLOOR = 1e-10


class FitError(RuntimeError):
    """Raised when the fit cannot proceed from degenerate parameters."""


class PreparedData:
    """Profiles packed into flat arrays, with centred prefix sums.

    Behaves as a read-only sequence of :class:`Profile`.
    """

    def __init__(self, data: Sequence):
        self.profiles = as_profiles(data)
        if not self.profiles:
            raise ModelError("no profiles")
        lengths = np.array([p.n for p in self.profiles], dtype=np.int64)
        self.lengths = lengths
        self.offsets = np.concatenate([[0], np.cumsum(lengths)]).astype(np.int64)
        self.values = np.concatenate([p.values for p in self.profiles])
        self.ybar = np.array([p.values.mean() for p in self.profiles])
        centred = [p.values - m for p, m in zip(self.profiles, self.ybar)]
        self.syy = np.array([c @ c for c in centred])
        self.prefix = np.concatenate([np.concatenate([[0.0], np.cumsum(c)]) for c in centred])
        self.floor = np.array([sigma2_floor(p.values) for p in self.profiles])

    def __len__(self):
        return len(self.profiles)

    def __getitem__(self, i):
        return self.profiles[i]

    def __iter__(self):
        return iter(self.profiles)


def prepare(data) -> PreparedData:
    return data if isinstance(data, PreparedData) else PreparedData(data)


@dataclass
class FitConfig:
    nb_init: int = 10
    nb_m_step: int = 1
    max_em_iter: int = 100
    rel_tol: float = 1e-8
    seed: int = 0
    fix_delta: Optional[float] = None

    def __post_init__(self):
        if self.nb_init < 1 or self.nb_m_step < 1 or self.max_em_iter < 1:
            raise ValueError("nb_init, nb_m_step and max_em_iter must be >= 1")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.fix_delta is not None and not np.isfinite(self.fix_delta):
            raise ValueError("fix_delta must be finite")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FitResult:
    params: MixtureParams
    tau: np.ndarray
    loglik_trace: list
    converged: bool
    n_iter: int = 0
    start: int = 0
    start_logliks: list = field(default_factory=list)

    @property
    def hard_assignment(self) -> np.ndarray:
        # argmax keeps the first maximum: ties go to the smaller cluster
        return np.argmax(self.tau, axis=1) + 1

    @property
    def loglik(self) -> float:
        return self.loglik_trace[-1]


def resolve_workers(workers=None) -> int:
    if workers is None:
        workers = os.environ.get("STEPMIX_THREADS", "1")
    try:
        return max(1, int(workers))
    except ValueError:
        raise ValueError(f"invalid worker count {workers!r}") from None


# --- likelihood pieces -----------------------------------------------------


def _log_joint(prep: PreparedData, params: MixtureParams) -> np.ndarray:
    if np.any(params.sigma2 <= 0):
        raise FitError("non-positive variance")
    rss = K.residual_sums(prep.values, prep.offsets, params.mu, params.delta, params.change_points)
    n = prep.lengths[:, None].astype(float)
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    return -0.5 * n * (LOG_2PI + np.log(params.sigma2)) - rss / (2.0 * params.sigma2) + log_pi


def _posterior(log_joint: np.ndarray) -> tuple[np.ndarray, float]:
    norm = logsumexp(log_joint, axis=1)
    bad = ~np.isfinite(norm)
    if np.any(bad):
        raise FitError(f"all cluster densities vanish for profiles {np.flatnonzero(bad).tolist()}")
    tau = np.exp(log_joint - norm[:, None])
    tau /= tau.sum(axis=1, keepdims=True)
    return tau, float(norm.sum())


def e_step(data, params: MixtureParams) -> np.ndarray:
    """Posterior probability of each cluster for each profile, shape (S, 4)."""
    prep = prepare(data)
    tau, _ = _posterior(_log_joint(prep, params))
    return tau


def loglik_and_tau(data, params: MixtureParams) -> tuple[float, np.ndarray]:
    prep = prepare(data)
    tau, ll = _posterior(_log_joint(prep, params))
    return ll, tau


# --- conditional maximisation steps ----------------------------------------


def cm_pi(tau) -> np.ndarray:
    """Mixing proportions: column means of the responsibilities.

    Proportions below ``PI_FLOOR`` are raised to it and the vector renormalised,
    so an emptied cluster can still be revived by later iterations.
    """
    tau = np.asarray(tau, dtype=float)
    pi = tau.mean(axis=0)
    if np.any(pi < PI_FLOOR):
        pi = np.maximum(pi, PI_FLOOR)
    return pi / pi.sum()


def cm_delta(data, tau, params: MixtureParams) -> float:
    """Closed-form jump update ``A / B`` at the current segmentations.

    Returns the current jump unchanged (with a warning) when no profile carries
    weight on clusters 2-4.
    """
    prep = prepare(data)
    tau = np.asarray(tau, dtype=float)
    t_r, t_t, _ = K.incidence_products(prep.values, prep.offsets, params.mu, params.change_points)
    w = tau[:, 1:] / params.sigma2[:, 1:]
    A = float(np.sum(w * t_r[:, 1:]))
    B = float(np.sum(w * t_t[:, 1:]))
    if not B > 0:
        warnings.warn("no responsibility on jump clusters; delta left unchanged", RuntimeWarning)
        return params.delta
    return A / B


def cm_phi_cluster1(y) -> ProfileParams:
    """Sample mean and (1/n) variance, floored."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    mu = y.mean()
    s2 = np.mean((y - mu) ** 2)
    return ProfileParams(float(mu), float(max(s2, sigma2_floor(y))), Segmentation(1))


def _single_prefix(y):
    y = np.asarray(getattr(y, "values", y), dtype=float)
    ybar = y.mean()
    yc = y - ybar
    return y, ybar, yc @ yc, np.concatenate([[0.0], np.cumsum(yc)])


def segment_objective(y, k: int, delta: float, change_points) -> float:
    """Profiled residual sum of squares, evaluated by the same prefix-sum
    arithmetic the change-point search uses."""
    y, _, syy, prefix = _single_prefix(y)
    n = y.size
    Segmentation(k, tuple(change_points)).validate(n)
    if k == 1:
        return float(syy)
    u = change_points[0]
    if k == 3:
        v = change_points[1]
        m = 2 * n - u - v
        g = 2.0 * delta * (prefix[u] + prefix[v]) + delta * delta * ((4 * n - u - 3 * v) - m * m / n)
    else:
        c_d = (1.0 if k == 2 else 2.0) * delta
        m = n - u
        g = 2.0 * c_d * prefix[u] + c_d * c_d * (m - m * m / n)
    return float(syy + g)


def cm_phi_segment(y, k: int, delta: float) -> ProfileParams:
    """Exhaustive change-point search for cluster ``k`` at a fixed jump.

    Every admissible segmentation is scored in O(1) from prefix sums; the
    smallest change-point (lexicographically, for the two-jump cluster)
    wins ties. The baseline is profiled out as ``mean(y - T delta)``.
    """
    if k not in (2, 3, 4):
        raise ModelError("cm_phi_segment handles clusters 2-4")
    y, ybar, _, prefix = _single_prefix(y)
    n = y.size
    if n < N_CHANGE_POINTS[k] + 1:
        raise ModelError(f"profile too short for cluster {k}")
    if k == 3:
        u, v, _ = K.best_pair(prefix, 0, n, float(delta))
        cps = (int(u), int(v))
    else:
        u, _ = K.best_single(prefix, 0, n, 1.0 if k == 2 else 2.0, float(delta))
        cps = (int(u),)
    seg = Segmentation(k, cps)
    T = seg.incidence(n)
    mu = ybar - delta * T.sum() / n
    r = y - mu - T * delta
    return ProfileParams(float(mu), float(max(r @ r / n, sigma2_floor(y))), seg)


def _cm_phi_all(prep: PreparedData, delta: float):
    S = len(prep)
    cps = empty_change_points(S)
    obj = np.zeros((S, 4))
    K.segment_all(prep.prefix, prep.offsets, float(delta), cps, obj)
    mu = np.zeros((S, 4))
    mu[:, 0] = prep.ybar
    _, _, t_1 = K.incidence_products(prep.values, prep.offsets, mu, cps)
    n = prep.lengths.astype(float)
    mu[:, 1:] = prep.ybar[:, None] - delta * t_1[:, 1:] / n[:, None]
    rss = K.residual_sums(prep.values, prep.offsets, mu, float(delta), cps)
    sigma2 = np.maximum(rss / n[:, None], prep.floor[:, None])
    return mu, sigma2, cps


def cm_sweep(data, tau, params: MixtureParams, nb_m_step: int = 1, update_delta: bool = True) -> MixtureParams:
    """``nb_m_step`` rounds of (pi, delta, Phi) conditional maximisation at fixed tau."""
    prep = prepare(data)
    current = params
    for _ in range(nb_m_step):
        pi = cm_pi(tau)
        delta = current.delta
        if update_delta:
            delta = cm_delta(prep, tau, MixtureParams(pi, delta, current.mu, current.sigma2, current.change_points))
        mu, sigma2, cps = _cm_phi_all(prep, delta)
        current = MixtureParams(pi, delta, mu, sigma2, cps)
    return current


# --- initialisation and driver --------------------------------------------


def _noise_scale(prep: PreparedData) -> float:
    scales = []
    for p in prep:
        d = np.diff(p.values)
        mad = np.median(np.abs(d - np.median(d))) * 1.4826 / np.sqrt(2.0)
        scales.append(mad if mad > 0 else np.std(p.values))
    return float(np.median(scales))


def _largest_step(y: np.ndarray) -> float:
    """Mean change across the best single split of ``y`` (free means on each side)."""
    n = y.size
    u = np.arange(1, n)
    c = np.cumsum(y)[:-1]
    left = c / u
    right = (y.sum() - c) / (n - u)
    gain = u * (n - u) / n * (right - left) ** 2
    i = int(np.argmax(gain))
    return float(right[i] - left[i])


def initial_delta(data) -> float:
    """Median over profiles of the mean change across each profile's best
    single split, kept at least 0.1 noise scales away from zero."""
    prep = prepare(data)
    d0 = float(np.median([_largest_step(p.values) for p in prep]))
    margin = 0.1 * _noise_scale(prep)
    if abs(d0) < margin:
        d0 = margin if d0 > 0 else -margin
    return d0


def initialize(data, seed) -> MixtureParams:
    """Random start: uniform proportions, uniformly drawn admissible
    change-points, baseline = mean of the first segment, variance = profile
    variance, jump = :func:`initial_delta` scaled by a random factor in
    [0.75, 1.5]."""
    prep = prepare(data)
    rng = np.random.default_rng(seed)
    S = len(prep)
    mu = np.empty((S, 4))
    sigma2 = np.empty((S, 4))
    cps = empty_change_points(S)
    for s, p in enumerate(prep):
        y = p.values
        n = p.n
        u2 = rng.integers(1, n)
        u3, v3 = np.sort(rng.choice(n - 1, size=2, replace=False) + 1)
        u4 = rng.integers(1, n)
        cps[s, 1, 0] = u2
        cps[s, 2, :] = (u3, v3)
        cps[s, 3, 0] = u4
        mu[s] = (y.mean(), y[:u2].mean(), y[:u3].mean(), y[:u4].mean())
        sigma2[s] = max(np.var(y), prep.floor[s])
    delta = initial_delta(prep) * rng.uniform(0.75, 1.5)
    return MixtureParams(np.full(4, 0.25), delta, mu, sigma2, cps)


def _run_start(prep: PreparedData, config: FitConfig, seed_seq, index: int) -> FitResult:
    params = initialize(prep, seed_seq)
    update_delta = config.fix_delta is None
    if not update_delta:
        params.delta = float(config.fix_delta)
    ll, tau = loglik_and_tau(prep, params)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, config.max_em_iter + 1):
        params = cm_sweep(prep, tau, params, config.nb_m_step, update_delta=update_delta)
        ll_new, tau = loglik_and_tau(prep, params)
        trace.append(ll_new)
        if abs(ll_new - ll) / (1.0 + abs(ll)) < config.rel_tol:
            converged = True
            break
        ll = ll_new
    return FitResult(params, tau, trace, converged, n_iter=it, start=index)


def fit(data, config: FitConfig | None = None, workers=None) -> FitResult:
    """Multi-start ECM; the start with the highest final log-likelihood is kept.

    Parameters
    ----------
    data : sequence of Profile or array-like
    config : FitConfig, optional
    workers : int, optional
        Thread count for running starts concurrently. Defaults to
        ``STEPMIX_THREADS`` (or 1). The result does not depend on it.
    """
    config = config or FitConfig()
    prep = prepare(data)
    seeds = np.random.SeedSequence(config.seed).spawn(config.nb_init)
    workers = min(resolve_workers(workers), config.nb_init)

    def run(i):
        try:
            return _run_start(prep, config, seeds[i], i)
        except (FitError, FloatingPointError) as exc:
            logger.debug("start %d failed: %s", i, exc)
            return exc

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            outcomes = list(pool.map(run, range(config.nb_init)))
    else:
        outcomes = [run(i) for i in range(config.nb_init)]

    results = [r for r in outcomes if isinstance(r, FitResult)]
    if not results:
        raise FitError("all starts failed: " + "; ".join(str(e) for e in outcomes))
    best = results[0]
    for r in results[1:]:
        if r.loglik > best.loglik:
            best = r
    best.start_logliks = [r.loglik if isinstance(r, FitResult) else float("nan") for r in outcomes]
    return best
