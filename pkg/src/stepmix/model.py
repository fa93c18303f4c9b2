"""Four-cluster stepwise mixture model: types, mean functions and likelihoods.

Cluster semantics are fixed:

    1  constant mean (no jump)
    2  one jump of size ``delta``
    3  two jumps of size ``delta`` each
    4  one jump of size ``2 * delta``

Change-points are stored as the 1-based index of the last observation of
each non-final segment, so a cluster-2 profile with change-point ``u`` has
mean ``mu`` on ``1..u`` and ``mu + delta`` on ``u+1..n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

N_CLUSTERS = 4
CLUSTERS = (1, 2, 3, 4)
#: number of change-points per cluster
N_CHANGE_POINTS = {1: 0, 2: 1, 3: 2, 4: 1}
#: number of segments per cluster
N_SEGMENTS = {k: c + 1 for k, c in N_CHANGE_POINTS.items()}
MIN_LENGTH = 4
LOG_2PI = np.log(2.0 * np.pi)


class ModelError(ValueError):
    """Structural or domain violation of the model contracts."""


@dataclass(frozen=True)
class Profile:
    id: str
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ModelError(f"profile {self.id!r}: values must be one-dimensional")
        if values.size < MIN_LENGTH:
            raise ModelError(
                f"profile {self.id!r}: need at least {MIN_LENGTH} observations, got {values.size}"
            )
        if not np.all(np.isfinite(values)):
            raise ModelError(f"profile {self.id!r}: non-finite intensity")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size


def as_profiles(data) -> list[Profile]:
    """Accept a list of Profile objects or plain arrays."""
    out = []
    for i, item in enumerate(data):
        out.append(item if isinstance(item, Profile) else Profile(str(i), item))
    return out


def _check_cluster(k: int) -> int:
    if k not in N_CHANGE_POINTS:
        raise ModelError(f"cluster must be one of 1..4, got {k}")
    return int(k)


@dataclass(frozen=True)
class Segmentation:
    cluster: int
    change_points: tuple[int, ...] = ()

    def __post_init__(self):
        _check_cluster(self.cluster)
        cps = tuple(int(c) for c in self.change_points)
        if len(cps) != N_CHANGE_POINTS[self.cluster]:
            raise ModelError(
                f"cluster {self.cluster} needs {N_CHANGE_POINTS[self.cluster]} change-points, got {len(cps)}"
            )
        if any(b <= a for a, b in zip(cps, cps[1:])):
            raise ModelError(f"change-points must be strictly increasing: {cps}")
        object.__setattr__(self, "change_points", cps)

    def validate(self, n: int) -> "Segmentation":
        if self.change_points and (self.change_points[0] < 1 or self.change_points[-1] > n - 1):
            raise ModelError(f"change-points {self.change_points} outside [1, {n - 1}]")
        return self

    def segment_lengths(self, n: int) -> tuple[int, ...]:
        bounds = (0, *self.change_points, n)
        return tuple(b - a for a, b in zip(bounds, bounds[1:]))

    def incidence(self, n: int) -> np.ndarray:
        """Number of jumps (in units of delta) undergone by time t, t=1..n."""
        self.validate(n)
        return incidence(n, self.cluster, self.change_points)


def incidence(n: int, k: int, change_points: Sequence[int]) -> np.ndarray:
    t = np.arange(1, n + 1)
    out = np.zeros(n)
    if k == 2:
        out[t > change_points[0]] = 1.0
    elif k == 3:
        out[t > change_points[0]] = 1.0
        out[t > change_points[1]] = 2.0
    elif k == 4:
        out[t > change_points[0]] = 2.0
    return out


@dataclass(frozen=True)
class ProfileParams:
    mu: float
    sigma2: float
    seg: Segmentation


@dataclass
class MixtureParams:
    """Shared ``(pi, delta)`` plus per-profile, per-cluster ``(mu, sigma2, T)``.

    Per-profile parameters are held as arrays indexed ``[s, k - 1]``;
    ``change_points[s, k - 1]`` is padded with ``-1``.
    """

    pi: np.ndarray
    delta: float
    mu: np.ndarray
    sigma2: np.ndarray
    change_points: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma2 = np.asarray(self.sigma2, dtype=float)
        self.change_points = np.asarray(self.change_points, dtype=np.int64)
        self.delta = float(self.delta)
        if self.pi.shape != (N_CLUSTERS,):
            raise ModelError("pi must have four entries")
        if np.any(self.pi < 0) or abs(self.pi.sum() - 1.0) > 1e-12:
            raise ModelError(f"pi must be a probability vector, got {self.pi}")
        if not np.isfinite(self.delta):
            raise ModelError("delta must be finite")
        S = self.mu.shape[0]
        if self.mu.shape != (S, 4) or self.sigma2.shape != (S, 4) or self.change_points.shape != (S, 4, 2):
            raise ModelError("per-profile parameter arrays have inconsistent shapes")

    @property
    def n_profiles(self) -> int:
        return self.mu.shape[0]

    def segmentation(self, s: int, k: int) -> Segmentation:
        c = N_CHANGE_POINTS[k]
        return Segmentation(k, tuple(self.change_points[s, k - 1, :c]))

    def profile_params(self, s: int, k: int) -> ProfileParams:
        return ProfileParams(float(self.mu[s, k - 1]), float(self.sigma2[s, k - 1]), self.segmentation(s, k))

    def copy(self) -> "MixtureParams":
        return MixtureParams(
            self.pi.copy(), self.delta, self.mu.copy(), self.sigma2.copy(), self.change_points.copy()
        )


def empty_change_points(S: int) -> np.ndarray:
    return np.full((S, 4, 2), -1, dtype=np.int64)


def mean_vector(n: int, k: int, mu: float, delta: float, seg: Segmentation) -> np.ndarray:
    """Mean of a cluster-``k`` profile of length ``n``, evaluated case by case."""
    _check_cluster(k)
    if seg.cluster != k:
        raise ModelError(f"segmentation is for cluster {seg.cluster}, not {k}")
    seg.validate(n)
    t = np.arange(1, n + 1)
    m = np.full(n, float(mu))
    cps = seg.change_points
    if k == 2:
        m += delta * (t > cps[0])
    elif k == 3:
        m += delta * ((t > cps[0]) & (t <= cps[1])) + 2 * delta * (t > cps[1])
    elif k == 4:
        m += 2 * delta * (t > cps[0])
    return m


def log_density(y, k: int, phi: ProfileParams, delta: float) -> float:
    """Gaussian log-density of profile ``y`` under cluster ``k``."""
    y = np.asarray(getattr(y, "values", y), dtype=float)
    if not phi.sigma2 > 0:
        raise ModelError(f"sigma2 must be positive, got {phi.sigma2}")
    n = y.size
    if k == 1 and not phi.seg.change_points:
        resid = y - phi.mu
    else:
        resid = y - mean_vector(n, k, phi.mu, delta, phi.seg)
    return -0.5 * n * (LOG_2PI + np.log(phi.sigma2)) - resid @ resid / (2.0 * phi.sigma2)


def residual_sums(data: Sequence[Profile], params: MixtureParams) -> np.ndarray:
    """Squared residual norms ``||y^s - mu_k^s - T_k^s delta||^2`` as an (S, 4) array."""
    S = len(data)
    rss = np.empty((S, 4))
    for s, prof in enumerate(data):
        y = prof.values
        n = y.size
        for k in CLUSTERS:
            c = N_CHANGE_POINTS[k]
            T = incidence(n, k, params.change_points[s, k - 1, :c])
            r = y - params.mu[s, k - 1] - T * params.delta
            rss[s, k - 1] = r @ r
    return rss


def log_densities(data: Sequence[Profile], params: MixtureParams) -> np.ndarray:
    """``log f(Y^s; Phi_k^s, delta)`` for every profile and cluster, shape (S, 4)."""
    if np.any(params.sigma2 <= 0):
        raise ModelError("sigma2 must be positive")
    n = np.array([p.n for p in data], dtype=float)[:, None]
    rss = residual_sums(data, params)
    return -0.5 * n * (LOG_2PI + np.log(params.sigma2)) - rss / (2.0 * params.sigma2)


def log_joint(data: Sequence[Profile], params: MixtureParams) -> np.ndarray:
    """``log pi_k + log f`` per profile and cluster; ``-inf`` where ``pi_k = 0``."""
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    return log_densities(data, params) + log_pi[None, :]


def observed_loglik(data: Sequence[Profile], params: MixtureParams) -> float:
    """Observed-data log-likelihood, log-sum-exp per profile."""
    data = as_profiles(data)
    return float(np.sum(logsumexp(log_joint(data, params), axis=1)))


def complete_loglik(data: Sequence[Profile], params: MixtureParams, z) -> float:
    """Complete-data log-likelihood for hard (one-hot) assignments ``z``."""
    data = as_profiles(data)
    z = np.asarray(z, dtype=float)
    if z.shape != (len(data), 4) or not np.all((z == 0) | (z == 1)) or not np.all(z.sum(axis=1) == 1):
        raise ModelError("z must be one-hot with shape (S, 4)")
    return weighted_complete_loglik(data, params, z)


def weighted_complete_loglik(data: Sequence[Profile], params: MixtureParams, tau) -> float:
    """``sum_s sum_k tau_k^s (log pi_k + log f)``: the EM objective Q for fixed weights."""
    data = as_profiles(data)
    tau = np.asarray(tau, dtype=float)
    lj = log_joint(data, params)
    mask = tau > 0
    return float(np.sum(tau[mask] * lj[mask]))


def sigma2_floor(y) -> float:
    """Lower bound on fitted variances for a profile."""
    v = float(np.var(np.asarray(y, dtype=float)))
    return 1e-12 * (v if v > 0 else 1.0)
