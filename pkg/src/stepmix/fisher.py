"""Expected complete-data Fisher information at a fitted mixture.

The information matrix over (pi_1..3, delta, mu, sigma2) is block diagonal
apart from the delta row/column, so it is kept as six blocks and never
assembled. Per-profile vectors are flattened profile-major: entry
``4 * s + (k - 1)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .ecm import prepare


@dataclass
class InfoBlocks:
    pi_block: np.ndarray
    delta_scalar: float
    mu_diag: np.ndarray
    sigma2_diag: np.ndarray
    delta_mu_cross: np.ndarray
    delta_sigma2_cross: np.ndarray


@dataclass
class StandardErrors:
    pi: np.ndarray
    delta: float
    mu: np.ndarray
    sigma2: np.ndarray


def expected_information(data, fit, tau=None) -> InfoBlocks:
    """Information blocks at the fitted parameters, weighted by the posteriors.

    ``fit`` is a :class:`~stepmix.ecm.FitResult`, or a
    :class:`~stepmix.model.MixtureParams` together with ``tau``.

    The variance diagonal uses ``n tau / (2 sigma^4)`` and the (mu, sigma2)
    block is zero: both hold at a fitted point, where each sigma2 is the mean
    squared residual and each mu the profiled baseline.
    """
    params = getattr(fit, "params", fit)
    tau = np.asarray(fit.tau if tau is None else tau, dtype=float)
    prep = prepare(data)
    pi = params.pi
    if np.any(pi <= 0):
        raise ValueError(
            f"proportion block undefined: fitted proportions {pi} contain zeros; "
            "refit with the empty cluster floored or drop it from the report"
        )
    w = tau / pi**2
    pi_block = np.diag(w[:, :3].sum(axis=0)) + w[:, 3].sum()

    s2 = params.sigma2
    n = prep.lengths[:, None].astype(float)
    t_r, t_t, t_1 = K.incidence_products(prep.values, prep.offsets, params.mu, params.change_points)
    # T'(y - mu - T delta)
    t_resid = t_r - params.delta * t_t
    return InfoBlocks(
        pi_block=pi_block,
        delta_scalar=float(np.sum(tau * t_t / s2)),
        mu_diag=(n * tau / s2).ravel(),
        sigma2_diag=(n * tau / (2.0 * s2**2)).ravel(),
        delta_mu_cross=(tau * t_1 / s2).ravel(),
        delta_sigma2_cross=(tau * t_resid / s2**2).ravel(),
    )


def standard_errors(info: InfoBlocks) -> StandardErrors:
    """Standard errors from the inverse information.

    The jump's variance is the inverse of its Schur complement after
    eliminating all baselines and variances; baseline and variance entries
    take the matching diagonal of the bordered inverse. Parameters with zero
    information (clusters with no posterior weight) get NaN.
    """
    S = info.mu_diag.size // 4
    try:
        cov = np.linalg.inv(info.pi_block)
        var3 = np.diag(cov)
        var4 = cov.sum()
        se_pi = np.sqrt(np.append(var3, var4))
        if not np.all(np.isfinite(se_pi)):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        warnings.warn("singular proportion block", RuntimeWarning)
        se_pi = np.full(4, np.nan)

    d_mu, d_s2 = info.mu_diag, info.sigma2_diag
    b, c = info.delta_mu_cross, info.delta_sigma2_cross
    ok_mu = d_mu > 0
    ok_s2 = d_s2 > 0
    schur = info.delta_scalar
    schur -= np.sum(b[ok_mu] ** 2 / d_mu[ok_mu])
    schur -= np.sum(c[ok_s2] ** 2 / d_s2[ok_s2])

    var_mu = np.full(d_mu.shape, np.nan)
    var_s2 = np.full(d_s2.shape, np.nan)
    if schur > 0:
        se_delta = schur**-0.5
        var_mu[ok_mu] = 1.0 / d_mu[ok_mu] + (b[ok_mu] / d_mu[ok_mu]) ** 2 / schur
        var_s2[ok_s2] = 1.0 / d_s2[ok_s2] + (c[ok_s2] / d_s2[ok_s2]) ** 2 / schur
    else:
        warnings.warn("jump information is not positive after elimination", RuntimeWarning)
        se_delta = float("nan")
        var_mu[ok_mu] = 1.0 / d_mu[ok_mu]
        var_s2[ok_s2] = 1.0 / d_s2[ok_s2]
    return StandardErrors(
        pi=se_pi,
        delta=float(se_delta),
        mu=np.sqrt(var_mu).reshape(S, 4),
        sigma2=np.sqrt(var_s2).reshape(S, 4),
    )
