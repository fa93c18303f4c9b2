import numpy as np
import pytest

from conftest import assemble_information, fd_information, random_dataset, step_profile
from stepmix.ecm import FitConfig, FitResult, fit
from stepmix.fisher import InfoBlocks, expected_information, standard_errors
from stepmix.model import MixtureParams, Profile, empty_change_points


def _uniform_result(S, n=12):
    rng = np.random.default_rng(0)
    profiles = [Profile(str(s), rng.normal(size=n)) for s in range(S)]
    cps = empty_change_points(S)
    cps[:, 1, 0] = 6
    cps[:, 2, :] = (4, 8)
    cps[:, 3, 0] = 6
    params = MixtureParams(np.full(4, 0.25), -1.0, np.zeros((S, 4)), np.ones((S, 4)), cps)
    return profiles, FitResult(params, np.full((S, 4), 0.25), [0.0], True)


def _block_rel(a, b):
    a, b = np.atleast_1d(a), np.atleast_1d(b)
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_uniform_proportion_block():
    profiles, res = _uniform_result(100)
    info = expected_information(profiles, res)
    np.testing.assert_allclose(info.pi_block, 100 * np.array([[8, 4, 4], [4, 8, 4], [4, 4, 8]]), rtol=1e-12)


def test_single_profile_jump_information():
    # tau on cluster 2, unit variance, ten points after the change
    prof = Profile("a", np.arange(15, dtype=float))
    cps = empty_change_points(1)
    cps[0, 1, 0] = 5
    cps[0, 2, :] = (2, 9)
    cps[0, 3, 0] = 3
    params = MixtureParams(np.full(4, 0.25), -1.0, np.zeros((1, 4)), np.ones((1, 4)), cps)
    info = expected_information([prof], params, tau=np.array([[0.0, 1.0, 0.0, 0.0]]))
    assert info.delta_scalar == 10.0


def test_jump_information_expansion(rng):
    profiles, _ = random_dataset(rng, 6, 30, -2.0)
    res = fit(profiles, FitConfig(nb_init=2))
    info = expected_information(profiles, res)
    expected = 0.0
    for s in range(6):
        n = profiles[s].n
        t2, = res.params.segmentation(s, 2).change_points
        t31, t32 = res.params.segmentation(s, 3).change_points
        t4, = res.params.segmentation(s, 4).change_points
        tau, s2 = res.tau[s], res.params.sigma2[s]
        expected += (n - t2) * tau[1] / s2[1]
        expected += tau[2] * ((t32 - t31) + 4 * (n - t32)) / s2[2]
        expected += 4 * (n - t4) * tau[3] / s2[3]
    assert info.delta_scalar == pytest.approx(expected, rel=1e-12)


def test_zero_proportion_is_an_error():
    profiles, res = _uniform_result(3)
    res.params.pi[:] = (0.5, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError, match="proportion"):
        expected_information(profiles, res)


def populated_dataset(rng, S, n, delta):
    # every cluster present, so no proportion sits at its floor
    labels = [1, 2, 3, 4] + list(rng.integers(1, 5, S - 4))
    return [Profile(str(s), step_profile(rng, n, int(k), delta)[0]) for s, k in enumerate(labels)]


def test_blocks_match_finite_difference_hessian(rng):
    checked = 0
    while checked < 3:
        S = int(rng.integers(4, 6))
        profiles = populated_dataset(rng, S, int(rng.integers(20, 40)), -4.0)
        res = fit(profiles, FitConfig(nb_init=3, rel_tol=1e-12, max_em_iter=500))
        if res.params.pi.min() < 0.05:
            continue
        checked += 1
        info = expected_information(profiles, res)
        fd = fd_information(profiles, res.params, res.tau)
        for name in ("pi_block", "delta_scalar", "mu_diag", "sigma2_diag", "delta_mu_cross", "delta_sigma2_cross"):
            assert _block_rel(getattr(info, name), fd[name]) < 1e-3, name
        # mu and sigma2 decouple at the fitted baselines
        scale = np.sqrt(info.mu_diag * info.sigma2_diag).max()
        assert np.abs(fd["mu_sigma2_cross"]).max() / scale < 1e-3


def test_information_invariants(rng):
    profiles, _ = random_dataset(rng, 10, 30, -2.0)
    info = expected_information(profiles, fit(profiles, FitConfig(nb_init=2)))
    np.testing.assert_allclose(info.pi_block, info.pi_block.T)
    assert np.all(np.linalg.eigvalsh(info.pi_block) >= 0)
    off = info.pi_block[~np.eye(3, dtype=bool)]
    assert np.ptp(off) <= 1e-9 * off.max()
    assert info.delta_scalar >= 0
    assert np.all(info.mu_diag >= 0) and np.all(info.sigma2_diag >= 0)


@pytest.mark.parametrize("k, idx", [(2, 0), (3, 0), (3, 1), (4, 0)])
def test_jump_information_grows_with_segment_length(k, idx):
    n = 30
    profiles = [Profile("a", np.zeros(n))]
    cps = empty_change_points(1)
    cps[0, 1, 0] = 15
    cps[0, 2, :] = (10, 20)
    cps[0, 3, 0] = 15
    params = MixtureParams(np.full(4, 0.25), -1.0, np.zeros((1, 4)), np.ones((1, 4)), cps)
    tau = np.zeros((1, 4))
    tau[0, k - 1] = 1.0
    base = expected_information(profiles, params, tau).delta_scalar
    # moving a change-point left lengthens the segment after it
    params.change_points[0, k - 1, idx] -= 1
    assert expected_information(profiles, params, tau).delta_scalar > base


def test_standard_errors_block_diagonal_case():
    m = 8
    info = InfoBlocks(
        pi_block=np.eye(3) * 5.0,
        delta_scalar=16.0,
        mu_diag=np.full(m, 4.0),
        sigma2_diag=np.full(m, 9.0),
        delta_mu_cross=np.zeros(m),
        delta_sigma2_cross=np.zeros(m),
    )
    se = standard_errors(info)
    assert se.delta == 0.25
    np.testing.assert_allclose(se.mu, 0.5)
    np.testing.assert_allclose(se.sigma2, 1 / 3)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_standard_errors_uniform_proportions_symmetric():
    profiles, res = _uniform_result(100)
    se = standard_errors(expected_information(profiles, res))
    assert se.pi[0] == pytest.approx(se.pi[1], rel=1e-12) == pytest.approx(se.pi[2], rel=1e-12)


def test_standard_errors_match_dense_inverse(rng):
    for _ in range(5):
        S = int(rng.integers(1, 6))
        profiles, _ = random_dataset(rng, S, 25, -2.0)
        info = expected_information(profiles, fit(profiles, FitConfig(nb_init=2)))
        se = standard_errors(info)
        cov = np.linalg.inv(assemble_information(info))
        d = np.sqrt(np.diag(cov))
        m = 4 * S
        assert se.delta == pytest.approx(d[0], rel=1e-8)
        np.testing.assert_allclose(se.mu.ravel(), d[1 : 1 + m], rtol=1e-8)
        np.testing.assert_allclose(se.sigma2.ravel(), d[1 + m :], rtol=1e-8)
        np.testing.assert_allclose(se.pi[:3], np.sqrt(np.diag(np.linalg.inv(info.pi_block))), rtol=1e-10)


def test_standard_errors_flag_unidentified_entries():
    info = InfoBlocks(
        pi_block=np.zeros((3, 3)),
        delta_scalar=4.0,
        mu_diag=np.array([4.0, 0.0, 4.0, 4.0]),
        sigma2_diag=np.array([2.0, 0.0, 2.0, 2.0]),
        delta_mu_cross=np.zeros(4),
        delta_sigma2_cross=np.zeros(4),
    )
    with pytest.warns(RuntimeWarning):
        se = standard_errors(info)
    assert np.all(np.isnan(se.pi))
    assert np.isnan(se.mu[0, 1]) and np.isfinite(se.mu[0, 0])
    assert se.delta == 0.5
