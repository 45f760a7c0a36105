import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlbest import dcmodel, estimators as est, graph
from mlbest.errors import (
    InsufficientSamples,
    NoConvergence,
    NonPositiveDiagonal,
    NotApproxPSD,
    ShapeMismatch,
    SingularW,
)

from conftest import random_connected_laplacian, random_spd
from oracles import brute_force_projection

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def exact_problem(rng, M, sigma2=0.5):
    lp = random_connected_laplacian(rng, M)
    prior = dcmodel.StatePrior(random_spd(rng, M))
    cov, red = dcmodel.model_covariance(lp, prior, sigma2)
    return lp, prior, cov, red


def test_settings_validation():
    with pytest.raises(ValueError):
        est.SolverSettings(eta=0)
    with pytest.raises(ValueError):
        est.SolverSettings(gamma=-1)
    with pytest.raises(ValueError):
        est.SolverSettings(max_iters=0)


def test_noise_variance_exact(rng):
    _, _, cov, _ = exact_problem(rng, 6, sigma2=0.37)
    assert est.estimate_noise_variance(cov) == pytest.approx(0.37)


@pytest.mark.parametrize("M", [2, 3, 5, 9])
def test_pd_mixing_exact(rng, M):
    lp, prior, _, red = exact_problem(rng, M)
    L = est.pd_mixing_estimate(red, prior.sigma_theta_reduced, 0.5, lp)
    np.testing.assert_allclose(L, lp.L_reduced, atol=1e-9)


def test_pd_mixing_errors(rng):
    lp, prior, _, red = exact_problem(rng, 4)
    with pytest.raises(NotApproxPSD):
        est.pd_mixing_estimate(red, prior.sigma_theta_reduced, 1e3, lp)
    with pytest.raises(ShapeMismatch):
        est.pd_mixing_estimate(red, np.eye(2), 0.5, lp)


def test_closest_laplacian_fixed_point(ieee14_lp):
    L = est.closest_laplacian(ieee14_lp.L)
    np.testing.assert_allclose(L, ieee14_lp.L, atol=1e-8)


@pytest.mark.parametrize("M", [3, 4])
def test_closest_laplacian_matches_bruteforce(rng, M):
    for _ in range(5):
        T = rng.standard_normal((M, M))
        np.testing.assert_allclose(est.closest_laplacian(T), brute_force_projection(T), atol=1e-6)


def test_closest_laplacian_no_convergence(rng):
    T = rng.standard_normal((6, 6))
    with pytest.raises(NoConvergence) as info:
        est.closest_laplacian(T, est.SolverSettings(dykstra_max_iters=1))
    assert info.value.result.shape == (6, 6)
    rep = graph.validate_laplacian(info.value.result)
    assert rep.null_space and rep.P3


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (5, 5), elements=finite), arrays(np.float64, (5, 5), elements=finite))
def test_projection_properties(A, B):
    PA = est.closest_laplacian(A)
    PB = est.closest_laplacian(B)
    rep = graph.validate_laplacian(PA, tol=1e-7)
    assert rep.null_space and rep.P3
    np.testing.assert_allclose(est.closest_laplacian(PA), PA, atol=1e-7)
    SA, SB = 0.5 * (A + A.T), 0.5 * (B + B.T)
    assert np.linalg.norm(PA - PB) <= np.linalg.norm(SA - SB) + 1e-6


def test_two_phase_exact(rng):
    lp, prior, cov, red = exact_problem(rng, 7)
    for c in (cov, red):
        L = est.two_phase_recovery(c, prior.sigma_theta_reduced, 0.5, lp)
        np.testing.assert_allclose(L, lp.L_reduced, atol=1e-7)


def test_natural_gradient_vanishes_at_truth(rng):
    lp, prior, _, red = exact_problem(rng, 6)
    n = 5
    W = np.linalg.inv(lp.L_reduced)
    nu = est.natural_gradient_direction(
        W, np.zeros(n), np.zeros((n, n)), np.zeros((n, n)), red, prior.sigma_theta_reduced, 0.5, lp
    )
    assert np.abs(nu).max() < 1e-9


def test_augmented_lagrangian_exact(rng):
    lp, prior, _, red = exact_problem(rng, 6)
    S = prior.sigma_theta_reduced
    L, info = est.augmented_lagrangian_recovery(red, S, 0.5, lp, return_info=True)
    assert info["converged"]
    np.testing.assert_allclose(L, lp.L_reduced, atol=1e-6)


def test_augmented_lagrangian_sampled(ieee14_lp):
    prior = dcmodel.StatePrior.isotropic(14)
    s2 = dcmodel.snr_to_noise_var(ieee14_lp, prior, 20)
    ms, _ = dcmodel.simulate(ieee14_lp, prior, s2, 500, 2)
    cov, red = dcmodel.sample_covariance(dcmodel.center(ms), ieee14_lp)
    s2h = est.estimate_noise_variance(cov)
    L, info = est.augmented_lagrangian_recovery(
        red, prior.sigma_theta_reduced, s2h, ieee14_lp, est.SolverSettings(max_iters=5000), return_info=True
    )
    assert info["converged"] and info["symmetry_residual"] < 1e-8
    off = L - np.diag(np.diag(L))
    # constraints hold up to a small fraction of the weight scale
    assert off.max() < 0.05 * np.diag(L).mean()
    assert L.sum(axis=1).min() > -0.05 * np.diag(L).mean()
    assert np.linalg.norm(L - ieee14_lp.L_reduced) < 0.5 * np.linalg.norm(ieee14_lp.L_reduced)


def test_augmented_lagrangian_failures(rng):
    lp, prior, _, red = exact_problem(rng, 4)
    S = prior.sigma_theta_reduced
    with pytest.raises(SingularW):
        est.augmented_lagrangian_recovery(red, S, 0.5, lp, W_init=np.zeros((3, 3)))
    W0 = np.linalg.inv(lp.L_reduced + 0.3 * np.eye(3))
    with pytest.raises(NoConvergence) as info:
        est.augmented_lagrangian_recovery(red, S, 0.5, lp, est.SolverSettings(max_iters=2), W_init=W0)
    assert info.value.iterations == 2 and info.value.result.shape == (3, 3)


def test_sparsify():
    L = np.array([[2.0, -1.9, -0.1], [-1.9, 2.0, -0.1], [-0.1, -0.1, 0.2]])
    # 0.1 <= 0.9 * 0.2 would disconnect bus 3, so the threshold halves until it stays
    Ls, tau = est.sparsify(L, 0.9)
    assert tau < 0.1 and np.count_nonzero(Ls) == 9
    L2 = L.copy()
    L2[0, 2] = L2[2, 0] = -0.01
    Ls, tau = est.sparsify(L2, 0.1)
    assert Ls[0, 2] == 0 and Ls[1, 2] == -0.1 and tau == pytest.approx(0.02)
    with pytest.raises(NonPositiveDiagonal):
        est.sparsify(-L, 0.5)
    assert est.default_alpha(14) == pytest.approx(4 / 14)
    assert est.default_alpha(3) == pytest.approx(1 / 3)


def test_mmse_matches_conditional_mean(rng):
    lp = random_connected_laplacian(rng, 5)
    S = random_spd(rng, 5)
    G = est.mmse_gain(lp.L, S, 0.2)
    cov_p = lp.L @ S @ lp.L + 0.2 * np.eye(5)
    np.testing.assert_allclose(G, np.linalg.solve(cov_p, lp.L @ S).T, atol=1e-10)
    with pytest.raises(ShapeMismatch):
        est.mmse_states(np.ones((4, 3)), lp.L, S, 0.2)


def test_mmse_is_optimal(ieee14_lp):
    prior = dcmodel.StatePrior.isotropic(14)
    ms, theta = dcmodel.simulate(ieee14_lp, prior, 0.5, 20000, 5)
    best = est.mmse_states(ms.P, ieee14_lp.L, prior.sigma_theta, 0.5)
    worse = est.mmse_states(ms.P, ieee14_lp.L, prior.sigma_theta, 2.0)
    assert np.mean((best - theta) ** 2) < np.mean((worse - theta) ** 2)


def test_ml_best_pipeline(ieee14_lp):
    prior = dcmodel.StatePrior.isotropic(14)
    s2 = dcmodel.snr_to_noise_var(ieee14_lp, prior, 30)
    ms, theta = dcmodel.simulate(ieee14_lp, prior, s2, 1500, 4)
    for method in est.METHODS:
        res = est.ml_best(ms, prior.sigma_theta, method)
        assert res.method == method
        assert graph.fscore(res.L_hat, ieee14_lp.L) > 0.9
        assert res.states_hat.shape == theta.shape
        assert res.sigma2_hat == pytest.approx(s2, rel=0.3)
        assert {"iterations", "residual", "threshold_used", "sigma2_shrinks"} <= set(res.diagnostics)
    with pytest.raises(ValueError):
        est.ml_best(ms, prior.sigma_theta, "newton")


def test_ml_best_sample_checks(ieee14_lp):
    prior = dcmodel.StatePrior.isotropic(14)
    ms, _ = dcmodel.simulate(ieee14_lp, prior, 1.0, 10, 0)
    with pytest.raises(InsufficientSamples):
        est.ml_best(ms, prior.sigma_theta)
    ms, _ = dcmodel.simulate(ieee14_lp, prior, 1.0, 30, 0)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        try:
            est.ml_best(ms, prior.sigma_theta)
        except NotApproxPSD:
            pass
    assert any("unstable" in str(x.message) for x in w)


def test_augmented_lagrangian_step_cap(ieee14_lp):
    # this draw used to drive W through a singular matrix within 800 steps
    prior = dcmodel.StatePrior.isotropic(14)
    s2 = dcmodel.snr_to_noise_var(ieee14_lp, prior, 15)
    ms, _ = dcmodel.simulate(ieee14_lp, prior, s2, 200, 808, 2, 34)
    res = est.ml_best(ms, prior.sigma_theta, est.AUGMENTED)
    assert res.diagnostics["clipped_steps"] > 0
    assert np.all(np.isfinite(res.L_hat))
    assert graph.fscore(res.L_hat, ieee14_lp.L) > 0.5
