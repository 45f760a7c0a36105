import numpy as np
import pytest

from mlbest import dcmodel, graph
from mlbest.errors import DegenerateSignal, ShapeMismatch

from conftest import random_connected_laplacian, random_spd


def test_make_rng_is_keyed():
    a = dcmodel.make_rng(7, 1, 2).standard_normal(3)
    b = dcmodel.make_rng(7, 1, 2).standard_normal(3)
    c = dcmodel.make_rng(7, 2, 1).standard_normal(3)
    np.testing.assert_array_equal(a, b)
    assert not np.allclose(a, c)


def test_prior_validation():
    with pytest.raises(ShapeMismatch):
        dcmodel.StatePrior(np.ones((2, 3)))
    with pytest.raises(ValueError):
        dcmodel.StatePrior(-np.eye(2))
    p = dcmodel.StatePrior.isotropic(4, 2.0)
    np.testing.assert_allclose(p.sigma_theta, 4 * np.eye(4))
    U = graph.reduction_operator(4)
    np.testing.assert_allclose(p.sigma_theta_reduced, 4 * U.T @ U)


def test_simulate_shapes_and_model(rng):
    lp = random_connected_laplacian(rng, 5)
    prior = dcmodel.StatePrior(random_spd(rng, 5))
    ms, theta = dcmodel.simulate(lp, prior, 0.0, 10, 3)
    assert ms.P.shape == (5, 10) and theta.shape == (5, 10)
    np.testing.assert_allclose(ms.P, lp.L @ theta, atol=1e-12)
    np.testing.assert_allclose(ms.P.sum(axis=0), 0, atol=1e-10)
    with pytest.raises(ShapeMismatch):
        dcmodel.simulate(lp, dcmodel.StatePrior.isotropic(4), 1.0, 3, 0)


def test_sample_covariance_converges(rng):
    lp = random_connected_laplacian(rng, 4)
    prior = dcmodel.StatePrior.isotropic(4, 1.5)
    ms, _ = dcmodel.simulate(lp, prior, 0.3, 200_000, 11)
    cov, red = dcmodel.sample_covariance(ms, lp)
    exact, exact_red = dcmodel.model_covariance(lp, prior, 0.3)
    assert np.abs(cov - exact).max() < 0.05 * np.abs(exact).max()
    assert np.abs(red - exact_red).max() < 0.05 * np.abs(exact_red).max()


def test_reduced_covariance_identity(rng):
    # U+ (L^T S L + s2 I) U+^T equals L~ S~ L~ + s2 U+ U+^T for any S
    lp = random_connected_laplacian(rng, 6)
    prior = dcmodel.StatePrior(random_spd(rng, 6))
    cov, red = dcmodel.model_covariance(lp, prior, 0.7)
    np.testing.assert_allclose(dcmodel.reduce_covariance(cov, lp), red, atol=1e-10)


def test_center():
    ms = dcmodel.MeasurementSet(np.array([[1.0, 3.0], [2.0, 2.0]]))
    c = dcmodel.center(ms)
    assert c.centered and not ms.centered
    np.testing.assert_allclose(c.P, [[-1, 1], [0, 0]])


def test_snr_roundtrip(ieee14_lp):
    prior = dcmodel.StatePrior.isotropic(14)
    s2 = dcmodel.snr_to_noise_var(ieee14_lp, prior, 25.0)
    assert dcmodel.noise_var_to_snr(ieee14_lp, prior, s2) == pytest.approx(25.0)
    assert s2 == pytest.approx(dcmodel.signal_power(ieee14_lp, prior) / 10**2.5)


def test_degenerate_signal():
    lp = graph.LaplacianPair.from_laplacian(np.zeros((3, 3)))
    with pytest.raises(DegenerateSignal):
        dcmodel.snr_to_noise_var(lp, dcmodel.StatePrior.isotropic(3), 10.0)
