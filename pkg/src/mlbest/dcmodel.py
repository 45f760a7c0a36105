"""Linear DC measurement model ``p[n] = L theta[n] + w[n]``.

Simulation, centering, and sample/model covariances in the full (M) and
reduced (M-1) coordinates.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateSignal, ShapeMismatch
from .graph import reduction_operator


def make_rng(seed, *key):
    """Counter-based generator for ``(seed, *key)``.

    Uses Philox keyed through :class:`numpy.random.SeedSequence`, so any
    trial can be regenerated from its indices alone.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class StatePrior:
    """Zero-mean Gaussian prior on the bus voltage angles."""

    sigma_theta: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.sigma_theta, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ShapeMismatch(f"sigma_theta must be square, got {S.shape}")
        if np.linalg.eigvalsh(0.5 * (S + S.T))[0] <= 0:
            raise ValueError("sigma_theta must be positive definite")
        object.__setattr__(self, "sigma_theta", S)

    @classmethod
    def isotropic(cls, M, c=1.0):
        return cls(c**2 * np.eye(M))

    @property
    def M(self):
        return self.sigma_theta.shape[0]

    @property
    def sigma_theta_reduced(self):
        U = reduction_operator(self.M)
        return U.T @ self.sigma_theta @ U


@dataclass(frozen=True)
class MeasurementSet:
    """Active-power injections, one column per time sample."""

    P: np.ndarray
    centered: bool = False
    seed: int | None = None

    @property
    def M(self):
        return self.P.shape[0]

    @property
    def N(self):
        return self.P.shape[1]


def simulate(lp, prior, noise_var, N, seed, *key):
    """Draw ``N`` i.i.d. snapshots of the noisy DC model.

    Returns the measurement set and the true states (M x N).
    """
    M = lp.M
    if prior.M != M:
        raise ShapeMismatch(f"prior has {prior.M} buses, Laplacian has {M}")
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    rng = make_rng(seed, *key)
    chol = np.linalg.cholesky(prior.sigma_theta)
    theta = chol @ rng.standard_normal((M, N))
    noise = rng.standard_normal((M, N))
    P = lp.L @ theta + np.sqrt(noise_var) * noise
    return MeasurementSet(P, centered=False, seed=seed), theta


def center(ms):
    P = ms.P - ms.P.mean(axis=1, keepdims=True)
    return replace(ms, P=P, centered=True)


def sample_covariance(ms, lp):
    """Return ``(Sigma_p, Sigma_p_reduced)`` from the measurements as given."""
    P = ms.P
    cov = P @ P.T / P.shape[1]
    cov = 0.5 * (cov + cov.T)
    return cov, reduce_covariance(cov, lp)


def reduce_covariance(cov, lp):
    red = lp.U_pinv @ cov @ lp.U_pinv.T
    return 0.5 * (red + red.T)


def model_covariance(lp, prior, noise_var):
    """Exact covariances ``L^T S L + s2 I`` and ``L~ S~ L~ + s2 U+ U+^T``."""
    L = lp.L
    cov = L.T @ prior.sigma_theta @ L + noise_var * np.eye(lp.M)
    Lr = lp.L_reduced
    red = Lr.T @ prior.sigma_theta_reduced @ Lr + noise_var * lp.noise_shape
    return 0.5 * (cov + cov.T), 0.5 * (red + red.T)


def signal_power(lp, prior):
    """``Tr{L~ S~ L~}``, the numerator of the SNR."""
    Lr = lp.L_reduced
    return float(np.trace(Lr @ prior.sigma_theta_reduced @ Lr))


def snr_to_noise_var(lp, prior, snr_db):
    power = signal_power(lp, prior)
    if power <= 0:
        raise DegenerateSignal("signal power Tr{L~ S~ L~} must be positive")
    return power / 10.0 ** (snr_db / 10.0)


def noise_var_to_snr(lp, prior, noise_var):
    power = signal_power(lp, prior)
    if power <= 0:
        raise DegenerateSignal("signal power Tr{L~ S~ L~} must be positive")
    return 10.0 * np.log10(power / noise_var)
