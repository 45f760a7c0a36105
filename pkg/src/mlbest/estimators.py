"""Blind estimation of grid topology, noise variance and states.

The pipeline (:func:`ml_best`) estimates the noise variance as the smallest
eigenvalue of the sample covariance, recovers the reduced Laplacian with
either the two-phase method (PD square-root estimate followed by a
Frobenius projection onto the Laplacian set) or the augmented-Lagrangian
natural-gradient method, thresholds small off-diagonals, and finally
plugs the estimates into the MMSE state estimator.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import dcmodel
from .errors import (
    InsufficientSamples,
    NoConvergence,
    NonPositiveDiagonal,
    NotApproxPSD,
    ShapeMismatch,
    SingularW,
)
from .graph import LaplacianPair, expand_laplacian, is_connected, reduce_laplacian
from .numerics import CLIP_TOL, pinv, psd_inv_sqrt, psd_sqrt, sym_eig

log = logging.getLogger(__name__)

TWO_PHASE = "two_phase"
AUGMENTED = "augmented_lagrangian"
METHODS = (TWO_PHASE, AUGMENTED)

COND_LIMIT = 1e12
MAX_REL_STEP = 0.1


@dataclass(frozen=True)
class SolverSettings:
    """Tuning knobs for the iterative solvers.

    ``eta``, ``gamma``, ``max_iters`` and ``epsilon`` drive the
    augmented-Lagrangian recovery; ``dykstra_*`` drive the Laplacian
    projection used by the two-phase recovery. ``gamma`` is dimensionless
    (it is rescaled by the spectral norms of the initial estimate) and
    ``epsilon`` is relative to ``||W||_F``.
    """

    eta: float = 0.1
    gamma: float = 3.0
    max_iters: int = 1000
    epsilon: float = 1e-6
    dykstra_max_iters: int = 50_000
    dykstra_tol: float = 1e-9

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        for name in ("gamma", "epsilon", "dykstra_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1 or self.dykstra_max_iters < 1:
            raise ValueError("iteration caps must be positive")


@dataclass
class EstimationResult:
    L_hat: np.ndarray
    L_ml: np.ndarray
    L_reduced_hat: np.ndarray
    sigma2_hat: float
    states_hat: np.ndarray | None
    method: str
    diagnostics: dict = field(default_factory=dict)


# -- noise variance ---------------------------------------------------------


def estimate_noise_variance(cov_p):
    """ML noise variance: the smallest eigenvalue of the sample covariance."""
    lam = sym_eig(cov_p).eigenvalues
    return max(float(lam[-1]), 0.0)


# -- two-phase recovery -----------------------------------------------------


def _corrected_covariance(cov_red, sigma2, lp):
    return cov_red - sigma2 * lp.noise_shape


def pd_mixing_estimate(cov_red, sigma_theta_red, sigma2, lp, clip_tol=CLIP_TOL):
    """Unique symmetric PSD solution of ``L S L = cov_red - sigma2 U+ U+^T``.

    Computed as ``S^-1/2 (S^1/2 C S^1/2)^1/2 S^-1/2`` with ``S`` the reduced
    state covariance and ``C`` the noise-corrected covariance. Raises
    :class:`NotApproxPSD` when ``C`` is clearly indefinite.
    """
    cov_red = np.atleast_2d(cov_red)
    sigma_theta_red = np.atleast_2d(sigma_theta_red)
    if cov_red.shape != sigma_theta_red.shape or cov_red.shape[0] != lp.M - 1:
        raise ShapeMismatch(f"{cov_red.shape} vs {sigma_theta_red.shape} for M={lp.M}")
    root = psd_sqrt(sigma_theta_red)
    inv_root = psd_inv_sqrt(sigma_theta_red)
    C = _corrected_covariance(cov_red, sigma2, lp)
    inner = psd_sqrt(root @ C @ root, clip_tol=clip_tol)
    L = inv_root @ inner @ inv_root
    return 0.5 * (L + L.T)


def _double_center(S):
    S = 0.5 * (S + S.T)
    r = S.mean(axis=1, keepdims=True)
    return S - r - r.T + S.mean()


def _clip_offdiag(S):
    out = np.minimum(S, 0.0)
    np.fill_diagonal(out, np.diag(S))
    return out


def _laplacian_from_offdiag(S):
    """Laplacian with the nonpositive, symmetrised off-diagonals of ``S``."""
    off = np.minimum(0.5 * (S + S.T), 0.0)
    np.fill_diagonal(off, 0.0)
    np.fill_diagonal(off, -off.sum(axis=1))
    return off


def closest_laplacian(T, settings=None, return_info=False):
    """Frobenius projection of a symmetric matrix onto the Laplacian set.

    The set ``{L = L^T, L 1 = 0, L_mk <= 0 (m != k)}`` is the intersection
    of an affine subspace (projection: double centering) and a convex cone
    (projection: clip off-diagonals at zero). Dykstra's alternating
    projections converge to the exact projection; only the cone needs a
    correction term since the other set is affine. The returned matrix is
    rebuilt from the cone iterate's off-diagonals, so it is a Laplacian by
    construction (and therefore PSD).

    Raises :class:`NoConvergence` after ``settings.dykstra_max_iters``
    sweeps; the exception carries the last iterate.
    """
    settings = settings or SolverSettings()
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ShapeMismatch(f"expected a square matrix, got {T.shape}")
    tol = settings.dykstra_tol * max(1.0, np.linalg.norm(T))
    x = 0.5 * (T + T.T)
    q = np.zeros_like(x)
    residual = np.inf
    for it in range(1, settings.dykstra_max_iters + 1):
        y = _double_center(x)
        x_new = _clip_offdiag(y + q)
        q = y + q - x_new
        step = np.linalg.norm(x_new - x)
        gap = np.linalg.norm(x_new - y)
        x = x_new
        residual = max(step, gap)
        if residual <= tol:
            break
    else:
        L = _laplacian_from_offdiag(x)
        raise NoConvergence(
            f"Dykstra projection did not converge in {settings.dykstra_max_iters} sweeps "
            f"(residual {residual:.3e})",
            result=L,
            residual=residual,
            iterations=settings.dykstra_max_iters,
        )
    L = _laplacian_from_offdiag(x)
    if return_info:
        return L, {"iterations": it, "residual": residual}
    return L


def two_phase_recovery(cov, sigma_theta_red, sigma2, lp, settings=None, return_info=False):
    """Reduced Laplacian from the PD estimate projected onto the Laplacian set.

    ``cov`` may be the full (M x M) or the reduced ((M-1) x (M-1)) sample
    covariance.
    """
    cov = np.atleast_2d(cov)
    if cov.shape[0] == lp.M:
        cov = dcmodel.reduce_covariance(cov, lp)
    L_pd = pd_mixing_estimate(cov, sigma_theta_red, sigma2, lp)
    L, info = closest_laplacian(expand_laplacian(L_pd), settings, return_info=True)
    L_red = reduce_laplacian(L)
    info["projection_residual"] = float(np.linalg.norm(L - expand_laplacian(L_pd)))
    if return_info:
        return L_red, info
    return L_red


# -- augmented-Lagrangian recovery ------------------------------------------


def _nu(W, mu, Lam, D, cov_red, S_theta, noise_cov, W_inv=None):
    if W_inv is None:
        W_inv = np.linalg.inv(W)
    Wt = W.T
    C = W_inv @ S_theta @ W_inv.T + noise_cov
    C_inv = np.linalg.inv(C)
    lik = (C_inv @ cov_red @ C_inv - C_inv) @ W_inv @ S_theta
    drive = lik + np.outer(np.ones(W.shape[0]), mu) - Lam
    return 0.5 * (drive + drive.T) + 0.5 * Wt @ (D.T - D) @ Wt


def natural_gradient_direction(W, mu, Lam, D, cov_red, sigma_theta_red, sigma2, lp):
    """Natural-gradient step direction for the demixing matrix ``W = L~^-1``.

    ``W^T (dQ/dW) W^T`` of the augmented Lagrangian, where the data term
    is the Gaussian negative log-likelihood with the noise contribution
    subtracted from the sample covariance, ``mu`` prices nonnegative row
    sums of ``W^-1``, ``Lam`` prices nonpositive off-diagonals of ``W^-1``
    and the antisymmetric ``D`` prices asymmetry of ``W``. It vanishes at
    ``W = L~^-1`` when the covariance is exact and all multipliers are
    zero.
    """
    W = np.atleast_2d(W)
    _check_conditioning(W)
    return _nu(
        W,
        np.asarray(mu, float),
        np.atleast_2d(Lam),
        np.atleast_2d(D),
        np.atleast_2d(cov_red),
        np.atleast_2d(sigma_theta_red),
        sigma2 * lp.noise_shape,
    )


def _check_conditioning(W, W_inv=None):
    if W_inv is None:
        try:
            W_inv = np.linalg.inv(W)
        except np.linalg.LinAlgError:
            raise SingularW("W is singular") from None
    cond = np.linalg.norm(W, 1) * np.linalg.norm(W_inv, 1)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularW(f"W is ill-conditioned (cond_1 ~ {cond:.3e})")
    return W_inv


def augmented_lagrangian_recovery(
    cov_red, sigma_theta_red, sigma2, lp, settings=None, W_init=None, return_info=False
):
    """Reduced Laplacian by constrained natural-gradient descent on ``W = L~^-1``.

    Each iteration updates the multipliers from the current iterate and
    then takes ``W <- W - eta * nu``, shortened when needed so that
    ``||W^-1 dW||_2 <= 0.1``. Stops when ``||dW||_F <= epsilon * ||W||_F``.
    On hitting ``max_iters`` a :class:`NoConvergence` is raised whose
    ``result`` is the final reduced Laplacian estimate.
    """
    settings = settings or SolverSettings()
    cov_red = np.atleast_2d(cov_red)
    if cov_red.shape[0] == lp.M:
        cov_red = dcmodel.reduce_covariance(cov_red, lp)
    S_theta = np.atleast_2d(sigma_theta_red)
    if W_init is None:
        W_init = np.linalg.inv(pd_mixing_estimate(cov_red, S_theta, sigma2, lp))
    W = np.array(W_init, dtype=float, ndmin=2)
    n = W.shape[0]
    noise_cov = sigma2 * lp.noise_shape
    ones = np.ones(n)
    mu = np.zeros(n)
    Lam = np.zeros((n, n))
    D = np.zeros((n, n))
    W_inv = _check_conditioning(W)
    # gamma is dimensionless. Each multiplier loop has a gain proportional
    # to the squared spectral norm of the matrix it acts through, so the
    # rates are normalised by ||L~||_2^2 (mu, Lambda) and ||W||_2^2 (D).
    sv = np.linalg.svd(W_inv, compute_uv=False)
    eta = settings.eta
    gamma_L = settings.gamma / sv[0] ** 2
    gamma_W = settings.gamma * sv[-1] ** 2

    step = np.inf
    converged = False
    clipped = 0
    for it in range(1, settings.max_iters + 1):
        mu = np.maximum(mu - gamma_L * (W_inv @ ones), 0.0)
        off = W_inv.copy()
        np.fill_diagonal(off, 0.0)
        Lam = np.maximum(Lam + gamma_L * off, 0.0)
        Lam = 0.5 * (Lam + Lam.T)
        np.fill_diagonal(Lam, 0.0)
        D = D - gamma_W * (W - W.T)
        dW = -eta * _nu(W, mu, Lam, D, cov_red, S_theta, noise_cov, W_inv)
        # W_new = W (I + W^-1 dW); keeping ||W^-1 dW||_2 <= MAX_REL_STEP
        # stops a single step from carrying W through a singular matrix
        rel = np.linalg.norm(W_inv @ dW, 2)
        if rel > MAX_REL_STEP:
            dW *= MAX_REL_STEP / rel
            clipped += 1
        W_new = W + dW
        W_inv = _check_conditioning(W_new)
        step = np.linalg.norm(W_new - W) / np.linalg.norm(W)
        W = W_new
        if step <= settings.epsilon:
            converged = True
            break

    L_red = 0.5 * (W_inv + W_inv.T)
    info = {
        "iterations": it,
        "residual": float(step),
        "symmetry_residual": float(np.linalg.norm(W - W.T)),
        "converged": converged,
        "clipped_steps": clipped,
    }
    if not converged:
        raise NoConvergence(
            f"augmented Lagrangian stopped after {it} iterations (||dW|| = {step:.3e})",
            result=(L_red, info) if return_info else L_red,
            residual=float(step),
            iterations=it,
        )
    if return_info:
        return L_red, info
    return L_red


# -- sparsification and states ----------------------------------------------


def default_alpha(M):
    """Threshold fraction ``4/M`` (inverse mean degree scaled), capped below 1."""
    return 4.0 / M if M > 4 else 1.0 / M


def sparsify(L_hat, alpha, max_halvings=10):
    """Zero off-diagonals with ``|entry| <= alpha * min(diag)``.

    If the surviving support disconnects the graph the threshold is
    halved, at most ``max_halvings`` times. Returns ``(L_sparse, tau)``.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    L_hat = np.asarray(L_hat, dtype=float)
    diag = np.diag(L_hat)
    if np.any(diag <= 0):
        raise NonPositiveDiagonal("thresholding needs a strictly positive diagonal")
    M = L_hat.shape[0]
    tau = alpha * diag.min()
    off_mask = ~np.eye(M, dtype=bool)
    for _ in range(max_halvings + 1):
        keep = (np.abs(L_hat) > tau) | ~off_mask
        i, j = np.nonzero(np.triu(keep, 1))
        if is_connected(M, zip(i.tolist(), j.tolist())):
            break
        tau /= 2
    else:
        log.warning("thresholded support still disconnected after %d halvings", max_halvings)
    return np.where(keep, L_hat, 0.0), float(tau)


def mmse_gain(L, sigma_theta, sigma2):
    L = np.asarray(L, dtype=float)
    S = np.asarray(sigma_theta, dtype=float)
    cov = L.T @ S @ L + sigma2 * np.eye(L.shape[0])
    return S @ L @ pinv(0.5 * (cov + cov.T))


def mmse_states(P, L, sigma_theta, sigma2):
    """Linear MMSE state estimate ``S L (L^T S L + s2 I)^+ p`` per column."""
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    if P.shape[0] != np.shape(L)[0] or np.shape(sigma_theta) != np.shape(L):
        raise ShapeMismatch(f"P {P.shape}, L {np.shape(L)}, sigma_theta {np.shape(sigma_theta)}")
    return mmse_gain(L, sigma_theta, sigma2) @ P


# -- pipeline ---------------------------------------------------------------


def recover_topology(cov_p, sigma_theta, method=TWO_PHASE, settings=None, alpha=None):
    """Topology and noise-variance stages of the pipeline from a covariance.

    Returns an :class:`EstimationResult` without state estimates.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    settings = settings or SolverSettings()
    cov_p = np.asarray(cov_p, dtype=float)
    M = cov_p.shape[0]
    sigma_theta = np.asarray(sigma_theta, dtype=float)
    if sigma_theta.shape != (M, M):
        raise ShapeMismatch(f"sigma_theta {sigma_theta.shape} for M={M}")
    lp = LaplacianPair.from_laplacian(np.zeros((M, M)))
    prior = dcmodel.StatePrior(sigma_theta)
    S_red = prior.sigma_theta_reduced
    cov_red = dcmodel.reduce_covariance(cov_p, lp)

    sigma2 = estimate_noise_variance(cov_p)
    sigma2_ml = sigma2
    shrinks = 0
    while True:
        try:
            L_pd = pd_mixing_estimate(cov_red, S_red, sigma2, lp)
            break
        except NotApproxPSD:
            if shrinks >= 50:
                raise
            sigma2 *= 0.99
            shrinks += 1

    diagnostics = {"sigma2_shrinks": shrinks, "sigma2_ml": sigma2_ml}
    if method == TWO_PHASE:
        L, info = closest_laplacian(expand_laplacian(L_pd), settings, return_info=True)
        L_red = reduce_laplacian(L)
        info["projection_residual"] = float(np.linalg.norm(L - expand_laplacian(L_pd)))
    else:
        try:
            L_red, info = augmented_lagrangian_recovery(
                cov_red, S_red, sigma2, lp, settings, W_init=np.linalg.inv(L_pd), return_info=True
            )
        except NoConvergence as exc:
            L_red, info = exc.result
        info["projection_residual"] = float("nan")
    diagnostics.update(info)
    diagnostics["final_residual"] = info["residual"]

    L_ml = expand_laplacian(L_red)
    if alpha is None:
        alpha = default_alpha(M)
    L_hat, tau = sparsify(L_ml, alpha)
    diagnostics["threshold_used"] = tau
    return EstimationResult(
        L_hat=L_hat,
        L_ml=L_ml,
        L_reduced_hat=L_red,
        sigma2_hat=float(sigma2),
        states_hat=None,
        method=method,
        diagnostics=diagnostics,
    )


def ml_best(ms, sigma_theta, method=TWO_PHASE, settings=None, alpha=None, center_data=True):
    """Blind joint estimation of topology, noise variance and states.

    Parameters
    ----------
    ms : MeasurementSet
        Active-power snapshots, M x N.
    sigma_theta : (M, M) array
        Known state covariance.
    method : {"two_phase", "augmented_lagrangian"}
    settings : SolverSettings, optional
    alpha : float, optional
        Threshold fraction in (0, 1); defaults to ``4/M``.
    center_data : bool
        Remove the per-bus sample mean first.

    Returns
    -------
    EstimationResult
    """
    M, N = ms.P.shape
    if N < M - 1:
        raise InsufficientSamples(f"need N >= M-1 = {M - 1} samples, got {N}")
    if N < 3 * M:
        warnings.warn(f"N={N} < 3M={3 * M}: the covariance estimate may be unstable", stacklevel=2)
    if center_data and not ms.centered:
        ms = dcmodel.center(ms)
    cov_p = ms.P @ ms.P.T / N
    result = recover_topology(0.5 * (cov_p + cov_p.T), sigma_theta, method, settings, alpha)
    result.states_hat = mmse_states(ms.P, result.L_hat, sigma_theta, result.sigma2_hat)
    return result
