"""Fisher information and Cramer-Rao bound for ``[vech(L~), sigma^2]``.

The reduced covariance of the measurements is
``C = L~ S~ L~ + s2 U+ U+^T``; the bound is the pseudo-inverse of the
Gaussian FIM of ``C`` with respect to the lower triangle of ``L~`` (taken
column by column) and the noise variance.
"""

from dataclasses import dataclass

import numpy as np

from .errors import SingularCovariance
from .numerics import RANK_TOL, pinv

KRON_MAX_M = 20


def vech_indices(n):
    """Index map ``[(k, l), ...]`` of the vech ordering for an ``n x n`` matrix.

    The lower triangle is stacked column by column, so the order is
    ``(0,0), (1,0), ..., (n-1,0), (1,1), (2,1), ...`` (zero-based, row first).
    """
    return [(k, l) for l in range(n) for k in range(l, n)]


def _vech_arrays(n):
    idx = vech_indices(n)
    rows = np.array([k for k, _ in idx], dtype=int)
    cols = np.array([l for _, l in idx], dtype=int)
    return rows, cols


def vech(A):
    A = np.asarray(A, dtype=float)
    rows, cols = _vech_arrays(A.shape[0])
    return A[rows, cols]


def unvech(v):
    """Symmetric matrix whose vech is ``v``."""
    v = np.asarray(v, dtype=float)
    n = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    if n * (n + 1) // 2 != v.size:
        raise ValueError(f"length {v.size} is not a triangular number")
    rows, cols = _vech_arrays(n)
    A = np.zeros((n, n))
    A[rows, cols] = v
    A[cols, rows] = v
    return A


@dataclass(frozen=True)
class CrbReport:
    """FIM, its pseudo-inverse and the block bounds.

    ``vech_order[i]`` is the zero-based ``(k, l)`` entry of ``L~`` that
    parameter ``i`` stands for; the last parameter is the noise variance.
    """

    J: np.ndarray
    B_CRB: np.ndarray
    vech_order: list
    topology_bound_trace: float
    noise_var_bound: float

    @property
    def topology_bound(self):
        return self.B_CRB[:-1, :-1]

    def as_dict(self):
        return {
            "J": self.J.tolist(),
            "B_CRB": self.B_CRB.tolist(),
            "vech_order": [list(p) for p in self.vech_order],
            "topology_bound_trace": self.topology_bound_trace,
            "noise_var_bound": self.noise_var_bound,
        }


def reduced_covariance(L_red, sigma_theta_red, sigma2, lp):
    L_red = np.atleast_2d(np.asarray(L_red, dtype=float))
    S = np.atleast_2d(np.asarray(sigma_theta_red, dtype=float))
    C = L_red @ S @ L_red + sigma2 * lp.noise_shape
    return 0.5 * (C + C.T)


def _inv_cov(C):
    try:
        C_inv = np.linalg.inv(C)
    except np.linalg.LinAlgError:
        raise SingularCovariance("model covariance is singular") from None
    if not np.all(np.isfinite(C_inv)) or np.linalg.cond(C) > 1e14:
        raise SingularCovariance(f"model covariance is ill-conditioned (cond ~ {np.linalg.cond(C):.3e})")
    return 0.5 * (C_inv + C_inv.T)


def derivative_matrices(L_red, sigma_theta_red, lp):
    """Closed-form ``dC/dalpha_i`` for every parameter, as an array ``(d, n, n)``.

    For the entry ``(k, l)`` this is
    ``(1 - delta_kl / 2) (E S L + L S E)`` with ``E = E_kl + E_lk``; the
    last slice is ``U+ U+^T``.
    """
    L_red = np.atleast_2d(np.asarray(L_red, dtype=float))
    S = np.atleast_2d(np.asarray(sigma_theta_red, dtype=float))
    n = L_red.shape[0]
    SL = S @ L_red
    idx = vech_indices(n)
    out = np.empty((len(idx) + 1, n, n))
    for i, (k, l) in enumerate(idx):
        # E @ SL has rows k and l taken from SL (swapped)
        ESL = np.zeros((n, n))
        ESL[k] += SL[l]
        ESL[l] += SL[k]
        dC = ESL + ESL.T
        if k == l:
            dC *= 0.5
        out[i] = dC
    out[-1] = lp.noise_shape
    return out


def psi_matrix(L_red, sigma_theta_red, lp):
    """``Psi`` with one column ``vec(dC/dalpha_i)`` per parameter."""
    D = derivative_matrices(L_red, sigma_theta_red, lp)
    # vec is column-major; the slices are symmetric so a plain reshape works
    return D.reshape(D.shape[0], -1).T.copy()


def fim(L_red, sigma_theta_red, sigma2, N, lp):
    """FIM ``J = (N/2) Psi^T (C^-1 kron C^-1) Psi``.

    The Kronecker weight is formed explicitly only for ``M <= 20``; larger
    problems use ``vec(A)^T (C^-1 kron C^-1) vec(B) = Tr(C^-1 A C^-1 B)``
    one parameter at a time.

    Raises
    ------
    SingularCovariance
    """
    C_inv = _inv_cov(reduced_covariance(L_red, sigma_theta_red, sigma2, lp))
    Psi = psi_matrix(L_red, sigma_theta_red, lp)
    if lp.M <= KRON_MAX_M:
        Q = np.kron(C_inv, C_inv)
        J = Psi.T @ Q @ Psi
    else:
        n = C_inv.shape[0]
        QPsi = np.empty_like(Psi)
        for i in range(Psi.shape[1]):
            A = Psi[:, i].reshape(n, n, order="F")
            QPsi[:, i] = (C_inv @ A @ C_inv).reshape(-1, order="F")
        J = Psi.T @ QPsi
    J = 0.5 * N * J
    return 0.5 * (J + J.T)


def fim_entrywise(L_red, sigma_theta_red, sigma2, N, lp):
    """Same FIM assembled entry by entry as ``(N/2) Tr(C^-1 dC_i C^-1 dC_j)``."""
    C_inv = _inv_cov(reduced_covariance(L_red, sigma_theta_red, sigma2, lp))
    D = derivative_matrices(L_red, sigma_theta_red, lp)
    W = [C_inv @ Di for Di in D]
    d = len(W)
    J = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            J[i, j] = J[j, i] = 0.5 * N * np.sum(W[i] * W[j].T)
    return J


def fim_numeric_oracle(L_red, sigma_theta_red, sigma2, N, lp, h=1e-6):
    """FIM with ``dC/dalpha`` from central differences of the covariance.

    Each vech parameter perturbs the symmetric pair ``(k, l), (l, k)`` of
    ``L~`` together. Only meant for validating :func:`fim`.
    """
    if not 1e-7 <= h <= 1e-4:
        raise ValueError("step h must lie in [1e-7, 1e-4]")
    L_red = np.atleast_2d(np.asarray(L_red, dtype=float))
    C0 = reduced_covariance(L_red, sigma_theta_red, sigma2, lp)
    C_inv = _inv_cov(C0)
    n = L_red.shape[0]
    scale_L = max(1.0, np.abs(L_red).max())
    derivs = []
    for k, l in vech_indices(n):
        step = h * scale_L
        E = np.zeros((n, n))
        E[k, l] = E[l, k] = step
        Cp = reduced_covariance(L_red + E, sigma_theta_red, sigma2, lp)
        Cm = reduced_covariance(L_red - E, sigma_theta_red, sigma2, lp)
        derivs.append((Cp - Cm) / (2 * step))
    step = h * max(1.0, abs(sigma2))
    Cp = reduced_covariance(L_red, sigma_theta_red, sigma2 + step, lp)
    Cm = reduced_covariance(L_red, sigma_theta_red, sigma2 - step, lp)
    derivs.append((Cp - Cm) / (2 * step))
    d = len(derivs)
    J = np.empty((d, d))
    for i in range(d):
        Ai = C_inv @ derivs[i]
        for j in range(i, d):
            J[i, j] = J[j, i] = 0.5 * N * np.trace(Ai @ C_inv @ derivs[j])
    return J


def crb_bound(J, N=None, rank_tol=RANK_TOL):
    """Bound ``B = J^+`` with its topology-block trace and noise-variance entry.

    ``J`` must already carry the ``N/2`` factor; ``N`` is accepted for
    symmetry with :func:`fim` and is not used.
    """
    J = np.asarray(J, dtype=float)
    J = 0.5 * (J + J.T)
    B = pinv(J, rank_tol=rank_tol)
    B = 0.5 * (B + B.T)
    d = J.shape[0]
    n = int(round((np.sqrt(8 * (d - 1) + 1) - 1) / 2))
    return CrbReport(
        J=J,
        B_CRB=B,
        vech_order=vech_indices(n),
        topology_bound_trace=float(np.trace(B[:-1, :-1])),
        noise_var_bound=float(B[-1, -1]),
    )


def crb_report(L_red, sigma_theta_red, sigma2, N, lp):
    """Convenience wrapper: :func:`fim` followed by :func:`crb_bound`."""
    return crb_bound(fim(L_red, sigma_theta_red, sigma2, N, lp), N)
