"""Dense symmetric linear-algebra primitives.

Everything here is a thin, tolerance-checked layer over LAPACK (through
numpy): eigendecomposition with deterministic ordering and signs, PSD
square roots with eigenvalue clipping, and a rank-truncated
pseudo-inverse.
"""

from dataclasses import dataclass

import numpy as np

from .errors import NonFinite, NonSymmetric, NotApproxPSD

SYMMETRY_TOL = 1e-9
CLIP_TOL = 1e-8
RANK_TOL = 1e-10


@dataclass(frozen=True)
class SymEig:
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order.

    Column ``i`` of ``eigenvectors`` pairs with ``eigenvalues[i]``.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self):
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def _check_finite(A):
    if not np.all(np.isfinite(A)):
        raise NonFinite("matrix has non-finite entries")


def check_symmetric(S, tol=SYMMETRY_TOL):
    """Return ``S`` as a float array after checking relative asymmetry."""
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NonSymmetric(f"expected a square matrix, got shape {S.shape}")
    _check_finite(S)
    scale = max(1.0, np.abs(S).max(initial=0.0))
    asym = np.abs(S - S.T).max(initial=0.0)
    if asym > tol * scale:
        raise NonSymmetric(f"relative asymmetry {asym / scale:.3e} exceeds {tol:.1e}")
    return S


def sym_eig(S):
    """Eigendecomposition of a symmetric matrix.

    Eigenvalues are sorted descending. Each eigenvector is sign-normalised
    so that its first entry with magnitude above 1e-12 is positive, which
    makes the output reproducible across LAPACK builds.

    Raises
    ------
    NonSymmetric, NonFinite
    """
    S = check_symmetric(S)
    S = 0.5 * (S + S.T)
    w, V = np.linalg.eigh(S)
    w = w[::-1].copy()
    V = V[:, ::-1].copy()
    for i in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, i]) > 1e-12)
        if nz.size and V[nz[0], i] < 0:
            V[:, i] = -V[:, i]
    return SymEig(w, V)


def psd_sqrt(S, clip_tol=CLIP_TOL):
    """Symmetric PSD square root with clipping of slightly negative eigenvalues.

    Eigenvalues in ``[-clip_tol * ||S||_2, 0)`` are set to zero. Anything
    more negative means the input is not a covariance-like matrix and
    :class:`NotApproxPSD` is raised.
    """
    eig = sym_eig(S)
    lam = eig.eigenvalues
    norm2 = np.abs(lam).max(initial=0.0)
    if lam.size and lam[-1] < -clip_tol * norm2:
        raise NotApproxPSD(
            f"smallest eigenvalue {lam[-1]:.3e} below -{clip_tol:.1e} * ||S||_2 = {-clip_tol * norm2:.3e}"
        )
    root = np.sqrt(np.clip(lam, 0.0, None))
    V = eig.eigenvectors
    B = (V * root) @ V.T
    return 0.5 * (B + B.T)


def psd_inv_sqrt(S):
    """Inverse of the PSD square root of a positive-definite matrix."""
    eig = sym_eig(S)
    lam = eig.eigenvalues
    if lam[-1] <= 0:
        raise NotApproxPSD(f"matrix is not positive definite (lambda_min={lam[-1]:.3e})")
    V = eig.eigenvectors
    B = (V / np.sqrt(lam)) @ V.T
    return 0.5 * (B + B.T)


def pinv(A, rank_tol=RANK_TOL):
    """Moore-Penrose pseudo-inverse.

    Singular values below ``rank_tol * sigma_max`` are treated as zero.
    """
    A = np.asarray(A, dtype=float)
    _check_finite(A)
    if A.ndim == 1:
        A = A[:, None]
    return np.linalg.pinv(A, rcond=rank_tol)
