"""Shared numerical kernels: EVD, least squares, tail functions, complex Gaussians.

Everything here is a thin, contract-checked wrapper over numpy/scipy so the
rest of the package can rely on one consistent set of conventions
(eigenvalues sorted descending, column-major vectorisation, circularly
symmetric complex noise).
"""

from __future__ import annotations

import numpy as np
from scipy import special

from .exceptions import ContractViolation, DomainError, SingularSystemError

# Relative tolerance used to decide whether a matrix is "Hermitian enough".
_HERM_RTOL = 1e-10

# Condition-number ceiling before a least-squares system is declared singular.
_COND_LIMIT = 1e12


def hermitian_evd(H):
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending.

    Returns ``(w, U)`` with ``H = U @ diag(w) @ U^H``, ``w`` real and sorted
    from largest to smallest, and the columns of ``U`` orthonormal.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ContractViolation(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.linalg.norm(H)))
    if np.linalg.norm(H - H.conj().T) > _HERM_RTOL * scale:
        raise ContractViolation("matrix is not Hermitian within tolerance")
    w, U = np.linalg.eigh(H)
    return w[::-1].copy(), U[:, ::-1].copy()


def ls_solve(U, y):
    """Least-squares solution of ``U m = y`` for a tall matrix ``U``.

    Solves via SVD and refuses systems whose condition number exceeds 1e12,
    which in the detector means two identical signatures were collected.
    """
    U = np.asarray(U)
    y = np.asarray(y)
    if U.ndim != 2:
        raise ContractViolation(f"expected a 2-D system matrix, got shape {U.shape}")
    m, k = U.shape
    if m < k:
        raise ContractViolation(f"system is underdetermined: {m} rows < {k} columns")
    if y.shape[0] != m:
        raise ContractViolation("right-hand side length does not match system rows")
    sv = np.linalg.svd(U, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] == 0.0 or sv[0] / sv[-1] > _COND_LIMIT:
        raise SingularSystemError("system matrix is rank deficient")
    coef, _, _, _ = np.linalg.lstsq(U, y, rcond=None)
    return coef


def qfunc(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x). Vectorised."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * special.erfc(x / np.sqrt(2.0))
    return out if out.ndim else float(out)


def chi2_cdf(x, dof):
    """CDF of a chi-square random variable with an even number of dofs.

    Implemented through the regularised lower incomplete gamma function.
    """
    if dof < 2 or dof % 2 != 0:
        raise DomainError(f"dof must be an even integer >= 2, got {dof}")
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise DomainError("chi-square argument must be nonnegative")
    out = special.gammainc(dof / 2.0, x / 2.0)
    return out if out.ndim else float(out)


def sample_cn(variance, rng, size=None):
    """Draw circularly symmetric complex Gaussian samples CN(0, variance).

    Real and imaginary parts are independent N(0, variance/2).  ``size=None``
    returns a scalar.
    """
    if variance < 0:
        raise DomainError(f"variance must be nonnegative, got {variance}")
    if variance == 0.0:
        return 0j if size is None else np.zeros(size, dtype=complex)
    scale = np.sqrt(variance / 2.0)
    re = rng.normal(0.0, scale, size)
    im = rng.normal(0.0, scale, size)
    return re + 1j * im


def vec(A):
    """Column-major (stack the columns) vectorisation of a 2-D array."""
    return np.asarray(A).reshape(-1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape(rows, cols, order="F")
