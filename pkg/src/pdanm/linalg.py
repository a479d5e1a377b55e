"""Dense complex linear algebra shared by every other module.

Thin, contract-checked wrappers around LAPACK (through numpy/scipy).
All routines are pure functions on ndarrays and safe to call from
multiple threads.
"""

import numpy as np
import scipy.linalg

__all__ = [
    "kron",
    "khatri_rao",
    "hermitian_eig",
    "polynomial_roots",
    "solve_hermitian",
    "vec",
    "require_hermitian",
]

HERMITIAN_RTOL = 1e-12


def _as_matrix(a):
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d array, got shape {a.shape}")
    return a


def require_hermitian(a, rtol=HERMITIAN_RTOL, name="matrix"):
    """Return `a` if max|A - A^H| <= rtol * max|A|, else raise ValueError."""
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} is not square: {a.shape}")
    scale = np.abs(a).max() if a.size else 0.0
    dev = np.abs(a - a.conj().T).max() if a.size else 0.0
    if dev > rtol * max(scale, 1e-300):
        raise ValueError(f"{name} is not Hermitian (deviation {dev:.3e}, scale {scale:.3e})")
    return a


def kron(a, b):
    """Kronecker product; block (i, j) of the result equals a[i, j] * b."""
    return np.kron(np.asarray(a), np.asarray(b))


def khatri_rao(a, b):
    """Column-wise Kronecker product of two matrices with equal column counts."""
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column-count mismatch: {a.shape[1]} vs {b.shape[1]}")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def vec(a):
    """Column-stacking vectorization, so vec(A X B^T) = (B kron A) vec(X)."""
    return _as_matrix(a).reshape(-1, order="F")


def hermitian_eig(a):
    """Eigendecomposition of a Hermitian matrix.

    Returns (w, v) with eigenvalues w sorted in descending order and the
    columns of v the matching orthonormal eigenvectors, A v = v diag(w).
    """
    a = require_hermitian(a)
    w, v = np.linalg.eigh(a)
    return w[::-1], v[:, ::-1]


def polynomial_roots(coeffs):
    """All roots of a polynomial given coefficients from highest degree down.

    Roots are computed as companion-matrix eigenvalues. Leading zero
    coefficients are dropped; an identically zero polynomial is rejected.
    """
    c = np.atleast_1d(np.asarray(coeffs))
    nz = np.flatnonzero(np.abs(c) > 0)
    if nz.size == 0:
        raise ValueError("zero polynomial has no well-defined roots")
    return np.roots(c[nz[0]:])


def solve_hermitian(a, b):
    """Solve A X = B for Hermitian positive definite A via Cholesky."""
    a = require_hermitian(a)
    b = np.asarray(b)
    try:
        ch = scipy.linalg.cho_factor(a, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"matrix is not positive definite: {exc}") from exc
    return scipy.linalg.cho_solve(ch, b, check_finite=False)
