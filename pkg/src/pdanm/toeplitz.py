"""Multi-level Toeplitz matrices: realization, adjoint, PSD utilities, and
the one-level Vandermonde decomposition via root-MUSIC.

A D-level Toeplitz matrix of level sizes [N_1, ..., N_D] is parameterized
by a generating tensor of shape (2*N_1-1, ..., 2*N_D-1); entry
M[(i_1..i_D), (j_1..j_D)] = data[N_1-1+j_1-i_1, ..., N_D-1+j_D-i_D] with
row/column multi-indices raveled in C order (level 1 slowest).
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .linalg import hermitian_eig, polynomial_roots, require_hermitian

__all__ = [
    "MultiLevelToeplitzGenerator",
    "realize",
    "adjoint",
    "hermitian_generator",
    "generator_is_hermitian",
    "psd_floor",
    "vandermonde_decompose_1level",
    "FullRankToeplitzError",
    "NegativeWeightError",
]


class FullRankToeplitzError(ValueError):
    """The matrix is full rank, so no low-rank Vandermonde decomposition exists."""


class NegativeWeightError(ValueError):
    """Least-squares weight recovery produced a genuinely negative weight."""


@dataclass(frozen=True)
class MultiLevelToeplitzGenerator:
    """Level sizes plus the generating tensor of a multi-level Toeplitz matrix."""

    dims: tuple
    data: np.ndarray

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        if not dims or any(n < 1 for n in dims):
            raise ValueError(f"level sizes must be positive, got {dims}")
        data = np.asarray(self.data, dtype=complex)
        expect = tuple(2 * n - 1 for n in dims)
        if data.shape != expect:
            raise ValueError(f"generator shape {data.shape} does not match dims {dims} (want {expect})")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", data)

    @property
    def size(self):
        return int(np.prod(self.dims))


@lru_cache(maxsize=64)
def _offset_index(dims):
    """Per-level generator indices (D, P, P) with P = prod(dims)."""
    dims = tuple(dims)
    p = int(np.prod(dims))
    multi = np.indices(dims).reshape(len(dims), p)
    off = tuple(
        multi[d][None, :] - multi[d][:, None] + (dims[d] - 1) for d in range(len(dims))
    )
    return off


def realize(gen):
    """Materialize the prod(dims) x prod(dims) matrix of a generator."""
    return gen.data[_offset_index(gen.dims)]


def adjoint(m, dims):
    """Adjoint of `realize`: sums of `m` along every multi-level diagonal.

    Satisfies <realize(g), M> = <g, adjoint(M, dims)> for all generators g,
    with <A, B> = sum A * conj(B).
    """
    dims = tuple(int(n) for n in dims)
    m = np.asarray(m, dtype=complex)
    p = int(np.prod(dims))
    if m.shape != (p, p):
        raise ValueError(f"matrix shape {m.shape} does not match dims {dims} (want {(p, p)})")
    out = np.zeros(tuple(2 * n - 1 for n in dims), dtype=complex)
    np.add.at(out, _offset_index(dims), m)
    return MultiLevelToeplitzGenerator(dims, out)


def _mirror(dims):
    """Index arrays reflecting each generator axis about its center."""
    return tuple(np.arange(2 * n - 2, -1, -1) for n in dims)


def generator_is_hermitian(gen, rtol=1e-12):
    data = gen.data
    mirrored = data[np.ix_(*_mirror(gen.dims))]
    scale = max(np.abs(data).max(), 1e-300)
    return np.abs(data - mirrored.conj()).max() <= rtol * scale


def hermitian_generator(dims, data):
    """Build a generator, enforcing the conjugate symmetry a Hermitian
    realization requires (data[k] = conj(data[mirror(k)]))."""
    gen = MultiLevelToeplitzGenerator(tuple(dims), data)
    sym = 0.5 * (gen.data + gen.data[np.ix_(*_mirror(gen.dims))].conj())
    return MultiLevelToeplitzGenerator(gen.dims, sym)


def psd_floor(m, floor_tol=1e-8):
    """Clip tiny negative eigenvalues of a Hermitian matrix to zero.

    Raises if an eigenvalue is below -floor_tol * lambda_max, which signals
    genuinely infeasible input rather than roundoff.
    """
    m = require_hermitian(m)
    w, v = hermitian_eig(m)
    lam_max = max(w[0], 0.0)
    if w[-1] < -floor_tol * max(lam_max, 1e-300):
        raise ValueError(
            f"eigenvalue {w[-1]:.3e} below -floor_tol*lambda_max = {-floor_tol * lam_max:.3e}"
        )
    if w[-1] >= 0:
        return m
    w = np.clip(w, 0.0, None)
    out = (v * w) @ v.conj().T
    return 0.5 * (out + out.conj().T)


def _steering_from_cos(n, cosines):
    grid = np.arange(n)[:, None] * np.asarray(cosines)[None, :]
    return np.exp(1j * np.pi * grid)


def _polish_cosines(cosines, diag_sums, n, steps=3):
    """Newton refinement of each cosine on the derivative of the spectrum
    f(c) = sum_k d_k exp(i pi k c).  On exact data f has double roots on
    the unit circle, which companion-matrix root finding only locates to
    about sqrt(eps); f' has them as simple roots, so one or two Newton
    steps restore full precision."""
    k = np.arange(-(n - 1), n)
    d1 = diag_sums * (1j * np.pi * k)
    d2 = d1 * (1j * np.pi * k)
    out = np.array(cosines, dtype=float)
    for idx, c in enumerate(out):
        for _ in range(steps):
            z = np.exp(1j * np.pi * k * c)
            g = (d1 @ z).real
            gp = (d2 @ z).real
            if gp == 0.0:
                break
            step = g / gp
            if not np.isfinite(step) or abs(step) > 1.0 / n:
                break
            c = c - step
        out[idx] = c
    return out


def _toeplitz_deviation(t_mat, n):
    gen = adjoint(t_mat, (n,)).data
    counts = n - np.abs(np.arange(2 * n - 1) - (n - 1))
    avg = MultiLevelToeplitzGenerator((n,), gen / counts)
    return np.abs(realize(avg) - t_mat).max()


def vandermonde_decompose_1level(t_mat, rank_tol=1e-6, recover_weights=True):
    """Decompose a PSD Toeplitz matrix as sum_l p_l a(psi_l) a(psi_l)^H.

    Angle recovery is root-MUSIC on the noise subspace: the polynomial
    built from the diagonal sums of E_n E_n^H has conjugate-reciprocal
    root pairs; the rank(T) roots inside the unit disc closest to the
    unit circle give cos(psi) = arg(z)/pi. Weights follow from least
    squares against the recovered steering outer products, with tiny
    negative values clipped; a genuinely negative weight raises, which
    callers that only need the angles avoid via recover_weights=False
    (nearly coincident angles make the fit indefinite on noisy input).

    Returns (psi, p, rank) with psi ascending.
    """
    t_mat = require_hermitian(t_mat, name="t_mat")
    n = t_mat.shape[0]
    scale = max(np.abs(t_mat).max(), 0.0)
    if scale > 0 and _toeplitz_deviation(t_mat, n) > 1e-8 * scale:
        raise ValueError("matrix is not Toeplitz within tolerance")

    w, v = hermitian_eig(t_mat)
    lam_max = max(w[0], 0.0)
    if lam_max <= 0.0:
        return np.zeros(0), np.zeros(0), 0
    if w[-1] < -rank_tol * lam_max:
        raise ValueError(f"matrix is not PSD: min eigenvalue {w[-1]:.3e}")
    rank = int(np.count_nonzero(w > rank_tol * lam_max))
    if rank == 0:
        return np.zeros(0), np.zeros(0), 0
    if rank >= n:
        raise FullRankToeplitzError(
            f"rank {rank} equals matrix size {n}; no Vandermonde decomposition"
        )

    noise = v[:, rank:]
    c_mat = noise @ noise.conj().T
    diag_sums = np.array([np.trace(c_mat, offset=k) for k in range(-(n - 1), n)])
    coeffs = diag_sums[::-1]
    roots = polynomial_roots(coeffs)

    inside = roots[np.abs(roots) <= 1.0]
    if inside.size < rank:  # roots split about |z|=1; fall back to closest overall
        inside = roots
    order = np.argsort(np.abs(np.abs(inside) - 1.0), kind="stable")
    picked = inside[order[:rank]]
    cosines = np.clip(np.angle(picked) / np.pi, -1.0, 1.0)
    cosines = _polish_cosines(cosines, diag_sums, n)
    psi = np.sort(np.arccos(np.clip(cosines, -1.0, 1.0)))
    cosines = np.cos(psi)

    if not recover_weights:
        return psi, np.full(rank, np.nan), rank
    a_mat = _steering_from_cos(n, cosines)
    gram = np.abs(a_mat.conj().T @ a_mat) ** 2
    rhs = np.einsum("il,ij,jl->l", a_mat.conj(), t_mat, a_mat).real
    p, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
    neg_tol = 1e-8 * max(lam_max, 1.0)
    if p.min() < -neg_tol:
        raise NegativeWeightError(f"negative weight {p.min():.3e} beyond tolerance")
    p = np.clip(p, 0.0, None)
    return psi, p, rank
