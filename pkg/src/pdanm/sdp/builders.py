"""Builders for the trace-weighted semidefinite programs used by the
estimators, plus the optimizer extraction helper.

All programs share one Hermitian PSD block; estimation variants add one
norm-ball cone enforcing ||Y - H Omega||_F^2 <= eta.  Shapes follow the
effective-channel convention: H is (n_bs*n_ue, n_ris).
"""

import numpy as np

from ..linalg import kron
from .problem import (
    HermitianPlacement,
    MatrixPlacement,
    ProblemBuilder,
    ScalarPlacement,
    ToeplitzPlacement,
)

__all__ = [
    "default_eta",
    "build_pdan_value",
    "build_wpdan_value",
    "build_pdanm",
    "build_wpdanm",
    "build_an1d_value",
    "build_anm2d",
    "build_anm3d",
    "extract_pdanm",
    "SizeCapError",
    "ANM3D_SIZE_CAP",
]

ANM3D_SIZE_CAP = 256


class SizeCapError(ValueError):
    """The three-level program would exceed the configured size cap."""


def default_eta(n_bs, n_ue, b, noise_var):
    """Data-fit radius matched to the expected noise energy in Y."""
    m = n_bs * n_ue * b
    return (m + 2.0 * np.sqrt(m)) * noise_var


def _check_weight(w, m, name):
    w = np.asarray(w, dtype=complex)
    if w.shape != (m, m):
        raise ValueError(f"{name} must be {m}x{m}")
    if np.abs(w - w.conj().T).max() > 1e-10 * max(1.0, np.abs(w).max()):
        raise ValueError(f"{name} must be Hermitian")
    if np.linalg.eigvalsh(w)[0] <= 0:
        raise ValueError(f"{name} must be positive definite")
    return w


def _objective_from_weights(builder, cone, w_blocks):
    """c = 0.5 * A^T svec(blockdiag of weights); exact for Hermitian weights."""
    m = cone.m
    w_full = np.zeros((m, m), dtype=complex)
    for row, w in w_blocks:
        w_full[row:row + w.shape[0], row:row + w.shape[0]] = w
    c = np.zeros(builder.n)
    cone.adjoint(w_full, c)
    return 0.5 * c


def _const_cross_block(h, n_ris, m):
    """Constant PSD offset embedding data H and H^H off the diagonal."""
    const = np.zeros((m, m), dtype=complex)
    const[n_ris:, :n_ris] = h
    const[:n_ris, n_ris:] = h.conj().T
    return const


def _data_fit_cone(builder, h_var, y, omega, eta):
    """Norm-ball rows: s = (sqrt(eta), re/im of vec(Y - H Omega))."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    n_bu, n_ris = h_var.meta
    b_slots = omega.shape[1]
    if y.shape != (n_bu, b_slots) or omega.shape[0] != n_ris:
        raise ValueError("Y / Omega dimensions are inconsistent")
    kmat = kron(omega.T, np.eye(n_bu))            # vec(H Omega) = kmat vec(H)
    # permute from vec-order columns to the variable's row-major entry order
    i, j = np.divmod(np.arange(n_bu * n_ris), n_ris)
    d = -kmat[:, j * n_bu + i]
    dim = 1 + 2 * n_bu * b_slots
    a_mat = np.zeros((dim, builder.n))
    sl = h_var.sl
    a_mat[1::2, sl.start:sl.stop:2] = d.real
    a_mat[2::2, sl.start:sl.stop:2] = d.imag
    a_mat[1::2, sl.start + 1:sl.stop:2] = -d.imag
    a_mat[2::2, sl.start + 1:sl.stop:2] = d.real
    b_vec = np.zeros(dim)
    b_vec[0] = np.sqrt(eta)
    y_vec = y.reshape(-1, order="F")
    b_vec[1::2] = y_vec.real
    b_vec[2::2] = y_vec.imag
    builder.add_soc_cone(a_mat, b_vec)


def _identity_weights(n_bs, n_ue, n_ris):
    return np.eye(n_ris) / n_ris, np.eye(n_bs * n_ue) / (n_bs * n_ue)


def build_wpdan_value(h, n_bs, n_ue, w_r, w_bu):
    """Weighted norm-value program for a fixed channel matrix H."""
    h = np.asarray(h, dtype=complex)
    n_bu = n_bs * n_ue
    if h.ndim != 2 or h.shape[0] != n_bu:
        raise ValueError(f"H must have {n_bu} rows")
    n_ris = h.shape[1]
    w_r = _check_weight(w_r, n_ris, "w_r")
    w_bu = _check_weight(w_bu, n_bu, "w_bu")
    m = n_bu + n_ris
    builder = ProblemBuilder("wpdan-value")
    t_r = builder.toeplitz_var("t_r", (n_ris,))
    t_bu = builder.toeplitz_var("t_bu", (n_bs, n_ue))
    cone = builder.add_psd_cone(
        m,
        [ToeplitzPlacement(t_r, (n_ris,), 0),
         ToeplitzPlacement(t_bu, (n_bs, n_ue), n_ris)],
        const=_const_cross_block(h, n_ris, m),
    )
    c = _objective_from_weights(builder, cone, [(0, w_r), (n_ris, w_bu)])
    return builder.build(c)


def build_pdan_value(h, n_bs, n_ue):
    """Norm-value program: optimal value equals the partially decoupled
    atomic norm whenever the differential angles are well separated."""
    n_ris = np.asarray(h).shape[1]
    w_r, w_bu = _identity_weights(n_bs, n_ue, n_ris)
    prob = build_wpdan_value(h, n_bs, n_ue, w_r, w_bu)
    prob.name = "pdan-value"
    return prob


def build_wpdanm(y, omega, eta, n_bs, n_ue, w_r, w_bu):
    """Weighted estimation program with the data-fit ball."""
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    n_bu = n_bs * n_ue
    n_ris = omega.shape[0]
    w_r = _check_weight(w_r, n_ris, "w_r")
    w_bu = _check_weight(w_bu, n_bu, "w_bu")
    m = n_bu + n_ris
    builder = ProblemBuilder("wpdanm")
    t_r = builder.toeplitz_var("t_r", (n_ris,))
    t_bu = builder.toeplitz_var("t_bu", (n_bs, n_ue))
    h_var = builder.matrix_var("h", (n_bu, n_ris))
    cone = builder.add_psd_cone(
        m,
        [ToeplitzPlacement(t_r, (n_ris,), 0),
         ToeplitzPlacement(t_bu, (n_bs, n_ue), n_ris),
         MatrixPlacement.block(h_var, (n_bu, n_ris), n_ris, 0)],
    )
    _data_fit_cone(builder, h_var, y, omega, eta)
    c = _objective_from_weights(builder, cone, [(0, w_r), (n_ris, w_bu)])
    return builder.build(c)


def build_pdanm(y, omega, eta, n_bs, n_ue):
    """Estimation program with uniform weights (first reweighting iterate)."""
    w_r, w_bu = _identity_weights(n_bs, n_ue, np.asarray(omega).shape[0])
    prob = build_wpdanm(y, omega, eta, n_bs, n_ue, w_r, w_bu)
    prob.name = "pdanm"
    return prob


def build_an1d_value(h, n_bs, n_ue):
    """One-dimensional relaxation: the paired diagonal block is free, so
    the optimal value lower-bounds the partially decoupled one."""
    h = np.asarray(h, dtype=complex)
    n_bu = n_bs * n_ue
    n_ris = h.shape[1]
    m = n_bu + n_ris
    builder = ProblemBuilder("an1d-value")
    t_r = builder.toeplitz_var("t_r", (n_ris,))
    q = builder.hermitian_var("q", n_bu)
    cone = builder.add_psd_cone(
        m,
        [ToeplitzPlacement(t_r, (n_ris,), 0), HermitianPlacement(q, n_bu, n_ris)],
        const=_const_cross_block(h, n_ris, m),
    )
    c = _objective_from_weights(
        builder, cone,
        [(0, np.eye(n_ris) / n_ris), (n_ris, np.eye(n_bu) / n_bu)],
    )
    return builder.build(c)


def build_anm2d(y, omega, eta, n_bs, n_ue):
    """Two-dimensional baseline: Toeplitz structure only on the BS/UE side."""
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    n_bu = n_bs * n_ue
    n_ris = omega.shape[0]
    m = n_bu + n_ris
    builder = ProblemBuilder("anm2d")
    t_bu = builder.toeplitz_var("t_bu", (n_bs, n_ue))
    q = builder.hermitian_var("q", n_ris)
    h_var = builder.matrix_var("h", (n_bu, n_ris))
    cone = builder.add_psd_cone(
        m,
        [ToeplitzPlacement(t_bu, (n_bs, n_ue), 0),
         HermitianPlacement(q, n_ris, n_bu),
         MatrixPlacement.block(h_var, (n_bu, n_ris), 0, n_bu)],
    )
    _data_fit_cone(builder, h_var, y, omega, eta)
    c = _objective_from_weights(
        builder, cone, [(0, np.eye(n_bu) / n_bu), (n_bu, np.eye(n_ris))]
    )
    return builder.build(c)


def build_anm3d(y, omega, eta, n_bs, n_ue, size_cap=ANM3D_SIZE_CAP):
    """Three-dimensional baseline on vec(H); PSD block is 1 + n_bs*n_ue*n_ris."""
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    n_bu = n_bs * n_ue
    n_ris = omega.shape[0]
    n3 = n_bu * n_ris
    if n3 > size_cap:
        raise SizeCapError(f"n_bs*n_ue*n_ris = {n3} exceeds size cap {size_cap}")
    builder = ProblemBuilder("anm3d")
    t0 = builder.scalar_var("t")
    v3 = builder.toeplitz_var("v3", (n_ris, n_bs, n_ue))
    h_var = builder.matrix_var("h", (n_bu, n_ris))
    cone = builder.add_psd_cone(
        1 + n3,
        [ScalarPlacement(t0, 0),
         ToeplitzPlacement(v3, (n_ris, n_bs, n_ue), 1),
         MatrixPlacement.vectorized_column(h_var, (n_bu, n_ris), 1, 0)],
    )
    _data_fit_cone(builder, h_var, y, omega, eta)
    c = _objective_from_weights(
        builder, cone, [(0, np.eye(1)), (1, np.eye(n3) / n3)]
    )
    return builder.build(c)


def extract_pdanm(sol):
    """Pull (t_r generator, t_bu generator, H) out of a solved program."""
    if sol.status == "numerical-failure":
        raise ValueError("solver reported numerical failure; no optimizer available")
    try:
        return sol.primal["t_r"], sol.primal["t_bu"], sol.primal["h"]
    except KeyError as exc:
        raise KeyError(f"solution is missing variable block {exc}") from exc
