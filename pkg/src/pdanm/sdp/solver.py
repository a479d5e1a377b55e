"""Primal-dual path-following interior-point solver over Hermitian PSD
cones and second-order (norm-ball) cones.

The method is the standard Nesterov-Todd scaled Mehrotra predictor-
corrector, infeasible start, with the search direction obtained from
dense normal equations:

    A^T (W^T W)^{-1} A  dx = rhs,

assembled per cone by the structured routines in ``gram``.  Everything is
deterministic: solving the same problem twice produces a bit-identical
iterate trajectory.
"""

import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from .gram import psd_gram, soc_gram_terms
from .problem import ConicSolution, SolverOptions

__all__ = ["solve"]

_STALL_LIMIT = 3
_MIN_STEP = 1e-10


def _herm(a):
    return 0.5 * (a + a.conj().T)


def _factor_psd(s):
    """Cholesky factor of a (nearly) positive definite Hermitian matrix,
    with an eigenvalue-clipped fallback for late-iteration roundoff."""
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(_herm(s))
        floor = max(w.max(), 0.0) * 1e-14 + 1e-300
        return v * np.sqrt(np.clip(w, floor, None))


@dataclass
class _PSDScaling:
    r: np.ndarray
    r_inv: np.ndarray
    g: np.ndarray
    lam: np.ndarray
    ls_inv: np.ndarray
    lz_inv: np.ndarray

    def w_inv(self, d):
        return self.r_inv.conj().T @ d @ self.r_inv

    def w_inv_t(self, d):
        return self.r_inv @ d @ self.r_inv.conj().T

    def w_t(self, d):
        return self.r.conj().T @ d @ self.r


def _psd_scaling(s, z):
    ls = _factor_psd(s)
    lz = _factor_psd(z)
    u, sig, vh = np.linalg.svd(lz.conj().T @ ls)
    if sig[-1] <= 0:
        raise np.linalg.LinAlgError("scaling breakdown: singular iterate")
    isq = 1.0 / np.sqrt(sig)
    r = ls @ (vh.conj().T * isq[None, :])
    r_inv = (u.conj().T * isq[:, None]) @ lz.conj().T
    g = r_inv.conj().T @ r_inv
    return _PSDScaling(r, r_inv, _herm(g), sig,
                       np.linalg.inv(ls), np.linalg.inv(lz))


def _psd_max_step(f_inv, d):
    m = f_inv @ d @ f_inv.conj().T
    lam_min = np.linalg.eigvalsh(_herm(m))[0]
    if lam_min >= -1e-16:
        return np.inf
    return 1.0 / (-lam_min)


def _lam_divide_psd(lam, num):
    return 2.0 * num / (lam[:, None] + lam[None, :])


@dataclass
class _SOCScaling:
    beta: float
    v: np.ndarray
    lam: np.ndarray

    def _h(self, vv, u):
        # (2 vv vv^T - J) u  with J = diag(1, -I)
        out = u.copy()
        out[0] = -out[0]
        return 2.0 * vv * (vv @ u) + out

    def w(self, u):
        return self.beta * self._h(self.v, u)

    def w_inv(self, u):
        wv = self.v.copy()
        wv[1:] = -wv[1:]
        return self._h(wv, u) / self.beta


def _soc_residual(u):
    return u[0] * u[0] - u[1:] @ u[1:]


def _soc_scaling(s, z):
    rs, rz = _soc_residual(s), _soc_residual(z)
    if rs <= 0 or rz <= 0 or s[0] <= 0 or z[0] <= 0:
        raise np.linalg.LinAlgError("scaling breakdown: iterate left the cone")
    a, b = np.sqrt(rs), np.sqrt(rz)
    st, zt = s / a, z / b
    gamma = np.sqrt((1.0 + st @ zt) / 2.0)
    jz = zt.copy()
    jz[1:] = -jz[1:]
    q = (st + jz) / (2.0 * gamma)
    # reflector normalization so that W z = W^{-1} s holds exactly
    q[0] += 1.0
    v = q / np.sqrt(2.0 * q[0])
    sc = _SOCScaling(float(np.sqrt(a / b)), v, np.zeros(1))
    sc.lam = sc.w(z)
    return sc


def _soc_max_step(u, du):
    a = du[0] * du[0] - du[1:] @ du[1:]
    b = u[0] * du[0] - u[1:] @ du[1:]
    c = _soc_residual(u)
    roots = []
    if abs(a) < 1e-300:
        if b < 0:
            roots.append(-c / (2.0 * b))
    else:
        disc = b * b - a * c
        if disc >= 0:
            sq = np.sqrt(disc)
            for r in ((-b - sq) / a, (-b + sq) / a):
                if r > 0:
                    roots.append(r)
    return min(roots) if roots else np.inf


def _soc_prod(u, v):
    out = np.empty_like(u)
    out[0] = u @ v
    out[1:] = u[0] * v[1:] + v[0] * u[1:]
    return out


def _soc_divide(lam, d):
    res = _soc_residual(lam)
    out = np.empty_like(d)
    out[0] = (lam[0] * d[0] - lam[1:] @ d[1:]) / res
    out[1:] = (d[1:] - out[0] * lam[1:]) / lam[0]
    return out


_blas_limiter = None


def _pin_blas_single_threaded():
    # The matrices here are small: threaded BLAS only adds dispatch thrash,
    # and flipping the global thread count per call would race when trials
    # run concurrently.  Pin once for the process; callers parallelize at
    # the trial level instead.
    global _blas_limiter
    if _blas_limiter is None:
        _blas_limiter = threadpool_limits(limits=1)


def solve(problem, opts=None):
    """Solve a conic problem; returns a ConicSolution.

    Status is ``optimal`` once relative primal/dual residuals are below
    ``feas_tol`` and the relative duality gap is below ``gap_tol``;
    ``max-iters`` and ``numerical-failure`` return the last iterate.
    The first call pins BLAS to one thread for the whole process.
    """
    _pin_blas_single_threaded()
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    n = problem.n
    cones = problem.cones
    c = problem.c

    nu = sum(cone.m if cone.kind == "psd" else 1 for cone in cones)
    b_norm = np.sqrt(sum(cone.b_norm_sq() for cone in cones))
    c_norm = np.linalg.norm(c)
    alpha0 = 1.0 + b_norm

    x = np.zeros(n)
    s_blocks, z_blocks = [], []
    for cone in cones:
        if cone.kind == "psd":
            s_blocks.append(alpha0 * np.eye(cone.m, dtype=complex))
            z_blocks.append(alpha0 * np.eye(cone.m, dtype=complex))
        else:
            e = np.zeros(cone.dim)
            e[0] = alpha0
            s_blocks.append(e.copy())
            z_blocks.append(e.copy())

    status = "max-iters"
    trace = []
    iters = 0
    stall = 0

    def _dot(u, v):
        return float(np.vdot(u, v).real)

    for it in range(opts.max_iters + 1):
        iters = it
        rx = problem.adjoint(z_blocks) - c
        rz = [cone.assemble(x) - s for cone, s in zip(cones, s_blocks)]
        gap = sum(_dot(s, z) for s, z in zip(s_blocks, z_blocks))
        pobj = problem.objective_value(x)
        dobj = -sum(cone.b_dot(z) for cone, z in zip(cones, z_blocks)) + problem.obj_const
        pres = np.sqrt(sum(np.linalg.norm(r) ** 2 for r in rz)) / max(1.0, b_norm)
        dres = np.linalg.norm(rx) / max(1.0, c_norm)
        rel_gap = gap / max(1.0, abs(pobj))
        trace.append((pobj, dobj, gap, pres, dres))
        if opts.verbose:
            print(f"  it {it:3d}  pobj {pobj:+.6e}  dobj {dobj:+.6e} "
                  f"gap {gap:.2e}  pres {pres:.2e}  dres {dres:.2e}")
        if pres <= opts.feas_tol and dres <= opts.feas_tol and rel_gap <= opts.gap_tol:
            status = "optimal"
            break
        if it == opts.max_iters:
            status = "max-iters"
            break

        try:
            scalings = [
                _psd_scaling(s, z) if cone.kind == "psd" else _soc_scaling(s, z)
                for cone, s, z in zip(cones, s_blocks, z_blocks)
            ]
            m_kkt = np.zeros((n, n))
            for cone, sc in zip(cones, scalings):
                if cone.kind == "psd":
                    psd_gram(cone, sc.g, m_kkt)
                else:
                    soc_gram_terms(cone, sc.beta, sc.v, m_kkt)
            m_chol = scipy.linalg.cho_factor(m_kkt, lower=True, check_finite=False)
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            status = "numerical-failure"
            break

        def _direction(d_scaled):
            rhs = rx.copy()
            for cone, sc, rzk, d in zip(cones, scalings, rz, d_scaled):
                if cone.kind == "psd":
                    cone.adjoint(-(sc.w_inv(d) + sc.g @ rzk @ sc.g), rhs)
                else:
                    cone.adjoint(-(sc.w_inv(d) + sc.w_inv(sc.w_inv(rzk))), rhs)
            dx = scipy.linalg.cho_solve(m_chol, rhs, check_finite=False)
            ds, dz = [], []
            for cone, sc, rzk, d in zip(cones, scalings, rz, d_scaled):
                dsk = cone.assemble(dx, include_const=False) + rzk
                if cone.kind == "psd":
                    dsk = _herm(dsk)
                    dzk = _herm(-sc.w_inv(d + sc.w_inv_t(dsk)))
                else:
                    dzk = -sc.w_inv(d + sc.w_inv(dsk))
                ds.append(dsk)
                dz.append(dzk)
            return dx, ds, dz

        def _max_step(ds, dz):
            t = np.inf
            for cone, sc, s, z, dsk, dzk in zip(cones, scalings, s_blocks, z_blocks, ds, dz):
                if cone.kind == "psd":
                    t = min(t, _psd_max_step(sc.ls_inv, dsk), _psd_max_step(sc.lz_inv, dzk))
                else:
                    t = min(t, _soc_max_step(s, dsk), _soc_max_step(z, dzk))
            return t

        # predictor: target s o z -> 0
        d_aff = [np.diag(sc.lam).astype(complex) if cone.kind == "psd" else sc.lam
                 for cone, sc in zip(cones, scalings)]
        dx_a, ds_a, dz_a = _direction(d_aff)
        alpha_aff = min(1.0, _max_step(ds_a, dz_a))
        gap_aff = sum(
            _dot(s + alpha_aff * dsk, z + alpha_aff * dzk)
            for s, z, dsk, dzk in zip(s_blocks, z_blocks, ds_a, dz_a)
        )
        sigma = min(1.0, max(0.0, gap_aff / gap)) ** 3
        mu = gap / nu

        # corrector: target sigma*mu*e minus the Mehrotra cross term
        d_comb = []
        for cone, sc, dsk, dzk in zip(cones, scalings, ds_a, dz_a):
            if cone.kind == "psd":
                dst = sc.w_inv_t(dsk)
                dzt = sc.w_t(dzk)
                num = np.diag(sc.lam ** 2).astype(complex) \
                    + _herm(dst @ dzt) - (sigma * mu) * np.eye(cone.m)
                d_comb.append(_herm(_lam_divide_psd(sc.lam, num)))
            else:
                lam2 = _soc_prod(sc.lam, sc.lam)
                corr = _soc_prod(sc.w_inv(dsk), sc.w(dzk))
                lam2 += corr
                lam2[0] -= sigma * mu
                d_comb.append(_soc_divide(sc.lam, lam2))
        dx, ds, dz = _direction(d_comb)
        alpha = min(1.0, opts.step_frac * _max_step(ds, dz))
        if not np.isfinite(alpha) or alpha <= _MIN_STEP:
            status = "max-iters"  # stalled; keep the best iterate
            break
        stall = stall + 1 if alpha < 1e-5 else 0
        if stall >= _STALL_LIMIT:
            status = "max-iters"
            break

        x = x + alpha * dx
        for k, cone in enumerate(cones):
            if cone.kind == "psd":
                s_blocks[k] = _herm(s_blocks[k] + alpha * ds[k])
                z_blocks[k] = _herm(z_blocks[k] + alpha * dz[k])
            else:
                s_blocks[k] = s_blocks[k] + alpha * ds[k]
                z_blocks[k] = z_blocks[k] + alpha * dz[k]

    pobj, dobj, gap, pres, dres = trace[-1]
    return ConicSolution(
        status=status,
        objective=pobj,
        gap=gap,
        rel_gap=gap / max(1.0, abs(pobj)),
        primal_infeas=pres,
        dual_infeas=dres,
        iterations=iters,
        wall_time=time.perf_counter() - t0,
        x=x,
        primal=problem.unpack(x),
        duals=list(z_blocks),
        trace=trace,
    )
