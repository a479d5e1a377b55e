"""Channel estimators: the partially decoupled atomic-norm program, its
reweighted iteration, the closed-loop variant that steers the RIS phases
while estimating, and the 2-D/3-D atomic-norm baselines.

All estimators consume the despread observations Y (n_bs*n_ue x B) and
the phase control matrix Omega (n_ris x B); the closed-loop variant
instead drives a SoundingInterface and chooses Omega itself.
"""

import hashlib
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .channel import nmse, random_phase_matrix, steering_from_cos
from .linalg import solve_hermitian
from .sdp import (
    ANM3D_SIZE_CAP,
    SolverOptions,
    build_anm2d,
    build_anm3d,
    build_pdanm,
    build_wpdanm,
    default_eta,
    extract_pdanm,
    solve,
)
from .toeplitz import (
    FullRankToeplitzError,
    realize,
    vandermonde_decompose_1level,
)

__all__ = [
    "EstimatorConfig",
    "EstimateResult",
    "IterationRecord",
    "SoundingInterface",
    "pdanm_estimate",
    "rpdanm_estimate",
    "rpdanm_apc",
    "anm2d_estimate",
    "anm3d_estimate",
    "weight_update",
]


class SoundingInterface(Protocol):
    """Boundary between an estimator and the world during training.

    One session talks to one fixed underlying channel.  ``request``
    consumes exactly one training slot per column of the unit-modulus
    phase block it is given and returns the matching despread
    observations.  ``n_ris`` tells the estimator how many RIS elements it
    is steering; ``slots_used`` counts consumed slots.
    """

    n_ris: int
    slots_used: int

    def request(self, omega_add: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator knobs; the array split and noise level travel with it
    since Y alone determines neither (n_bs, n_ue) nor sigma^2."""

    n_bs: int
    n_ue: int
    noise_var: float
    eta_rule: Callable = default_eta
    max_iters_reweight: int = 10
    eps0: float = 1.0
    eps_floor_factor: float = 0.1
    conv_tol_eps_h: float = 1e-3
    b0: int | None = None
    b_max: int | None = None
    # relative eigenvalue threshold deciding how many differential angles
    # the Toeplitz optimizer carries; noisy data needs a coarser cut than
    # the solver-accuracy default used for exact decompositions
    rank_tol: float = 5e-2
    solver: SolverOptions = field(default_factory=SolverOptions)
    anm3d_size_cap: int = ANM3D_SIZE_CAP

    def __post_init__(self):
        if self.b0 is not None and self.b_max is not None and self.b0 > self.b_max:
            raise ValueError("b0 must not exceed b_max")
        for name in ("eps0", "conv_tol_eps_h", "rank_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_var < 0:
            raise ValueError("noise_var must be nonnegative")

    def eta(self, b):
        return self.eta_rule(self.n_bs, self.n_ue, b, self.noise_var)


@dataclass(frozen=True)
class IterationRecord:
    objective: float
    eps: float
    nmse: float | None
    weights_hash: str
    solver_status: str
    solver_iterations: int
    n_angles: int | None = None
    slots: int | None = None


@dataclass
class EstimateResult:
    h_hat: np.ndarray
    psi_hat: np.ndarray
    t_gen: object
    t_bu_gen: object
    history: tuple
    slots_used: int
    wall_time: float
    status: str


def _weights_hash(w_r, w_bu):
    dig = hashlib.sha256()
    dig.update(np.ascontiguousarray(w_r).tobytes())
    dig.update(np.ascontiguousarray(w_bu).tobytes())
    return dig.hexdigest()[:16]


def _identity_weights(cfg, n_ris):
    n_bu = cfg.n_bs * cfg.n_ue
    return np.eye(n_ris) / n_ris, np.eye(n_bu) / n_bu


def weight_update(t_gen, t_bu_gen, eps):
    """Inverse-regularized weights (T + eps I)^{-1} from the last optimizers.

    Directions where the previous solution carried energy get small weight,
    so the next solve keeps them; the shrinking regularizer steers the
    iteration toward a rank objective.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    out = []
    for gen in (t_gen, t_bu_gen):
        t_mat = realize(gen)
        t_mat = 0.5 * (t_mat + t_mat.conj().T)
        lam_min = np.linalg.eigvalsh(t_mat)[0]
        if lam_min <= -eps:
            raise ValueError(
                f"matrix eigenvalue {lam_min:.3e} <= -eps; inverse is unsafe"
            )
        m = t_mat.shape[0]
        w = solve_hermitian(t_mat + eps * np.eye(m), np.eye(m))
        out.append(0.5 * (w + w.conj().T))
    return out[0], out[1]


def _angles_from_gen(t_gen, rank_tol):
    """Differential angles and rank of the Toeplitz optimizer.  A full-rank
    optimizer has no decomposition; the caller decides what that means.
    Weights are skipped: estimation only steers at the angles."""
    t_mat = realize(t_gen)
    try:
        psi, _, rank = vandermonde_decompose_1level(
            t_mat, rank_tol=rank_tol, recover_weights=False)
        return psi, rank, True
    except FullRankToeplitzError:
        return np.zeros(0), t_mat.shape[0], False


def _solve_wpdanm(y, omega, cfg, w_r, w_bu, eta):
    prob = build_wpdanm(y, omega, eta, cfg.n_bs, cfg.n_ue, w_r, w_bu)
    return solve(prob, cfg.solver)


def pdanm_estimate(y, omega, cfg, h_true=None):
    """One-shot estimate: minimum uniform-weighted trace under the data fit."""
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    eta = cfg.eta(omega.shape[1])
    sol = solve(build_pdanm(y, omega, eta, cfg.n_bs, cfg.n_ue), cfg.solver)
    t_gen, t_bu_gen, h_hat = extract_pdanm(sol)
    psi, rank, ok = _angles_from_gen(t_gen, cfg.rank_tol)
    w_r, w_bu = _identity_weights(cfg, omega.shape[0])
    rec = IterationRecord(
        objective=sol.objective, eps=cfg.eps0,
        nmse=None if h_true is None else nmse(h_hat, h_true),
        weights_hash=_weights_hash(w_r, w_bu),
        solver_status=sol.status, solver_iterations=sol.iterations,
        n_angles=rank, slots=omega.shape[1],
    )
    status = sol.status if ok else sol.status + "/psi-unavailable"
    return EstimateResult(
        h_hat=h_hat, psi_hat=psi, t_gen=t_gen, t_bu_gen=t_bu_gen,
        history=(rec,), slots_used=omega.shape[1],
        wall_time=time.perf_counter() - t0, status=status,
    )


def rpdanm_estimate(y, omega, cfg, h_true=None):
    """Reweighted iteration: re-solve with inverse-regularized weights,
    halving the regularizer after every round, until the estimate stops
    moving or the iteration cap is hit.

    Round 1 uses uniform weights and therefore reproduces
    ``pdanm_estimate`` exactly.
    """
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    n_ris, b = omega.shape
    eta = cfg.eta(b)
    w_r, w_bu = _identity_weights(cfg, n_ris)
    eps = cfg.eps0
    threshold = cfg.noise_var * cfg.conv_tol_eps_h

    history = []
    best = None
    status = "max-iters"
    h_last = None
    for _ in range(cfg.max_iters_reweight):
        sol = _solve_wpdanm(y, omega, cfg, w_r, w_bu, eta)
        if sol.status == "numerical-failure":
            status = "solver-failure"
            break
        t_gen, t_bu_gen, h_hat = extract_pdanm(sol)
        history.append(IterationRecord(
            objective=sol.objective, eps=eps,
            nmse=None if h_true is None else nmse(h_hat, h_true),
            weights_hash=_weights_hash(w_r, w_bu),
            solver_status=sol.status, solver_iterations=sol.iterations,
            slots=b,
        ))
        best = (t_gen, t_bu_gen, h_hat)
        if h_last is not None:
            denom = np.linalg.norm(h_last) ** 2
            if denom > 0 and np.linalg.norm(h_hat - h_last) ** 2 / denom < threshold:
                status = "converged"
                break
        h_last = h_hat
        eps = eps / 2.0
        w_r, w_bu = weight_update(t_gen, t_bu_gen, eps)

    if best is None:
        raise ValueError("solver failed on the first reweighting iteration")
    t_gen, t_bu_gen, h_hat = best
    psi, rank, ok = _angles_from_gen(t_gen, cfg.rank_tol)
    if not ok:
        status += "/psi-unavailable"
    return EstimateResult(
        h_hat=h_hat, psi_hat=psi, t_gen=t_gen, t_bu_gen=t_bu_gen,
        history=tuple(history), slots_used=b,
        wall_time=time.perf_counter() - t0, status=status,
    )


def rpdanm_apc(sounder, cfg, rng, h_true=None):
    """Closed-loop estimation with adaptive phase control.

    Starts from ``b0`` random-phase slots; afterwards each round points
    the RIS at the currently estimated differential angles (one slot per
    angle), grows Y and Omega, reweights, and re-solves, as long as the
    next round still fits the slot budget ``b_max``.  Once the budget is
    exhausted, the closed loop has done its job of choosing where to
    sound; the reweighted iteration then restarts from uniform weights on
    everything collected (consuming no further slots) so the final
    estimate is the full reweighted fit to all observations.
    """
    if cfg.b0 is None or cfg.b_max is None:
        raise ValueError("rpdanm_apc requires b0 and b_max")
    if cfg.b0 < 1:
        raise ValueError("b0 must be >= 1")
    t0 = time.perf_counter()
    n_ris = sounder.n_ris
    eps = cfg.eps0
    w_r, w_bu = _identity_weights(cfg, n_ris)

    omega = random_phase_matrix(n_ris, cfg.b0, rng)
    y = np.asarray(sounder.request(omega), dtype=complex)
    b = cfg.b0
    history = []
    threshold = cfg.noise_var * cfg.conv_tol_eps_h
    eps_floor = cfg.noise_var * cfg.eps_floor_factor

    def run_solve():
        sol = _solve_wpdanm(y, omega, cfg, w_r, w_bu, cfg.eta(b))
        if sol.status == "numerical-failure":
            history.append(IterationRecord(
                objective=float("nan"), eps=eps, nmse=None,
                weights_hash=_weights_hash(w_r, w_bu),
                solver_status=sol.status, solver_iterations=sol.iterations,
                n_angles=None, slots=b,
            ))
            return None
        t_gen, t_bu_gen, h_hat = extract_pdanm(sol)
        psi, rank, ok = _angles_from_gen(t_gen, cfg.rank_tol)
        history.append(IterationRecord(
            objective=sol.objective, eps=eps,
            nmse=None if h_true is None else nmse(h_hat, h_true),
            weights_hash=_weights_hash(w_r, w_bu),
            solver_status=sol.status, solver_iterations=sol.iterations,
            n_angles=rank, slots=b,
        ))
        return t_gen, t_bu_gen, h_hat, psi, rank, ok

    state = run_solve()
    if state is None:
        raise ValueError("solver failed on the initial sounding block")
    t_gen, t_bu_gen, h_hat, psi, rank, ok = state
    status = "budget-exhausted"
    while b + rank <= cfg.b_max:
        if rank == 0 or not ok:
            status = "degenerate-rank"
            break
        if eps > eps_floor:
            eps = eps / 2.0
        h_last = h_hat
        b = b + rank
        omega_add = steering_from_cos(n_ris, np.cos(psi))
        y_add = np.asarray(sounder.request(omega_add), dtype=complex)
        w_r, w_bu = weight_update(t_gen, t_bu_gen, eps)
        omega = np.hstack([omega, omega_add])
        y = np.hstack([y, y_add])
        state = run_solve()
        if state is None:
            status = "solver-failure"
            break
        t_gen, t_bu_gen, h_hat, psi, rank, ok = state
        denom = np.linalg.norm(h_last) ** 2
        if denom > 0 and np.linalg.norm(h_hat - h_last) ** 2 / denom < threshold:
            status = "converged"
            break

    if status == "budget-exhausted":
        # refit on the data in hand: fresh reweighting pass, no new slots
        eps = cfg.eps0
        w_r, w_bu = _identity_weights(cfg, n_ris)
        h_last = None
        while len(history) < cfg.max_iters_reweight:
            state = run_solve()
            if state is None:
                status = "solver-failure"
                break
            t_gen, t_bu_gen, h_hat, psi, rank, ok = state
            if h_last is not None:
                denom = np.linalg.norm(h_last) ** 2
                if denom > 0 and np.linalg.norm(h_hat - h_last) ** 2 / denom < threshold:
                    status = "converged"
                    break
            h_last = h_hat
            if eps > eps_floor:
                eps = eps / 2.0
            w_r, w_bu = weight_update(t_gen, t_bu_gen, eps)

    return EstimateResult(
        h_hat=h_hat, psi_hat=psi, t_gen=t_gen, t_bu_gen=t_bu_gen,
        history=tuple(history), slots_used=b,
        wall_time=time.perf_counter() - t0, status=status,
    )


def anm2d_estimate(y, omega, cfg, h_true=None):
    """Baseline that ignores the RIS-side angular structure."""
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    eta = cfg.eta(omega.shape[1])
    sol = solve(build_anm2d(y, omega, eta, cfg.n_bs, cfg.n_ue), cfg.solver)
    h_hat = sol.primal["h"]
    rec = IterationRecord(
        objective=sol.objective, eps=cfg.eps0,
        nmse=None if h_true is None else nmse(h_hat, h_true),
        weights_hash="", solver_status=sol.status,
        solver_iterations=sol.iterations, slots=omega.shape[1],
    )
    return EstimateResult(
        h_hat=h_hat, psi_hat=np.zeros(0), t_gen=None,
        t_bu_gen=sol.primal["t_bu"], history=(rec,),
        slots_used=omega.shape[1], wall_time=time.perf_counter() - t0,
        status=sol.status,
    )


def anm3d_estimate(y, omega, cfg, h_true=None):
    """Baseline on vec(H); tighter model, much larger PSD block."""
    t0 = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    omega = np.asarray(omega, dtype=complex)
    eta = cfg.eta(omega.shape[1])
    sol = solve(
        build_anm3d(y, omega, eta, cfg.n_bs, cfg.n_ue, size_cap=cfg.anm3d_size_cap),
        cfg.solver,
    )
    h_hat = sol.primal["h"]
    rec = IterationRecord(
        objective=sol.objective, eps=cfg.eps0,
        nmse=None if h_true is None else nmse(h_hat, h_true),
        weights_hash="", solver_status=sol.status,
        solver_iterations=sol.iterations, slots=omega.shape[1],
    )
    return EstimateResult(
        h_hat=h_hat, psi_hat=np.zeros(0), t_gen=None, t_bu_gen=None,
        history=(rec,), slots_used=omega.shape[1],
        wall_time=time.perf_counter() - t0, status=sol.status,
    )
