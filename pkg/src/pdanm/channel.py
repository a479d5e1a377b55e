"""Ground-truth channel generation, the effective (phase-decoupled) channel,
and the slot-based sounding simulation.

Geometry: base station, RIS, and user terminal all carry half-wavelength
ULAs.  Every per-path angle lives in [0, pi]; steering phases only ever
depend on cosines, so angle arithmetic is done in the cosine domain and
wrapped modulo 2 where needed.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import khatri_rao, kron

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "EffectiveChannel",
    "ReceivedSignal",
    "steering_vector",
    "steering_matrix",
    "steering_from_cos",
    "wrap_cosine",
    "sample_channel",
    "build_link_channels",
    "cascaded_channel",
    "effective_channel",
    "ambiguity_bound",
    "ambiguity_transform",
    "random_phase_matrix",
    "synthesize_received",
    "symbol_level_sounding",
    "nmse",
    "snr_to_sigma2",
]

UNIT_MODULUS_TOL = 1e-12


@dataclass(frozen=True)
class SystemConfig:
    """Array sizes, path counts, transmit power, and noise level."""

    n_bs: int = 4
    n_ue: int = 4
    n_ris: int = 16
    l_br: int = 2
    l_ru: int = 2
    power: float = 1.0
    sigma2: float = 1e-3
    m_symbols: int | None = None
    seed: int | None = None

    def __post_init__(self):
        for name in ("n_bs", "n_ue", "n_ris", "l_br", "l_ru"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.power <= 0:
            raise ValueError("power must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.l_br * self.l_ru >= min(self.n_bs * self.n_ue, self.n_ris):
            warnings.warn(
                "path count l_br*l_ru >= min(n_bs*n_ue, n_ris); "
                "the scenario may not be identifiable",
                stacklevel=2,
            )

    @property
    def n_effective_paths(self):
        return self.l_br * self.l_ru

    @property
    def noise_var(self):
        """Per-entry noise variance of the despread received signal."""
        return self.sigma2 / self.power

    def rng(self):
        return np.random.default_rng(self.seed)


@dataclass(frozen=True)
class ChannelRealization:
    """Per-path angles and gains of the two constituent links."""

    theta_b: np.ndarray  # BS-side departure angles, length l_br
    phi_r: np.ndarray    # RIS-side arrival angles, length l_br
    theta_r: np.ndarray  # RIS-side departure angles, length l_ru
    phi_u: np.ndarray    # UE-side arrival angles, length l_ru
    rho_br: np.ndarray   # complex gains, length l_br
    rho_ru: np.ndarray   # complex gains, length l_ru

    def __post_init__(self):
        for name in ("theta_b", "phi_r", "theta_r", "phi_u"):
            ang = np.asarray(getattr(self, name), dtype=float)
            if ang.ndim != 1:
                raise ValueError(f"{name} must be a 1-d array")
            if np.any(ang < -1e-12) or np.any(ang > np.pi + 1e-12):
                raise ValueError(f"{name} has entries outside [0, pi]")
            object.__setattr__(self, name, ang)
        for name in ("rho_br", "rho_ru"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=complex))
        if self.theta_b.shape != self.phi_r.shape or self.theta_b.shape != self.rho_br.shape:
            raise ValueError("BS-RIS path arrays disagree in length")
        if self.theta_r.shape != self.phi_u.shape or self.theta_r.shape != self.rho_ru.shape:
            raise ValueError("RIS-UE path arrays disagree in length")


@dataclass(frozen=True)
class EffectiveChannel:
    """Phase-decoupled channel H with its differential angles and gains.

    H has shape (n_bs*n_ue, n_ris) and satisfies vec(cascaded(omega)) = H omega
    for every phase vector omega.
    """

    h: np.ndarray
    psi_r: np.ndarray
    rho_bu: np.ndarray


@dataclass(frozen=True)
class ReceivedSignal:
    """Stacked despread observations Y = H Omega + N."""

    y: np.ndarray
    noise_var: float


def steering_vector(n, theta):
    """Steering vector of an n-element half-wavelength ULA at angle theta."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.cos(theta))


def steering_matrix(n, thetas):
    return steering_from_cos(n, np.cos(np.asarray(thetas, dtype=float)))


def steering_from_cos(n, cosines):
    """Steering matrix with columns exp(i pi k c) for each cosine c."""
    cosines = np.atleast_1d(np.asarray(cosines, dtype=float))
    return np.exp(1j * np.pi * np.arange(n)[:, None] * cosines[None, :])


def wrap_cosine(c):
    """Wrap a cosine-domain value into (-1, 1] modulo 2."""
    return np.mod(np.asarray(c, dtype=float) - 1.0, -2.0) + 1.0


def _complex_gaussian(rng, shape, var=1.0):
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def sample_channel(config, rng):
    """Draw a realization: angles uniform on [0, pi], gains standard complex Gaussian."""
    return ChannelRealization(
        theta_b=rng.uniform(0.0, np.pi, config.l_br),
        phi_r=rng.uniform(0.0, np.pi, config.l_br),
        theta_r=rng.uniform(0.0, np.pi, config.l_ru),
        phi_u=rng.uniform(0.0, np.pi, config.l_ru),
        rho_br=_complex_gaussian(rng, config.l_br),
        rho_ru=_complex_gaussian(rng, config.l_ru),
    )


def build_link_channels(config, r):
    """Materialize (H_BR, H_RU) from a realization.

    H_BR = A_{n_ris}(phi_r) diag(rho_br) A^H_{n_bs}(theta_b), shape (n_ris, n_bs);
    H_RU = A_{n_ue}(phi_u) diag(rho_ru) A^H_{n_ris}(theta_r), shape (n_ue, n_ris).
    """
    a_r = steering_matrix(config.n_ris, r.phi_r)
    a_b = steering_matrix(config.n_bs, r.theta_b)
    h_br = (a_r * r.rho_br[None, :]) @ a_b.conj().T
    a_u = steering_matrix(config.n_ue, r.phi_u)
    a_t = steering_matrix(config.n_ris, r.theta_r)
    h_ru = (a_u * r.rho_ru[None, :]) @ a_t.conj().T
    return h_br, h_ru


def _require_unit_modulus(omega):
    omega = np.asarray(omega, dtype=complex)
    if np.abs(np.abs(omega) - 1.0).max() > UNIT_MODULUS_TOL:
        raise ValueError("phase control entries must have unit modulus")
    return omega


def cascaded_channel(config, r, omega_b):
    """End-to-end channel H_RU diag(omega_b) H_BR for one phase vector."""
    omega_b = _require_unit_modulus(omega_b)
    if omega_b.shape != (config.n_ris,):
        raise ValueError(f"omega_b must have shape ({config.n_ris},)")
    h_br, h_ru = build_link_channels(config, r)
    return (h_ru * omega_b[None, :]) @ h_br


def effective_channel(config, r):
    """Derive the effective channel, differential angles, and effective gains.

    The differential cosines are cos(theta_r) - cos(phi_r) wrapped into
    (-1, 1] modulo 2 (steering phases are 2-periodic in the cosine), and
    effective path (i, j) with flat index i*l_ru + j pairs BS-RIS path i
    with RIS-UE path j.
    """
    cos_diff = np.cos(r.theta_r)[None, :] - np.cos(r.phi_r)[:, None]
    psi = np.arccos(wrap_cosine(cos_diff.reshape(-1)))
    rho_bu = kron(r.rho_br, r.rho_ru)
    a_bu = kron(
        steering_from_cos(config.n_bs, -np.cos(r.theta_b)),
        steering_matrix(config.n_ue, r.phi_u),
    )
    h = (a_bu * rho_bu[None, :]) @ steering_matrix(config.n_ris, psi).conj().T
    return EffectiveChannel(h=h, psi_r=psi, rho_bu=rho_bu)


def ambiguity_bound(r):
    """Largest cosine shift keeping every RIS-side cosine inside [-1, 1]."""
    cosines = np.concatenate([np.cos(r.phi_r), np.cos(r.theta_r)])
    return float(np.minimum(1.0 - cosines, 1.0 + cosines).min())


def ambiguity_transform(r, kappa, xi):
    """Rescale the per-link gains by kappa and shift both RIS-side cosine
    sets by xi.  Every cascaded channel is invariant under this map, which
    is exactly why only differential angles and effective gains are
    identifiable."""
    if kappa == 0:
        raise ValueError("kappa must be nonzero")
    zeta = ambiguity_bound(r)
    if abs(xi) > zeta + 1e-12:
        raise ValueError(f"|xi| = {abs(xi):.3e} exceeds admissible bound {zeta:.3e}")
    new_phi = np.arccos(np.clip(np.cos(r.phi_r) + xi, -1.0, 1.0))
    new_theta = np.arccos(np.clip(np.cos(r.theta_r) + xi, -1.0, 1.0))
    return ChannelRealization(
        theta_b=r.theta_b,
        phi_r=new_phi,
        theta_r=new_theta,
        phi_u=r.phi_u,
        rho_br=kappa * r.rho_br,
        rho_ru=r.rho_ru / kappa,
    )


def random_phase_matrix(n_ris, b, rng):
    """Phase control matrix with i.i.d. uniform phases on the unit circle."""
    return np.exp(2j * np.pi * rng.uniform(0.0, 1.0, (n_ris, b)))


def synthesize_received(h_eff, omega, config, rng):
    """Simulate the despread sounding observations Y = H Omega + N.

    Noise entries are i.i.d. complex Gaussian with variance sigma2/power,
    the level left after pilot despreading.
    """
    h = h_eff.h if isinstance(h_eff, EffectiveChannel) else np.asarray(h_eff)
    omega = _require_unit_modulus(omega)
    if omega.shape[0] != h.shape[1]:
        raise ValueError(f"omega rows {omega.shape[0]} do not match channel columns {h.shape[1]}")
    y = h @ omega
    if config.sigma2 > 0:
        y = y + _complex_gaussian(rng, y.shape, var=config.noise_var)
    return ReceivedSignal(y=y, noise_var=config.noise_var)


def symbol_level_sounding(config, r, s_b, omega_b, rng):
    """One slot at symbol level: transmit pilots, receive, despread.

    `s_b` is the (n_bs, M) pilot block and must satisfy S S^H = power * I.
    Returns the despread observation, the cascaded channel plus noise of
    variance sigma2/power.
    """
    s_b = np.asarray(s_b, dtype=complex)
    if s_b.ndim != 2 or s_b.shape[0] != config.n_bs:
        raise ValueError(f"pilot block must have {config.n_bs} rows")
    gram_dev = np.abs(s_b @ s_b.conj().T - config.power * np.eye(config.n_bs)).max()
    if gram_dev > 1e-8 * config.power:
        raise ValueError(f"pilots are not orthogonal: Gram deviation {gram_dev:.3e}")
    h_b = cascaded_channel(config, r, omega_b)
    z_b = h_b @ s_b
    if config.sigma2 > 0:
        z_b = z_b + _complex_gaussian(rng, z_b.shape, var=config.sigma2)
    return z_b @ s_b.conj().T / config.power


def nmse(h_hat, h):
    """Squared Frobenius error of the estimate, normalized by the truth."""
    h = np.asarray(h)
    denom = np.linalg.norm(h) ** 2
    if denom == 0:
        raise ValueError("reference channel is zero; NMSE undefined")
    return float(np.linalg.norm(np.asarray(h_hat) - h) ** 2 / denom)


def snr_to_sigma2(power, snr_db):
    """Noise variance giving the requested SNR = 10 log10(power / sigma2)."""
    if power <= 0:
        raise ValueError("power must be positive")
    return float(power * 10.0 ** (-snr_db / 10.0))


def stack_khatri_rao(config, r):
    """Effective channel via the transpose-link Khatri-Rao identity."""
    h_br, h_ru = build_link_channels(config, r)
    return khatri_rao(h_br.T, h_ru)
