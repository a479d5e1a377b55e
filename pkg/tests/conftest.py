"""Shared helpers: planted channel instances with controlled angular
separation, used as ground truth by the solver and estimator tests."""

import numpy as np
import pytest

from pdanm.channel import effective_channel, sample_channel, steering_from_cos
from pdanm.linalg import khatri_rao


def torus_separation(cosines):
    """Minimum pairwise wrap-around distance of cosine values (period 2)."""
    c = np.asarray(cosines, dtype=float)
    if c.size < 2:
        return np.inf
    d = np.abs(c[:, None] - c[None, :])
    d = np.minimum(d, 2.0 - d)
    np.fill_diagonal(d, np.inf)
    return float(d.min())


def draw_separated_cosines(rng, count, min_sep, lo=-0.95, hi=0.95, max_tries=2000):
    for _ in range(max_tries):
        c = rng.uniform(lo, hi, count)
        if torus_separation(c) > min_sep:
            return c
    raise RuntimeError("could not draw separated cosines")


def planted_channel(rng, n_bs, n_ue, n_ris, n_paths, min_sep, gains=None):
    """Effective channel built from explicit atoms with separated
    differential cosines.  Returns (H, gains, cos_psi)."""
    cos_psi = np.sort(draw_separated_cosines(rng, n_paths, min_sep))
    cos_b = rng.uniform(-0.9, 0.9, n_paths)
    cos_u = rng.uniform(-0.9, 0.9, n_paths)
    if gains is None:
        mag = rng.uniform(0.5, 2.0, n_paths)
        gains = mag * np.exp(2j * np.pi * rng.uniform(0.0, 1.0, n_paths))
    gains = np.asarray(gains, dtype=complex)
    a_bu = khatri_rao(steering_from_cos(n_bs, cos_b), steering_from_cos(n_ue, cos_u))
    h = (a_bu * gains[None, :]) @ steering_from_cos(n_ris, cos_psi).conj().T
    return h, gains, cos_psi


def sample_separated_realization(config, rng, min_sep, max_tries=500):
    """Channel realization whose differential cosines are separated; used
    where a test needs exact-recovery conditions to hold."""
    for _ in range(max_tries):
        real = sample_channel(config, rng)
        eff = effective_channel(config, real)
        if torus_separation(np.cos(eff.psi_r)) > min_sep:
            return real, eff
    raise RuntimeError("could not sample a separated realization")


def random_hermitian(rng, m, pd_shift=0.0):
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    a = 0.5 * (a + a.conj().T)
    if pd_shift:
        a = a @ a.conj().T + pd_shift * np.eye(m)
    return a


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
