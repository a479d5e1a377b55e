import numpy as np
import pytest

from conftest import torus_separation
from pdanm.channel import (
    SystemConfig,
    ambiguity_bound,
    ambiguity_transform,
    build_link_channels,
    cascaded_channel,
    effective_channel,
    nmse,
    random_phase_matrix,
    sample_channel,
    snr_to_sigma2,
    steering_vector,
    symbol_level_sounding,
    synthesize_received,
    wrap_cosine,
)
from pdanm.linalg import khatri_rao, kron, vec


def small_config(**kw):
    base = dict(n_bs=2, n_ue=3, n_ris=8, l_br=2, l_ru=2, power=1.0, sigma2=1e-3)
    base.update(kw)
    return SystemConfig(**base)


def test_steering_vector_values():
    np.testing.assert_allclose(steering_vector(4, np.pi / 2), np.ones(4), atol=1e-14)
    np.testing.assert_allclose(steering_vector(2, 0.0), [1.0, -1.0], atol=1e-14)
    np.testing.assert_allclose(steering_vector(3, np.pi / 3), [1.0, 1j, -1.0], atol=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        SystemConfig(n_bs=0)
    with pytest.raises(ValueError):
        SystemConfig(power=0.0)
    with pytest.warns(UserWarning):
        SystemConfig(n_bs=2, n_ue=2, n_ris=4, l_br=2, l_ru=2)


def test_sample_channel_reproducible():
    cfg = small_config()
    r1 = sample_channel(cfg, np.random.default_rng(3))
    r2 = sample_channel(cfg, np.random.default_rng(3))
    np.testing.assert_array_equal(r1.theta_b, r2.theta_b)
    np.testing.assert_array_equal(r1.rho_ru, r2.rho_ru)


def test_sample_channel_moments():
    cfg = SystemConfig(n_bs=2, n_ue=2, n_ris=8, l_br=1, l_ru=1)
    rng = np.random.default_rng(0)
    n = 100_000
    gains = np.array([sample_channel(cfg, rng).rho_br[0] for _ in range(0)])
    # vectorized equivalent draw for speed; same distribution as the sampler
    angles = rng.uniform(0.0, np.pi, n)
    gains = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
    assert abs(np.mean(np.abs(gains) ** 2) - 1.0) < 0.03
    assert abs(np.mean(angles) - np.pi / 2) < 0.01 * np.pi / 2
    # and the sampler itself on a smaller batch
    draws = [sample_channel(cfg, rng) for _ in range(2000)]
    g = np.array([d.rho_br[0] for d in draws])
    a = np.array([d.theta_b[0] for d in draws])
    assert abs(np.mean(np.abs(g) ** 2) - 1.0) < 0.1
    assert abs(np.mean(a) - np.pi / 2) < 0.05 * np.pi


def test_link_channel_outer_product_form(rng):
    cfg = small_config(l_br=1, l_ru=1)
    r = sample_channel(cfg, rng)
    r = type(r)(theta_b=r.theta_b, phi_r=r.phi_r, theta_r=r.theta_r,
                phi_u=r.phi_u, rho_br=np.array([1.0 + 0j]), rho_ru=r.rho_ru)
    h_br, _ = build_link_channels(cfg, r)
    expect = np.outer(steering_vector(cfg.n_ris, r.phi_r[0]),
                      steering_vector(cfg.n_bs, r.theta_b[0]).conj())
    np.testing.assert_allclose(h_br, expect, atol=1e-13)


def test_link_channel_zero_gains(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    r = type(r)(theta_b=r.theta_b, phi_r=r.phi_r, theta_r=r.theta_r,
                phi_u=r.phi_u, rho_br=np.zeros(2, complex), rho_ru=r.rho_ru)
    h_br, _ = build_link_channels(cfg, r)
    np.testing.assert_array_equal(h_br, np.zeros_like(h_br))


def test_link_channel_matches_path_sum(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    h_br, h_ru = build_link_channels(cfg, r)
    brute_br = sum(
        r.rho_br[l] * np.outer(steering_vector(cfg.n_ris, r.phi_r[l]),
                               steering_vector(cfg.n_bs, r.theta_b[l]).conj())
        for l in range(cfg.l_br)
    )
    brute_ru = sum(
        r.rho_ru[l] * np.outer(steering_vector(cfg.n_ue, r.phi_u[l]),
                               steering_vector(cfg.n_ris, r.theta_r[l]).conj())
        for l in range(cfg.l_ru)
    )
    np.testing.assert_allclose(h_br, brute_br, atol=1e-12)
    np.testing.assert_allclose(h_ru, brute_ru, atol=1e-12)


def test_cascaded_channel_all_ones_phase(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    h_br, h_ru = build_link_channels(cfg, r)
    np.testing.assert_allclose(cascaded_channel(cfg, r, np.ones(cfg.n_ris)),
                               h_ru @ h_br, atol=1e-12)


def test_cascaded_channel_vec_identity(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    h_br, h_ru = build_link_channels(cfg, r)
    omega = np.exp(2j * np.pi * rng.uniform(size=cfg.n_ris))
    lhs = vec(cascaded_channel(cfg, r, omega))
    rhs = khatri_rao(h_br.T, h_ru) @ omega
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * np.abs(lhs).max())


def test_wrap_cosine_range_and_cases():
    np.testing.assert_allclose(wrap_cosine(0.3 - 0.5), -0.2)
    np.testing.assert_allclose(wrap_cosine(-0.9 - 0.9), 0.2)
    vals = wrap_cosine(np.linspace(-3.7, 3.7, 101))
    assert np.all(vals > -1.0) and np.all(vals <= 1.0)


def test_effective_channel_psi_wrap(rng):
    cfg = small_config(l_br=1, l_ru=1)
    r = sample_channel(cfg, rng)
    r = type(r)(theta_b=r.theta_b, phi_r=np.array([np.arccos(0.5)]),
                theta_r=np.array([np.arccos(0.3)]), phi_u=r.phi_u,
                rho_br=r.rho_br, rho_ru=r.rho_ru)
    eff = effective_channel(cfg, r)
    np.testing.assert_allclose(np.cos(eff.psi_r), [-0.2], atol=1e-14)

    r2 = type(r)(theta_b=r.theta_b, phi_r=np.array([np.arccos(0.9)]),
                 theta_r=np.array([np.arccos(-0.9)]), phi_u=r.phi_u,
                 rho_br=r.rho_br, rho_ru=r.rho_ru)
    eff2 = effective_channel(cfg, r2)
    np.testing.assert_allclose(np.cos(eff2.psi_r), [0.2], atol=1e-14)


def test_effective_channel_khatri_rao_identity(rng):
    # exercises several sizes; the bulk 1000-draw sweep lives in acceptance
    for n_bs, n_ue, n_ris in [(2, 2, 8), (2, 4, 8), (4, 4, 16)]:
        cfg = SystemConfig(n_bs=n_bs, n_ue=n_ue, n_ris=n_ris, l_br=2, l_ru=2)
        for _ in range(20):
            r = sample_channel(cfg, rng)
            eff = effective_channel(cfg, r)
            h_br, h_ru = build_link_channels(cfg, r)
            ref = khatri_rao(h_br.T, h_ru)
            assert np.linalg.norm(eff.h - ref) <= 1e-10 * np.linalg.norm(ref)


def test_effective_channel_gain_ordering(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    eff = effective_channel(cfg, r)
    np.testing.assert_allclose(eff.rho_bu, kron(r.rho_br, r.rho_ru), atol=1e-14)


def test_decoupling_identity(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    eff = effective_channel(cfg, r)
    for _ in range(5):
        omega = np.exp(2j * np.pi * rng.uniform(size=cfg.n_ris))
        np.testing.assert_allclose(
            vec(cascaded_channel(cfg, r, omega)), eff.h @ omega,
            atol=1e-11 * np.linalg.norm(eff.h),
        )


def test_ambiguity_identity_transform(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    r2 = ambiguity_transform(r, kappa=1.0, xi=0.0)
    np.testing.assert_allclose(r2.phi_r, r.phi_r, atol=1e-14)
    np.testing.assert_allclose(r2.rho_br, r.rho_br, atol=1e-14)


@pytest.mark.parametrize("kappa,use_xi", [(2.0, False), (1.0, True), (0.5 - 1.2j, True)])
def test_ambiguity_preserves_cascade(rng, kappa, use_xi):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    xi = 0.5 * ambiguity_bound(r) if use_xi else 0.0
    r2 = ambiguity_transform(r, kappa=kappa, xi=xi)
    for _ in range(10):
        omega = np.exp(2j * np.pi * rng.uniform(size=cfg.n_ris))
        h1 = cascaded_channel(cfg, r, omega)
        h2 = cascaded_channel(cfg, r2, omega)
        assert np.linalg.norm(h1 - h2) <= 1e-12 * max(np.linalg.norm(h1), 1e-30)


def test_ambiguity_rejects_bad_args(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    with pytest.raises(ValueError):
        ambiguity_transform(r, kappa=0.0, xi=0.0)
    with pytest.raises(ValueError):
        ambiguity_transform(r, kappa=1.0, xi=ambiguity_bound(r) + 0.1)


def test_random_phase_matrix_properties():
    rng = np.random.default_rng(7)
    omega = random_phase_matrix(16, 640, rng)
    assert np.abs(np.abs(omega) - 1.0).max() < 1e-12
    omega2 = random_phase_matrix(16, 640, np.random.default_rng(7))
    np.testing.assert_array_equal(omega, omega2)
    assert abs(omega.mean()) < 0.05  # ~1e4 samples


def test_synthesize_received_noiseless(rng):
    cfg = small_config(sigma2=0.0)
    r = sample_channel(cfg, rng)
    eff = effective_channel(cfg, r)
    omega = random_phase_matrix(cfg.n_ris, 6, rng)
    out = synthesize_received(eff, omega, cfg, rng)
    np.testing.assert_array_equal(out.y, eff.h @ omega)
    assert out.noise_var == 0.0


def test_synthesize_received_noise_variance(rng):
    cfg = SystemConfig(n_bs=5, n_ue=5, n_ris=16, l_br=1, l_ru=1, power=2.0, sigma2=1e-2)
    zero = np.zeros((25, 16), dtype=complex)
    omega = random_phase_matrix(16, 400, rng)
    out = synthesize_received(zero, omega, cfg, rng)
    var = np.mean(np.abs(out.y) ** 2)  # 1e4 entries of pure noise
    assert abs(var - cfg.noise_var) < 0.05 * cfg.noise_var


def test_noise_level_default_snr():
    # 30 dB at unit power gives 1e-3, the per-entry despread variance
    assert snr_to_sigma2(1.0, 30.0) == pytest.approx(1e-3)
    cfg = small_config(power=1.0, sigma2=1e-3)
    assert cfg.noise_var == pytest.approx(1e-3)


def test_symbol_level_sounding_noiseless(rng):
    cfg = small_config(sigma2=0.0, m_symbols=4)
    r = sample_channel(cfg, rng)
    s_b = np.sqrt(cfg.power) * np.fft.fft(np.eye(4))[: cfg.n_bs] / 2.0
    np.testing.assert_allclose(s_b @ s_b.conj().T, cfg.power * np.eye(cfg.n_bs), atol=1e-12)
    omega = np.exp(2j * np.pi * rng.uniform(size=cfg.n_ris))
    out = symbol_level_sounding(cfg, r, s_b, omega, rng)
    np.testing.assert_allclose(out, cascaded_channel(cfg, r, omega), atol=1e-12)


def test_symbol_level_sounding_rejects_bad_pilots(rng):
    cfg = small_config()
    r = sample_channel(cfg, rng)
    with pytest.raises(ValueError):
        symbol_level_sounding(cfg, r, np.ones((cfg.n_bs, 4)), np.ones(cfg.n_ris), rng)


def test_symbol_level_noise_statistics(rng):
    cfg = SystemConfig(n_bs=2, n_ue=2, n_ris=8, l_br=1, l_ru=1, power=4.0, sigma2=1e-2)
    r = sample_channel(cfg, rng)
    r = type(r)(theta_b=r.theta_b, phi_r=r.phi_r, theta_r=r.theta_r, phi_u=r.phi_u,
                rho_br=np.zeros(1, complex), rho_ru=np.zeros(1, complex))
    s_b = np.sqrt(cfg.power) * np.fft.fft(np.eye(8))[: cfg.n_bs] / np.sqrt(8)
    omega = np.ones(cfg.n_ris)
    samples = np.concatenate(
        [symbol_level_sounding(cfg, r, s_b, omega, rng).ravel() for _ in range(3000)]
    )
    var = np.mean(np.abs(samples) ** 2)
    assert abs(var - cfg.noise_var) < 0.05 * cfg.noise_var


def test_symbol_level_matches_despread_distribution(rng):
    # symbol-level sounding and the direct synthesis agree in first and
    # second moments over many slots
    cfg = SystemConfig(n_bs=2, n_ue=2, n_ris=4, l_br=1, l_ru=1, power=1.0, sigma2=4e-2)
    r = sample_channel(cfg, rng)
    eff = effective_channel(cfg, r)
    s_b = np.fft.fft(np.eye(cfg.n_bs)) / np.sqrt(cfg.n_bs)
    n_trials = 2500
    omega = random_phase_matrix(cfg.n_ris, n_trials, rng)
    direct = synthesize_received(eff, omega, cfg, rng).y
    symbol = np.stack(
        [symbol_level_sounding(cfg, r, s_b, omega[:, b], rng).reshape(-1, order="F")
         for b in range(n_trials)], axis=1,
    )
    mean_ref = eff.h @ omega
    err_mean = np.abs(direct.mean(axis=1) - symbol.mean(axis=1)).max()
    assert err_mean < 0.05 * np.abs(mean_ref).mean() + 0.05
    var_direct = np.mean(np.abs(direct - mean_ref) ** 2)
    var_symbol = np.mean(np.abs(symbol - mean_ref) ** 2)
    assert abs(var_direct - var_symbol) < 0.05 * max(var_direct, var_symbol)


def test_nmse_basic(rng):
    h = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert nmse(h, h) == 0.0
    assert nmse(np.zeros_like(h), h) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        nmse(h, np.zeros_like(h))


def test_torus_separation_helper():
    assert torus_separation([0.9, -0.9]) == pytest.approx(0.2)
    assert torus_separation([0.1]) == np.inf
