import numpy as np
import pytest

from polsense.errors import ConfigError
from polsense.polmodel import ChannelParams, FrequencyGrid, FrequencyResponse, channel_response
from polsense.simulator import (Measurements, NoiseModel, PerturbationProfile, ScenarioConfig,
                               add_noise, evolve, generate_scenario, sample_initial,
                               snr_to_sigma2, substream)


def test_degenerate_gamma_range():
    cfg = ScenarioConfig(gamma_range=(0.0, 0.0), K=0)
    p = sample_initial(cfg, np.random.default_rng(0))
    assert np.all(p.gamma == 0)


def test_initial_ranges():
    cfg = ScenarioConfig(N=50, K=0)
    p = sample_initial(cfg, np.random.default_rng(1))
    assert np.all((p.gamma >= 0.07) & (p.gamma <= 0.17))
    assert np.all(np.abs(p.phi) <= np.pi) and np.all(np.abs(p.psi) <= np.pi)


def test_gamma_uniform_mean():
    cfg = ScenarioConfig(N=100_000, K=0)
    p = sample_initial(cfg, np.random.default_rng(2))
    assert abs(p.gamma.mean() - 0.12) <= 0.01 * 0.12


def test_evolve_zero_variance_is_identity():
    theta = ChannelParams([0.1, 0.2], [0.3, 0.4], [0.5, 0.6])
    out = evolve(theta, PerturbationProfile.zeros(2, 3), 1, np.random.default_rng(0))
    assert out == theta


def test_evolve_moves_only_perturbed_section():
    theta = ChannelParams([0.1] * 5, np.arange(5.0), -np.arange(5.0))
    prof = PerturbationProfile.window(5, 50, section=2, window=(15, 35), sigma2=0.1)
    out = evolve(theta, prof, 20, np.random.default_rng(3))
    changed = (out.phi != theta.phi) | (out.psi != theta.psi)
    assert changed.tolist() == [False, True, False, False, False]
    np.testing.assert_array_equal(out.gamma, theta.gamma)
    same = evolve(theta, prof, 10, np.random.default_rng(3))
    assert same == theta


def test_evolve_step_bounds():
    theta = ChannelParams([0.1], [0.2], [0.3])
    with pytest.raises(ValueError):
        evolve(theta, PerturbationProfile.zeros(1, 3), 0, np.random.default_rng(0))


def test_increment_variance():
    n = 100_000
    prof = PerturbationProfile(np.full((n, 2), 0.1), np.full((n, 2), 0.1))
    theta = ChannelParams.zeros(n)
    out = evolve(theta, prof, 1, np.random.default_rng(4))
    assert abs(out.phi.var() - 0.1) <= 0.05 * 0.1
    assert abs(out.psi.var() - 0.1) <= 0.05 * 0.1


def test_random_walk_is_martingale():
    trials, K = 10_000, 20
    prof = PerturbationProfile(np.full((trials, K + 1), 0.1), np.zeros((trials, K + 1)))
    theta0 = ChannelParams(np.zeros(trials), np.full(trials, 0.5), np.zeros(trials))
    theta = theta0
    rng = np.random.default_rng(5)
    for k in range(1, K + 1):
        theta = evolve(theta, prof, k, rng)
    stderr = np.sqrt(0.1 * K / trials)
    assert abs(theta.phi.mean() - 0.5) <= 3 * stderr


def test_zero_noise_is_identity():
    resp = FrequencyResponse(FrequencyGrid.canonical(3), np.ones((3, 2, 2)))
    assert add_noise(resp, NoiseModel(0.0), np.random.default_rng(0)) is resp


def test_noise_statistics():
    # 250_000 matrices x 4 entries = 10**6 scalar draws
    grid = FrequencyGrid.canonical(250_000)
    resp = FrequencyResponse(grid, np.zeros((grid.L, 2, 2)))
    Z = add_noise(resp, NoiseModel(0.3), np.random.default_rng(6)).matrices
    assert abs(np.mean(np.abs(Z) ** 2) - 0.3) <= 0.02 * 0.3
    # entrywise second moment E[z_ab conj(z_ab)] is sigma2_z everywhere
    second = np.mean(Z * np.conj(Z), axis=0)
    np.testing.assert_allclose(second.real, 0.3 * np.ones((2, 2)), rtol=0.02)
    # with a literal conjugate transpose the off-diagonal terms pair
    # independent entries and vanish
    cross = np.mean(Z * np.conj(np.swapaxes(Z, 1, 2)), axis=0)
    assert abs(cross[0, 1]) <= 0.02 * 0.3 and abs(cross[1, 0]) <= 0.02 * 0.3
    # circular: pseudo-variance vanishes, real and imaginary parts split evenly
    assert abs(np.mean(Z ** 2)) <= 0.02 * 0.3
    assert abs(np.var(Z.real) - 0.15) <= 0.02 * 0.15


def test_noise_entries_uncorrelated():
    grid = FrequencyGrid.canonical(100_000)
    resp = FrequencyResponse(grid, np.zeros((grid.L, 2, 2)))
    Z = add_noise(resp, NoiseModel(1.0), np.random.default_rng(7)).matrices.reshape(-1, 4)
    C = (Z.conj().T @ Z) / Z.shape[0]
    off = C - np.diag(np.diag(C))
    assert np.max(np.abs(off)) <= 0.02
    # across neighbouring frequencies
    assert abs(np.mean(Z[1:, 0] * np.conj(Z[:-1, 0]))) <= 0.02


def test_noise_independent_across_time_steps():
    a = substream(3, "noise", 1).standard_normal(100_000)
    b = substream(3, "noise", 2).standard_normal(100_000)
    assert abs(np.mean(a * b)) <= 0.02


def test_scenario_reproducible():
    cfg = ScenarioConfig(seed=11, noise=NoiseModel(0.01))
    a, b = generate_scenario(cfg), generate_scenario(cfg)
    assert a.noisy.tobytes() == b.noisy.tobytes()
    assert a.truth_array().tobytes() == b.truth_array().tobytes()


def test_noise_level_does_not_change_channel():
    a = generate_scenario(ScenarioConfig(seed=4))
    b = generate_scenario(ScenarioConfig(seed=4, noise=NoiseModel(0.05)))
    np.testing.assert_array_equal(a.truth_array(), b.truth_array())
    np.testing.assert_array_equal(a.clean, b.clean)
    assert not np.array_equal(a.noisy, b.noisy)


def test_static_noiseless_scenario_is_constant():
    cfg = ScenarioConfig(perturbation=PerturbationProfile.zeros(5, 50))
    s = generate_scenario(cfg)
    assert np.all(s.noisy == s.noisy[0])


def test_reference_scenario_perturbs_section_two_in_window():
    s = generate_scenario(ScenarioConfig(seed=8))
    c = np.abs(np.cos(s.truth_array()[:, :, 1]))
    for n in (0, 2, 3, 4):
        assert np.all(c[:, n] == c[0, n])
    assert np.all(c[:15, 1] == c[0, 1])
    assert np.all(c[35:, 1] == c[35, 1])
    assert np.any(c[15:36, 1] != c[0, 1])


def test_measurements_hide_truth():
    s = generate_scenario(ScenarioConfig(K=3))
    m = s.observed
    assert isinstance(m, Measurements) and len(m) == 4
    assert set(m.__dataclass_fields__) == {"grid", "responses"}
    np.testing.assert_array_equal(m[2].matrices, s.noisy[2])
    for k, t in enumerate(s.truth):
        np.testing.assert_allclose(s.clean[k], channel_response(t, s.grid).matrices)


def test_snr_conversion():
    clean = np.ones((3, 6, 2, 2))
    assert snr_to_sigma2(clean, 20) == pytest.approx(0.01)
    assert snr_to_sigma2(2 * clean, 10) == pytest.approx(0.4)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(N=0)
    with pytest.raises(ConfigError):
        ScenarioConfig(gamma_range=(0.2, 0.1))
    with pytest.raises(ConfigError):
        NoiseModel(-1.0)
    with pytest.raises(ConfigError):
        PerturbationProfile(-np.ones((2, 3)), np.ones((2, 3)))
    with pytest.raises(ConfigError):
        ScenarioConfig(N=3, K=5, perturbation=PerturbationProfile.zeros(3, 4))
