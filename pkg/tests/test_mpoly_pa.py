import numpy as np
import pytest

from dmepulse import mpoly
from dmepulse.dpd import build_regressor
from dmepulse.errors import ConfigurationError
from dmepulse.pa import (
    PROFILE_NAMES,
    MemoryPolynomialModel,
    PaSimulatorConfig,
    auto_gain_window,
    estimate_gain,
    load_profile,
    mp_forward,
    nsr_profile,
    profile_to_text,
    simulate_transmitter,
    transfer_curve,
)
from dmepulse.waveform import SampledWaveform, gaussian_pulse

US = 1e-6


def naive_regressor(u, K, M):
    L = len(u)
    out = np.zeros((L, K * M + 1), dtype=complex)
    for n in range(L):
        for m in range(M):
            v = u[n - m] if n - m >= 0 else 0j
            term = v
            for k in range(K):
                out[n, m * K + k] = term
                term = term * np.abs(v)
        out[n, K * M] = 1.0
    return out


def naive_forward(a_km, b, u):
    K, M = a_km.shape
    y = np.zeros(len(u), dtype=complex)
    for n in range(len(u)):
        acc = b
        for k in range(K):
            for m in range(M):
                if n - m >= 0:
                    acc += a_km[k, m] * u[n - m] * abs(u[n - m]) ** k
        y[n] = acc
    return y


def random_complex(rng, n, scale=1.0):
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


# ---------------------------------------------------------------- regressor

def test_regressor_structure_examples():
    u = np.full(4, 0.5 + 0j)
    assert build_regressor(u, 1, 1).shape == (4, 2)
    np.testing.assert_array_equal(build_regressor(u, 2, 1)[2], [0.5, 0.25, 1.0])
    A = build_regressor(random_complex(np.random.default_rng(0), 20), 4, 3)
    assert A.shape[1] == 13
    assert np.all(A[:, -1] == 1)


def test_regressor_matches_naive_oracle_1000_cases():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        K, M = int(rng.integers(1, 8)), int(rng.integers(1, 4))
        L = int(rng.integers(1, 12))
        u = random_complex(rng, L, rng.uniform(0.1, 2))
        np.testing.assert_array_equal(build_regressor(u, K, M), naive_regressor(u, K, M))


def test_regressor_errors():
    with pytest.raises(ConfigurationError):
        build_regressor(np.ones(3), 0, 1)
    with pytest.raises(ConfigurationError):
        mpoly.evaluate(np.ones(4), np.ones(3), 2, 2)


def test_pack_round_trip_and_ordering():
    rng = np.random.default_rng(5)
    a = random_complex(rng, 12).reshape(4, 3)
    vec = mpoly.pack(a, 0.3j)
    back, b = mpoly.unpack(vec, 4, 3)
    np.testing.assert_array_equal(back, a)
    assert b == 0.3j
    # column m*K + k carries a_km
    assert vec[1 * 4 + 2] == a[2, 1]


# ---------------------------------------------------------------- memory polynomial

def test_mp_forward_examples():
    u = SampledWaveform(random_complex(np.random.default_rng(1), 30), 2e-8)
    assert np.array_equal(mp_forward(MemoryPolynomialModel.identity(), u).samples, u.samples)
    c = SampledWaveform(np.full(8, 0.5), 2e-8)
    y = mp_forward(MemoryPolynomialModel([[2.0]], 0.1), c)
    np.testing.assert_allclose(y.samples, 1.1, rtol=0, atol=1e-15)


def test_mp_forward_matches_direct_summation():
    rng = np.random.default_rng(11)
    for _ in range(20):
        K, M = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        a = random_complex(rng, K * M, 0.5).reshape(K, M)
        b = complex(random_complex(rng, 1, 0.1)[0])
        u = random_complex(rng, 100, 0.7)
        got = mp_forward(MemoryPolynomialModel(a, b), SampledWaveform(u, 2e-8)).samples
        assert np.max(np.abs(got - naive_forward(a, b, u))) < 1e-12


def test_mp_forward_homogeneous_and_zero_input():
    rng = np.random.default_rng(3)
    a = random_complex(rng, 6).reshape(3, 2)
    u = SampledWaveform(random_complex(rng, 40), 2e-8)
    base = mp_forward(MemoryPolynomialModel(a, 0.2 - 0.1j), u).samples
    for k in (0.5, 4.0, -2.0):
        scaled = mp_forward(MemoryPolynomialModel(k * a, k * (0.2 - 0.1j)), u).samples
        np.testing.assert_allclose(scaled, k * base, rtol=1e-14, atol=1e-14)
    zero = SampledWaveform(np.zeros(40), 2e-8)
    assert not np.any(mp_forward(MemoryPolynomialModel(a, 0), zero).samples)


def test_model_validation():
    with pytest.raises(ConfigurationError):
        MemoryPolynomialModel([[np.inf]])
    m = MemoryPolynomialModel(np.ones((3, 2)))
    assert (m.K, m.M) == (3, 2)


# ---------------------------------------------------------------- transmitter

def test_identity_noiseless_plant_is_identity():
    g = gaussian_pulse(3.5 * US)
    y = simulate_transmitter(PaSimulatorConfig(model="identity"), g)
    assert np.array_equal(y.samples, g.samples)
    assert y.same_grid(g)


def test_dead_zone_droop_on_transfer_curve():
    cfg = load_profile("pa_highpower")
    r = np.linspace(0.01, 1.0, 100)
    out, _ = transfer_curve(cfg, r)
    gain = out / r
    mid = np.mean(gain[(r >= 0.4) & (r <= 0.7)])
    assert np.all(gain[r < cfg.dead_zone_knee] < mid)


def test_transmitter_determinism():
    cfg = load_profile("pa_highpower")
    g = gaussian_pulse(3.5 * US)
    a = simulate_transmitter(cfg, g)
    b = simulate_transmitter(cfg, g)
    assert np.array_equal(a.samples, b.samples)
    c = simulate_transmitter(cfg, g, np.random.default_rng(9))
    d = simulate_transmitter(cfg, g, np.random.default_rng(9))
    assert np.array_equal(c.samples, d.samples)
    assert not np.array_equal(a.samples, c.samples)
    quiet = cfg.with_(noise_floor_std=0.0, noise_relative_std=0.0)
    assert np.array_equal(simulate_transmitter(quiet, g).samples, simulate_transmitter(quiet, g, np.random.default_rng(1)).samples)


def test_coloured_noise_keeps_per_sample_std():
    cfg = PaSimulatorConfig(model="identity", noise_floor_std=0.01, noise_bandwidth_hz=0.3e6)
    zero = SampledWaveform(np.zeros(1000), 2e-8)
    rng = np.random.default_rng(4)
    draws = np.stack([simulate_transmitter(cfg, zero, rng).samples for _ in range(400)])
    std = np.sqrt(np.mean(np.abs(draws[:, 200:800]) ** 2))
    assert std == pytest.approx(0.01, rel=0.03)


def test_plant_config_validation():
    with pytest.raises(ConfigurationError):
        PaSimulatorConfig(noise_floor_std=-1)
    with pytest.raises(ConfigurationError):
        PaSimulatorConfig(dead_zone_knee=1.5)
    with pytest.raises(ConfigurationError):
        PaSimulatorConfig(model="memory_polynomial")
    with pytest.raises(ConfigurationError):
        PaSimulatorConfig(noise_bandwidth_hz=0.0)


@pytest.mark.parametrize("name", PROFILE_NAMES)
def test_shipped_profiles_round_trip(name, tmp_path):
    cfg = load_profile(name)
    assert cfg.name == name and not cfg.noiseless
    p = tmp_path / f"{name}.ini"
    p.write_text(profile_to_text(cfg))
    back = load_profile(p)
    assert back == cfg
    assert profile_to_text(back) == profile_to_text(cfg)


def test_memory_polynomial_profile_round_trip(tmp_path):
    gt = MemoryPolynomialModel([[1.0, 0.1j], [-0.05, 0.01]], 0.002)
    cfg = PaSimulatorConfig(name="mp", model="memory_polynomial", ground_truth=gt)
    p = tmp_path / "mp.ini"
    p.write_text(profile_to_text(cfg))
    back = load_profile(p)
    np.testing.assert_array_equal(back.ground_truth.packed, gt.packed)


def test_unknown_profile():
    with pytest.raises(ConfigurationError):
        load_profile("no_such_plant")
    assert load_profile("identity").model == "identity"


# ---------------------------------------------------------------- gain

def test_gain_of_scaled_copy_is_exact():
    g = gaussian_pulse(3.5 * US)
    y = g.scaled(3.0)
    for window in ((0.5, 0.9), (0.1, 1.0), (0.2, 0.3)):
        assert estimate_gain(g, y, window) == pytest.approx(3.0, rel=1e-14)


def test_gain_monte_carlo():
    rng = np.random.default_rng(8)
    u = SampledWaveform(rng.uniform(0.5, 0.9, 1000), 2e-8)
    y = u.with_samples(u.samples + 0.001 * rng.standard_normal(1000))
    assert estimate_gain(u, y, (0.5, 0.9)) == pytest.approx(1.0, rel=0.005)


def test_gain_empty_window():
    g = gaussian_pulse(3.5 * US)
    with pytest.raises(ConfigurationError):
        estimate_gain(g, g, (1.5, 2.0))


def test_windowed_gain_exceeds_all_sample_gain():
    cfg = load_profile("pa_highpower")
    g = gaussian_pulse(3.5 * US)
    y = simulate_transmitter(cfg, g)
    active = (0.01, 1.0)
    assert estimate_gain(g, y, (0.5, 0.9)) > estimate_gain(g, y, active)


def test_auto_window_on_linear_plant():
    g = gaussian_pulse(3.5 * US)
    lo, hi = auto_gain_window(g, g.scaled(2.0))
    assert lo < hi
    mu = g.magnitude
    sel = (mu >= lo) & (mu <= hi)
    assert np.var(np.abs(2.0 * g.samples[sel]) / mu[sel]) < 1e-28


def test_auto_window_excludes_dead_zone():
    cfg = load_profile("pa_highpower")
    g = gaussian_pulse(3.5 * US)
    lo, hi = auto_gain_window(g, simulate_transmitter(cfg, g))
    assert lo >= cfg.dead_zone_knee


def test_auto_window_degenerate_inputs():
    c = SampledWaveform(np.full(500, 0.7), 2e-8)
    with pytest.raises(ConfigurationError):
        auto_gain_window(c, c)
    short = SampledWaveform(np.linspace(0.1, 1, 50), 2e-8)
    with pytest.raises(ConfigurationError):
        auto_gain_window(short, short)


# ---------------------------------------------------------------- NSR

def test_nsr_identical_ensemble():
    g = gaussian_pulse(3.5 * US)
    prof = nsr_profile([g] * 100)
    assert prof.total == 0
    assert np.all(prof.nsr[prof.included] == 0)


def test_nsr_synthetic_ensemble():
    rng = np.random.default_rng(12)
    pulses = [SampledWaveform(1.0 + 0.01 * rng.standard_normal(500), 2e-8) for _ in range(100)]
    prof = nsr_profile(pulses)
    assert prof.N == 500 and prof.excluded_count == 0
    assert prof.total == pytest.approx(5.0, rel=0.05)


def test_nsr_order_invariant_and_unbiased():
    rng = np.random.default_rng(13)
    pulses = [SampledWaveform(1.0 + 0.1 * rng.standard_normal(50), 2e-8) for _ in range(7)]
    a = nsr_profile(pulses)
    b = nsr_profile(pulses[::-1])
    assert a.total == pytest.approx(b.total, rel=1e-12)
    mags = np.abs(np.stack([p.samples for p in pulses]))
    np.testing.assert_allclose(a.std, mags.std(axis=0, ddof=1))


def test_nsr_excludes_silence_and_needs_two():
    g = gaussian_pulse(3.5 * US)
    rng = np.random.default_rng(0)
    pulses = [g.with_samples(g.samples + 1e-4 * rng.standard_normal(len(g))) for _ in range(5)]
    prof = nsr_profile(pulses)
    assert prof.excluded_count > 0
    assert np.isnan(prof.nsr[0])
    assert prof.total == pytest.approx(np.sum(prof.nsr[prof.included]))
    with pytest.raises(ConfigurationError):
        nsr_profile([g])


def test_default_highpower_nsr_brackets_hardware():
    cfg = load_profile("pa_highpower")
    g = gaussian_pulse(3.5 * US)
    rng = np.random.default_rng(1)

    def total(plant):
        # the 500 samples centred on the pulse
        return nsr_profile([g.with_samples(simulate_transmitter(plant, g, rng).samples[250:750])
                            for _ in range(100)]).total

    hp = total(cfg)
    assert 40.0 <= hp <= 60.0
    lp = total(load_profile("pa_lowpower"))
    assert lp < hp
