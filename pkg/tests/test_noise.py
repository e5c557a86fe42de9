import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jicd.noise import NoiseSpec, estimate_sigma, sample_sigma, synth, synth_awgn, synth_practical
from jicd.image import to_uint8
from oracles import clipped_quantized_gaussian_std


def const(value, size=256):
    return np.full((size, size, 3), value)


def on_8bit_grid(x):
    k = x * 255.0
    return np.array_equal(k, np.round(k))


def test_awgn_zero_sigma_is_quantized_identity(rng):
    x = rng.random((17, 23, 3))
    out = synth_awgn(x, 0.0, seed=3)
    assert np.array_equal(out, to_uint8(x) / 255.0)


def test_awgn_std_sigma25():
    out = synth_awgn(const(128 / 255), 25, seed=0)
    assert 24.5 <= np.std(255 * out - 128) <= 25.5


def test_awgn_range_and_grid(rng):
    out = synth_awgn(rng.random((40, 40, 3)), 80, seed=1)
    assert out.min() >= 0 and out.max() <= 1
    assert on_8bit_grid(out)


def test_awgn_negative_sigma():
    with pytest.raises(ValueError):
        synth_awgn(const(0.5, 4), -1)


def test_awgn_rounds_half_away_from_zero():
    # 0.5 above a level must go up even when the level is even
    x = np.full((1, 1, 3), 2.5 / 255)
    assert np.array_equal(synth_awgn(x, 0.0) * 255, np.full((1, 1, 3), 3.0))


def test_awgn_deterministic(rng):
    x = rng.random((32, 32, 3))
    assert np.array_equal(synth_awgn(x, 25, 7), synth_awgn(x, 25, 7))
    assert not np.array_equal(synth_awgn(x, 25, 7), synth_awgn(x, 25, 8))


@pytest.mark.parametrize("sigma", [15, 25])
def test_estimate_sigma_recovers_awgn(sigma):
    x = const(0.5)
    assert abs(estimate_sigma(synth_awgn(x, sigma, 2), x) - sigma) <= 1


def test_estimate_sigma_sigma50_matches_clipping_oracle():
    x = const(128 / 255)
    est = estimate_sigma(synth_awgn(x, 50, 2), x)
    assert abs(est - clipped_quantized_gaussian_std(128, 50)) <= 1


def test_practical_identity_without_noise(rng):
    x = rng.random((9, 9, 3))
    assert np.array_equal(synth_practical(x, 0, 0, 1), to_uint8(x) / 255.0)


def test_practical_variance_at_midgray():
    x = const(0.5, 512)
    out = synth_practical(x, 0.01, 0.0001, seed=5)
    # heteroscedastic Gaussian variance a*x + b plus uniform rounding variance
    expected = 0.01 * 0.5 + 0.0001 + 1 / (12 * 255 ** 2)
    assert abs(np.var(out - x) / expected - 1) < 0.05


def test_practical_variance_grows_with_intensity():
    lo = synth_practical(const(0.25), 0.01, 0.0001, 1)
    hi = synth_practical(const(0.75), 0.01, 0.0001, 1)
    assert np.var(lo - 0.25) < np.var(hi - 0.75)


def test_practical_exact_poisson_mean_and_variance():
    x = const(0.5, 256)
    out = synth_practical(x, 0.01, 0.0001, seed=3, exact_poisson=True)
    assert abs(np.mean(out) - 0.5) < 2e-3
    assert abs(np.var(out - x) / (0.0051 + 1 / (12 * 255 ** 2)) - 1) < 0.05


def test_practical_rejects_negative():
    with pytest.raises(ValueError):
        synth_practical(const(0.5, 2), -0.1, 0)
    with pytest.raises(ValueError):
        synth_practical(const(0.5, 2), 0, -0.1)


def test_estimate_sigma_identity_and_mismatch(rng):
    x = rng.random((8, 8, 3))
    assert estimate_sigma(x, x) == 0.0
    with pytest.raises(ValueError):
        estimate_sigma(x, x[:4])


def test_estimate_sigma_unclipped_awgn():
    x = const(0.5, 512)
    noisy = x + np.random.default_rng(0).standard_normal(x.shape) * 25 / 255
    assert 24.5 <= estimate_sigma(noisy, x) <= 25.5


def test_estimate_sigma_single_pixel_is_flagged():
    x = np.full((1, 1, 3), 0.3)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        assert estimate_sigma(x, x) == 0.0


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(kind="speckle")
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1)
    with pytest.raises(ValueError):
        NoiseSpec(sigma_set=())
    with pytest.raises(ValueError):
        NoiseSpec(kind="practical", a=-1)


def test_variable_awgn_uses_set_member():
    x = const(0.5, 64)
    spec = NoiseSpec(kind="variable_awgn", sigma_set=(15, 25, 50), seed=4)
    out = synth(x, spec)
    assert 10 < estimate_sigma(out, x) < 55
    rng = np.random.default_rng(0)
    assert {sample_sigma((15, 25, 50), rng) for _ in range(100)} == {15.0, 25.0, 50.0}


@settings(max_examples=40, deadline=None)
@given(h=st.integers(1, 12), w=st.integers(1, 12), sigma=st.floats(0, 200), seed=st.integers(0, 2 ** 31),
       kind=st.sampled_from(["awgn", "practical"]))
def test_outputs_in_range_on_grid_and_deterministic(h, w, sigma, seed, kind):
    x = np.random.default_rng(seed).random((h, w, 3))
    spec = NoiseSpec(kind=kind, sigma=sigma, a=0.02, b=0.001, seed=seed)
    a, b = synth(x, spec), synth(x, spec)
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1 and on_8bit_grid(a)
