import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import smooth_image
from jicd.bitstream import ScalableBitstream
from jicd.evaluate import (RDCurve, bd_rate, bpp_accounting, crop_back, evaluate, format_bd_table,
                           layer_bpp, pad_to_64, plot_curves, psnr, read_curves, write_curves)
from jicd.noise import NoiseSpec
from oracles import dense_bd_rate


@pytest.mark.parametrize("dims,padded", [((500, 500), (512, 512)), ((321, 481), (384, 512)),
                                         ((512, 512), (512, 512)), ((1, 1), (64, 64)),
                                         ((65, 3), (128, 64))])
def test_pad_to_64(dims, padded):
    x = np.random.default_rng(0).random((*dims, 3))
    p, size = pad_to_64(x)
    assert p.shape[:2] == padded and size == dims
    assert np.array_equal(crop_back(p, size), x)


def test_reflect_padding_mode():
    x = np.arange(60 * 62 * 3, dtype=float).reshape(60, 62, 3)
    p, _ = pad_to_64(x)
    assert np.array_equal(p[60, :62], x[58]) and np.array_equal(p[:60, 62], x[:, 60])


@settings(max_examples=60, deadline=None)
@given(h=st.integers(1, 4096), w=st.integers(1, 4096))
def test_pad_crop_identity(h, w):
    x = np.random.default_rng(h * 7 + w).random((h, w, 1)).repeat(3, axis=2)
    p, size = pad_to_64(x)
    assert p.shape[0] % 64 == 0 and p.shape[1] % 64 == 0
    assert p.shape[0] - h < 64 and p.shape[1] - w < 64
    assert np.array_equal(crop_back(p, size), x)


def test_psnr_values(rng):
    a = rng.random((8, 8, 3))
    assert psnr(a, a) == 100.0
    b = a + 1 / 255
    assert psnr(a, b) == pytest.approx(20 * np.log10(255), abs=1e-9)
    assert psnr(a, b) == pytest.approx(48.1308, abs=1e-4)
    assert psnr(np.zeros((2, 2, 3)), np.ones((2, 2, 3))) == pytest.approx(0.0)
    c = rng.random((8, 8, 3))
    assert psnr(a, c) == psnr(c, a)
    with pytest.raises(ValueError):
        psnr(a, a[:4])


def test_bpp_arithmetic():
    r = layer_bpp(32, 100, 1000, 500, 512, 512)
    assert r["base_bpp"] == pytest.approx(8 * 1132 / 512 ** 2)
    assert r["base_bpp"] == pytest.approx(0.034546, abs=1e-6)
    assert r["full_bpp"] == pytest.approx(0.049805, abs=1e-6)
    r = layer_bpp(32, 100, 1000, 0, 512, 512)
    assert r["full_bpp"] == r["base_bpp"]
    with pytest.raises(ValueError):
        layer_bpp(32, 1, 1, 1, 0, 5)


def test_bpp_uses_original_dims():
    bs = ScalableBitstream(500, 500, 48, 40, 1, b"s" * 100, b"b" * 1000, b"e" * 500)
    r = bpp_accounting(bs)
    assert r["base_bpp"] == pytest.approx(8 * (38 + 1100) / 500 ** 2)
    assert r["full_bpp"] == pytest.approx(8 * len(bs.serialize()) / 500 ** 2)
    assert r["base_bpp"] < r["full_bpp"]


ANCHOR_RATE = np.array([0.1, 0.2, 0.4, 0.8])
ANCHOR_PSNR = np.array([26.0, 28.5, 31.0, 33.2])


def curve(rate, q):
    return RDCurve.from_arrays(rate, q)


def test_bd_rate_identity_and_doubling():
    a = curve(ANCHOR_RATE, ANCHOR_PSNR)
    assert bd_rate(a, a).percent == pytest.approx(0.0, abs=1e-9)
    assert bd_rate(a, curve(2 * ANCHOR_RATE, ANCHOR_PSNR)).percent == pytest.approx(100.0, abs=0.1)
    assert bd_rate(a, curve(0.75 * ANCHOR_RATE, ANCHOR_PSNR)).percent == pytest.approx(-25.0, abs=0.1)


@pytest.mark.parametrize("seed", range(5))
def test_bd_rate_matches_dense_oracle(seed):
    r = np.random.default_rng(seed)
    test_rate = np.sort(r.uniform(0.08, 1.0, 4))
    test_psnr = np.sort(r.uniform(25.0, 34.0, 4))
    got = bd_rate(curve(ANCHOR_RATE, ANCHOR_PSNR), curve(test_rate, test_psnr)).percent
    want = dense_bd_rate(ANCHOR_RATE, ANCHOR_PSNR, test_rate, test_psnr)
    assert abs(got - want) <= 2e-3 * abs(want)


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-1.0, 1.0))
def test_bd_rate_antisymmetry_and_sign(shift, dq):
    a = curve(ANCHOR_RATE, ANCHOR_PSNR)
    b = curve(ANCHOR_RATE * 10 ** shift, ANCHOR_PSNR + dq)
    ab, ba = bd_rate(a, b).percent, bd_rate(b, a).percent
    assert ab == pytest.approx(-ba / (1 + ba / 100), rel=1e-6, abs=1e-9)
    if dq == 0 and shift < -1e-6:
        assert ab < 0


def test_bd_rate_errors():
    a = curve(ANCHOR_RATE, ANCHOR_PSNR)
    with pytest.raises(ValueError, match="at least 4"):
        bd_rate(a, curve(ANCHOR_RATE[:3], ANCHOR_PSNR[:3]))
    with pytest.raises(ValueError, match="overlap"):
        bd_rate(a, curve(ANCHOR_RATE, ANCHOR_PSNR + 20))


def test_curves_round_trip_and_table(tmp_path):
    a = RDCurve.from_arrays(ANCHOR_RATE, ANCHOR_PSNR, task="denoise", model_id="m", lmbda=0.013,
                            dataset="d")
    b = RDCurve.from_arrays(ANCHOR_RATE * 1.5, ANCHOR_PSNR - 3, task="noisy_recon", model_id="m",
                            lmbda=0.013, dataset="d")
    write_curves(tmp_path / "c.jsonl", {"denoise": a, "noisy_recon": b})
    back = read_curves(tmp_path / "c.jsonl")
    assert back["denoise"].points == a.points and back["noisy_recon"].points == b.points
    text = format_bd_table([("half", bd_rate(a, RDCurve.from_arrays(ANCHOR_RATE / 2, ANCHOR_PSNR)))])
    assert "-50.00%" in text
    plot_curves({"x": back}, tmp_path / "p.png", title="t")
    assert (tmp_path / "p.png").stat().st_size > 0


def test_evaluate_identical_models_coincide(tiny_model):
    images = [smooth_image(64, 64, s) for s in range(2)]
    curves = evaluate([tiny_model] * 3, images, NoiseSpec(sigma=25, seed=3), dataset="t")
    for task in ("denoise", "noisy_recon"):
        pts = curves[task].points
        assert len(pts) == 3
        assert len({(p.bpp, p.psnr) for p in pts}) == 1
    assert curves["denoise"].points[0].bpp < curves["noisy_recon"].points[0].bpp
