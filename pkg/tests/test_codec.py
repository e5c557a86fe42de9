import io

import numpy as np
import pytest
import torch

from conftest import smooth_image
from jicd.bitstream import ScalableBitstream, parse
from jicd.codec import DecodeError, decode_base, decode_file, decode_full, decode_latents, encode_image
from jicd.model import model_id


@pytest.fixture(scope="module")
def coded(tiny_model):
    x = smooth_image(64, 64, seed=2)
    bs, info = encode_image(x, tiny_model, return_info=True)
    return x, bs, info


def symbol_count(bs, model):
    n, m = bs.padded_size[0] // 16, bs.padded_size[1] // 16
    cfg = model.config
    return {"side": cfg.hyper_channels * (n // 4) * (m // 4), "base": cfg.base_channels * n * m,
            "enh": cfg.enhancement_channels * n * m}


def test_three_nonempty_substreams_within_rate_bounds(coded, tiny_model):
    _, bs, info = coded
    assert bs.side and bs.base and bs.enhancement
    counts = symbol_count(bs, tiny_model)
    for name in ("side", "base", "enh"):
        est, act = getattr(info.estimated, name), getattr(info.actual, name)
        assert est - 1e-6 <= act <= est + 8 * (32 + 1e-2 * counts[name])


def test_toy_model_substreams(toy_model):
    bs = encode_image(smooth_image(64, 64), toy_model)
    assert bs.side and bs.base and bs.enhancement
    assert (bs.channels, bs.base_channels) == (48, 40)


def test_latents_recovered_exactly(coded, tiny_model):
    _, bs, info = coded
    base, enh = decode_latents(bs, tiny_model, full=True)
    i = tiny_model.config.base_channels
    assert np.array_equal(base, info.y_hat[:i])
    assert np.array_equal(enh, info.y_hat[i:])


def test_decode_base_matches_transform_path(coded, tiny_model):
    _, bs, info = coded
    with torch.no_grad():
        ref = tiny_model.synthesize_base(torch.from_numpy(info.y_hat[:8]).float()[None])
    assert np.array_equal(decode_base(bs, tiny_model), ref[0].double().numpy().transpose(1, 2, 0))


def test_padding_recorded_and_cropped(tiny_model):
    x = smooth_image(70, 100, seed=1)
    bs = encode_image(x, tiny_model)
    assert (bs.orig_h, bs.orig_w) == (70, 100) and bs.padded_size == (128, 128)
    assert decode_base(bs, tiny_model).shape == (70, 100, 3)
    assert decode_full(bs, tiny_model).shape == (70, 100, 3)


def test_orig_size_requires_padded_input(tiny_model):
    with pytest.raises(ValueError):
        encode_image(smooth_image(70, 64), tiny_model, orig_size=(70, 64))


def test_header_round_trip_500():
    bs = ScalableBitstream(500, 500, 48, 40, 7, b"a", b"b", b"c")
    again = parse(bs.serialize())
    assert (again.orig_h, again.orig_w, again.padded_size) == (500, 500, (512, 512))


def test_decode_full_deterministic(coded, tiny_model):
    _, bs, _ = coded
    assert np.array_equal(decode_full(bs, tiny_model), decode_full(bs, tiny_model))
    again = encode_image(coded[0], tiny_model)
    assert again.serialize() == bs.serialize()


@pytest.mark.parametrize("mutation", ["random", "empty", "flipped"])
def test_decode_base_independent_of_enhancement(coded, tiny_model, mutation):
    _, bs, _ = coded
    ref = decode_base(bs, tiny_model)
    enh = {"random": np.random.default_rng(0).bytes(len(bs.enhancement)), "empty": b"",
           "flipped": bytes(b ^ 0xFF for b in bs.enhancement)}[mutation]
    other = ScalableBitstream(bs.orig_h, bs.orig_w, bs.channels, bs.base_channels, bs.model_id,
                              bs.side, bs.base, enh)
    assert np.array_equal(decode_base(other, tiny_model), ref)


def test_missing_enhancement_named(coded, tiny_model):
    _, bs, _ = coded
    other = ScalableBitstream(bs.orig_h, bs.orig_w, bs.channels, bs.base_channels, bs.model_id,
                              bs.side, bs.base, b"")
    with pytest.raises(DecodeError, match="enhancement"):
        decode_full(other, tiny_model)


def test_missing_or_truncated_base(coded, tiny_model):
    _, bs, _ = coded
    for base in (b"", bs.base[: len(bs.base) // 3]):
        other = ScalableBitstream(bs.orig_h, bs.orig_w, bs.channels, bs.base_channels, bs.model_id,
                                  bs.side, base, bs.enhancement)
        with pytest.raises(DecodeError, match="base"):
            decode_base(other, tiny_model)


def test_model_mismatch(coded):
    from conftest import make_model

    _, bs, _ = coded
    other = make_model(seed=9)
    assert model_id(other) != bs.model_id
    with pytest.raises(DecodeError, match="model id"):
        decode_base(bs, other)


class ReadAudit(io.BytesIO):
    def __init__(self, data):
        super().__init__(data)
        self.max_pos = 0

    def read(self, n=-1):
        out = super().read(n)
        self.max_pos = max(self.max_pos, self.tell())
        return out


def test_file_base_decode_never_reads_enhancement(coded, tiny_model):
    _, bs, _ = coded
    data = bs.serialize()
    f = ReadAudit(data)
    x = decode_file(f, tiny_model, layer="base")
    assert f.max_pos == len(data) - len(bs.enhancement) - 4
    assert np.array_equal(x, decode_base(bs, tiny_model))
    # corrupting the bytes after the base payload does not matter
    damaged = data[: f.max_pos] + b"\x00\x01garbage"
    assert np.array_equal(decode_file(io.BytesIO(damaged), tiny_model, "base"), x)
