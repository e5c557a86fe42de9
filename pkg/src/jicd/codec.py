"""Encoding images to scalable bitstreams and decoding either layer.

Coding order: the side stream (hyper-latent, channel-major) first; then each
latent layer in raster order over spatial positions, all channels of a
position together. Latent symbols are ``round(y - mu)`` with ``mu`` from the
layer's causal context model, so the reconstruction is ``symbol + mu``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch

from . import bitstream as bsf
from .bitstream import BitstreamError, ScalableBitstream
from .entropy import (RateEstimate, decode_offset, encode_offset, gaussian_bin_probability,
                      gaussian_tables, hyper_tables, offset_cost_bits)
from .image import check_image, crop_back, pad_to_64
from .model import ALIGN, JICDModel, model_id
from .rangecoder import RangeCoderError, RangeDecoder, RangeEncoder


class DecodeError(ValueError):
    pass


@dataclass
class EncodeInfo:
    """Side products of encoding, used for rate checks and oracles."""
    z_hat: np.ndarray
    y_hat: np.ndarray
    # ideal bits under the coder's quantized tables
    estimated: RateEstimate
    # bits under the continuous model, -sum log2 p
    model_bits: RateEstimate
    actual: RateEstimate = field(default=None)


def _to_tensor(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1))).float().unsqueeze(0)


def _to_image(t: torch.Tensor) -> np.ndarray:
    return t[0].detach().double().numpy().transpose(1, 2, 0)


def _hyper_features(model: JICDModel, z_hat: np.ndarray) -> np.ndarray:
    with torch.no_grad():
        hyper = model.hyper_synthesis(torch.from_numpy(z_hat).float().unsqueeze(0))
    return hyper[0].double().numpy()


def _code_layer(stepper, hyper: np.ndarray, coder, y: Optional[np.ndarray] = None, cost=None):
    """Encode (``y`` given) or decode one latent layer position by position.

    Returns the reconstructed layer ``symbols + mu``. When encoding, ``cost``
    (a list) receives ``(ideal_bits, model_bits)`` sums.
    """
    c = stepper.channels
    _, n, m = hyper.shape
    k = stepper.kernel
    r = k // 2
    buf = np.zeros((c, n + 2 * r, m + 2 * r))
    ideal = model = 0.0
    for row in range(n):
        for col in range(m):
            mu, sigma = stepper(buf[:, row:row + k, col:col + k], hyper[:, row, col])
            tables, half = gaussian_tables(sigma)
            if y is not None:
                sym = np.round(y[:, row, col] - mu).astype(np.int64)
                for ch in range(c):
                    encode_offset(coder, int(sym[ch]), tables[ch], int(half[ch]))
                    ideal += offset_cost_bits(int(sym[ch]), tables[ch], int(half[ch]))
                model += float(-np.log2(gaussian_bin_probability(sym + mu, mu, sigma)).sum())
            else:
                sym = np.array([decode_offset(coder, tables[ch], int(half[ch])) for ch in range(c)],
                               dtype=np.int64)
            buf[:, row + r, col + r] = sym + mu
    if cost is not None:
        cost[:] = [ideal, model]
    return buf[:, r:r + n, r:r + m].copy()


def _code_hyper(model: JICDModel, coder, z_hat: Optional[np.ndarray] = None, shape=None, cost=None):
    tables, halves = hyper_tables(model.prior_z)
    if z_hat is not None:
        ideal = 0.0
        sym = np.round(z_hat).astype(np.int64)
        for ch in range(sym.shape[0]):
            t, h = tables[ch], int(halves[ch])
            for v in sym[ch].ravel():
                encode_offset(coder, int(v), t, h)
                ideal += offset_cost_bits(int(v), t, h)
        if cost is not None:
            cost[:] = [ideal]
        return sym.astype(np.float64)
    c, n, m = shape
    out = np.empty(shape)
    for ch in range(c):
        t, h = tables[ch], int(halves[ch])
        out[ch] = np.array([decode_offset(coder, t, h) for _ in range(n * m)]).reshape(n, m)
    return out


def _latent_shape(bs: ScalableBitstream):
    ph, pw = bs.padded_size
    return ph // 16, pw // 16


@torch.no_grad()
def encode_image(x_n: np.ndarray, model: JICDModel, orig_size=None, return_info: bool = False):
    """Compress a noisy image into a :class:`ScalableBitstream`.

    ``x_n`` is padded to multiples of 64 here if needed; ``orig_size`` overrides
    the dimensions recorded in the header when the caller already padded.
    """
    x_n = check_image(x_n, "x_n")
    if x_n.shape[0] % ALIGN or x_n.shape[1] % ALIGN:
        if orig_size is not None:
            raise ValueError("orig_size given but input is not padded to multiples of 64")
        x_n, orig_size = pad_to_64(x_n)
    elif orig_size is None:
        orig_size = x_n.shape[:2]
    cfg = model.config
    y = model.analysis(_to_tensor(x_n))
    z = model.hyper_analysis(y)
    z_np = z[0].double().numpy()

    enc = RangeEncoder()
    side_cost = [0.0]
    z_hat = _code_hyper(model, enc, z_hat=z_np, cost=side_cost)
    side = enc.finish()
    with torch.no_grad():
        z_lik = model.prior_z.likelihood(torch.from_numpy(z_hat).float().unsqueeze(0))
    side_model_bits = float(-torch.log2(z_lik.double()).sum())

    hyper = _hyper_features(model, z_hat)
    y_np = y[0].double().numpy()
    i = cfg.base_channels
    payloads, ideal, mbits, layers = {}, {}, {}, []
    for name, lm, part in (("base", model.entropy_base, y_np[:i]),
                           ("enh", model.entropy_enh, y_np[i:])):
        if lm is None:
            payloads[name], ideal[name], mbits[name] = b"", 0.0, 0.0
            continue
        enc = RangeEncoder()
        cost = [0.0, 0.0]
        layers.append(_code_layer(lm.stepper(), hyper, enc, y=part, cost=cost))
        payloads[name] = enc.finish()
        ideal[name], mbits[name] = cost

    bs = ScalableBitstream(int(orig_size[0]), int(orig_size[1]), cfg.total_channels, i, model_id(model),
                           side=side, base=payloads["base"], enhancement=payloads["enh"])
    if not return_info:
        return bs
    info = EncodeInfo(
        z_hat=z_hat, y_hat=np.concatenate(layers, axis=0),
        estimated=RateEstimate(side_cost[0], ideal["base"], ideal["enh"]),
        model_bits=RateEstimate(side_model_bits, mbits["base"], mbits["enh"]),
        actual=RateEstimate(8.0 * len(side), 8.0 * len(payloads["base"]), 8.0 * len(payloads["enh"])),
    )
    return bs, info


def _check_model(bs: ScalableBitstream, model: JICDModel):
    cfg = model.config
    if (bs.channels, bs.base_channels) != (cfg.total_channels, cfg.base_channels):
        raise DecodeError(f"bitstream has C={bs.channels}, i={bs.base_channels}; model has "
                          f"C={cfg.total_channels}, i={cfg.base_channels}")
    if bs.model_id != model_id(model):
        raise DecodeError(f"bitstream model id {bs.model_id:#018x} does not match checkpoint "
                          f"{model_id(model):#018x}")


def decode_latents(bs: ScalableBitstream, model: JICDModel, full: bool):
    """Entropy-decode the quantized latent layers: ``[base]`` or ``[base, enhancement]``."""
    _check_model(bs, model)
    n, m = _latent_shape(bs)
    nh = model.config.hyper_channels
    try:
        z_hat = _code_hyper(model, RangeDecoder(bs.side), shape=(nh, n // 4, m // 4))
    except RangeCoderError as e:
        raise DecodeError(f"side substream: {e}") from e
    hyper = _hyper_features(model, z_hat)
    names = [("base", bs.base, model.entropy_base)]
    if full and model.entropy_enh is not None:
        names.append(("enhancement", bs.enhancement, model.entropy_enh))
    layers = []
    for name, payload, lm in names:
        if not payload:
            raise DecodeError(f"missing {name} substream")
        try:
            layers.append(_code_layer(lm.stepper(), hyper, RangeDecoder(payload)))
        except RangeCoderError as e:
            raise DecodeError(f"{name} substream: {e}") from e
    return layers


@torch.no_grad()
def decode_base(bs: ScalableBitstream, model: JICDModel) -> np.ndarray:
    """Denoised image from the side and base substreams only."""
    (y1,) = decode_latents(bs, model, full=False)
    x = model.synthesize_base(torch.from_numpy(y1).float().unsqueeze(0))
    return crop_back(_to_image(x), (bs.orig_h, bs.orig_w))


@torch.no_grad()
def decode_full(bs: ScalableBitstream, model: JICDModel) -> np.ndarray:
    """Reconstruction of the noisy input from all substreams."""
    layers = decode_latents(bs, model, full=True)
    y = np.concatenate(layers, axis=0)
    x = model.synthesize_full(torch.from_numpy(y).float().unsqueeze(0))
    return crop_back(_to_image(x), (bs.orig_h, bs.orig_w))


def decode_file(source, model: JICDModel, layer: str = "base") -> np.ndarray:
    """Decode a container from a path or binary file object.

    For the base layer, reading stops at the end of the base substream so the
    enhancement bytes are never read.
    """
    if layer not in ("base", "full"):
        raise ValueError(f"layer must be 'base' or 'full', got {layer!r}")
    if hasattr(source, "read"):
        f, owned = source, False
    else:
        f, owned = open(source, "rb"), True
    try:
        if layer == "base":
            return decode_base(bsf.read_base_layer(f), model)
        return decode_full(bsf.parse(f.read()), model)
    finally:
        if owned:
            f.close()


__all__ = ["encode_image", "decode_base", "decode_full", "decode_file", "decode_latents", "DecodeError",
           "BitstreamError", "EncodeInfo"]
