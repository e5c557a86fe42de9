"""The joint compression/denoising network and its latent partition.

One analysis transform maps the noisy input to a latent of ``C`` channels.
The first ``i`` channels form the base layer, decoded on their own into the
denoised image; all ``C`` channels decode the noisy input. Each layer has its
own causal context model and entropy-parameter head, both conditioned on the
shared hyperprior features and never on the other layer.
"""

import hashlib
import io
import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .entropy import SIGMA_MIN, FactorizedPrior, gaussian_likelihood, quantize
from .layers import GDN, AttentionBlock, MaskedConv2d, conv, deconv

CHECKPOINT_VERSION = 1
STRIDE = 16
HYPER_STRIDE = 4
ALIGN = STRIDE * HYPER_STRIDE

# enhancement channels of the noise-specific paper models, keyed by AWGN sigma
PAPER_ENHANCEMENT_CHANNELS = {50: 32, 25: 12, 15: 2}


@dataclass(frozen=True)
class ModelConfig:
    total_channels: int = 48
    base_channels: int = 40
    width: int = 48
    hyper_channels: int = 48
    context_kernel: int = 5
    attention: bool = False
    profile: str = "toy"

    def __post_init__(self):
        if not 1 <= self.base_channels <= self.total_channels:
            raise ValueError(
                f"base_channels must be in [1, {self.total_channels}], got {self.base_channels}")
        if self.context_kernel % 2 != 1:
            raise ValueError("context_kernel must be odd")

    @property
    def enhancement_channels(self):
        return self.total_channels - self.base_channels

    @property
    def hyper_features(self):
        return 2 * self.total_channels

    @classmethod
    def toy(cls, **kw):
        return cls(**{"total_channels": 48, "base_channels": 40, "width": 48,
                      "hyper_channels": 48, "profile": "toy", **kw})

    @classmethod
    def paper(cls, sigma: Optional[float] = 50, **kw):
        """Full-size configuration; ``sigma=None`` gives the variable-noise model."""
        enh = 12 if sigma is None else PAPER_ENHANCEMENT_CHANNELS[int(sigma)]
        return cls(**{"total_channels": 192, "base_channels": 192 - enh, "width": 192,
                      "hyper_channels": 192, "profile": "paper", **kw})

    def to_dict(self):
        return asdict(self)


def split_latent(y, i: int, axis: int = 1):
    """Split channels ``[0, i)`` (base) from ``[i, C)`` (enhancement)."""
    c = y.shape[axis]
    if not 1 <= i <= c:
        raise ValueError(f"split index must be in [1, {c}], got {i}")
    if isinstance(y, torch.Tensor):
        return y.narrow(axis, 0, i), y.narrow(axis, i, c - i)
    return np.split(np.asarray(y), [i], axis=axis)


def merge_latent(base, enh, axis: int = 1):
    if isinstance(base, torch.Tensor):
        return torch.cat([base, enh], dim=axis)
    return np.concatenate([base, enh], axis=axis)


def check_aligned(h, w, multiple=ALIGN, what="input"):
    if h % multiple or w % multiple:
        raise ValueError(f"{what} dims {h}x{w} must be multiples of {multiple}; pad first")


def _ep_hidden(layer_channels, hyper_features):
    return 2 * layer_channels + hyper_features // 2


class LayerEntropyModel(nn.Module):
    """Causal context model plus entropy-parameter head for one latent layer."""

    def __init__(self, channels: int, hyper_features: int, kernel: int = 5):
        super().__init__()
        self.channels = channels
        self.context = MaskedConv2d(channels, 2 * channels, kernel)
        hidden = _ep_hidden(channels, hyper_features)
        self.params = nn.Sequential(
            nn.Conv2d(hyper_features + 2 * channels, hidden, 1), nn.LeakyReLU(),
            nn.Conv2d(hidden, hidden, 1), nn.LeakyReLU(),
            nn.Conv2d(hidden, 2 * channels, 1),
        )

    def forward(self, y_hat, hyper):
        """Means and scales for every element of ``y_hat`` in one pass."""
        out = self.params(torch.cat([hyper, self.context(y_hat)], dim=1))
        mu, raw = out.chunk(2, dim=1)
        return mu, SIGMA_MIN + F.softplus(raw)

    def stepper(self):
        return _LayerStepper(self)


class _LayerStepper:
    """Numpy float64 evaluation of :class:`LayerEntropyModel` one position at a time.

    Encoder and decoder both run this exact arithmetic, so the parameters they
    derive agree bit for bit.
    """

    def __init__(self, layer: LayerEntropyModel):
        w = layer.context.masked_weight().detach().double().numpy()
        self.channels = layer.channels
        self.kernel = w.shape[-1]
        self.ctx_w = w.reshape(w.shape[0], -1)
        self.ctx_b = layer.context.bias.detach().double().numpy()
        self.ep = [(m.weight.detach().double().numpy()[:, :, 0, 0], m.bias.detach().double().numpy())
                   for m in layer.params if isinstance(m, nn.Conv2d)]

    def __call__(self, window: np.ndarray, hyper_vec: np.ndarray):
        """``window`` is the (channels, k, k) neighbourhood centred on the position."""
        ctx = self.ctx_w @ window.reshape(-1) + self.ctx_b
        h = np.concatenate([hyper_vec, ctx])
        last = len(self.ep) - 1
        for k, (a, b) in enumerate(self.ep):
            h = a @ h + b
            if k < last:
                h = np.where(h > 0, h, 0.01 * h)
        c = self.channels
        return h[:c], SIGMA_MIN + np.logaddexp(0.0, h[c:])


class JICDModel(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = cfg = config
        n, c, i, nh = cfg.width, cfg.total_channels, cfg.base_channels, cfg.hyper_channels

        def analysis():
            layers = [conv(3, n), GDN(n), conv(n, n), GDN(n)]
            if cfg.attention:
                layers.append(AttentionBlock(n))
            layers += [conv(n, n), GDN(n), conv(n, c)]
            if cfg.attention:
                layers.append(AttentionBlock(c))
            return nn.Sequential(*layers)

        def synthesis(cin):
            layers = []
            if cfg.attention:
                layers.append(AttentionBlock(cin))
            layers += [deconv(cin, n), GDN(n, inverse=True), deconv(n, n), GDN(n, inverse=True)]
            if cfg.attention:
                layers.append(AttentionBlock(n))
            layers += [deconv(n, n), GDN(n, inverse=True), deconv(n, 3)]
            return nn.Sequential(*layers)

        self.g_a = analysis()
        # the base decoder's first layer takes exactly i channels
        self.g_s_base = synthesis(i)
        self.g_s_full = synthesis(c)
        self.h_a = nn.Sequential(
            conv(c, nh, 3, 1), nn.LeakyReLU(),
            conv(nh, nh), nn.LeakyReLU(),
            conv(nh, nh),
        )
        self.h_s = nn.Sequential(
            deconv(nh, nh), nn.LeakyReLU(),
            deconv(nh, nh * 3 // 2), nn.LeakyReLU(),
            conv(nh * 3 // 2, cfg.hyper_features, 3, 1),
        )
        self.prior_z = FactorizedPrior(nh)
        self.entropy_base = LayerEntropyModel(i, cfg.hyper_features, cfg.context_kernel)
        self.entropy_enh = (LayerEntropyModel(cfg.enhancement_channels, cfg.hyper_features, cfg.context_kernel)
                            if cfg.enhancement_channels else None)
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                fan_in = m.weight[0].numel() if isinstance(m, nn.Conv2d) else m.weight[:, 0].numel()
                nn.init.normal_(m.weight, 0.0, (1.0 / fan_in) ** 0.5)
                nn.init.zeros_(m.bias)

    # -- transforms ---------------------------------------------------------------

    def analysis(self, x: torch.Tensor) -> torch.Tensor:
        check_aligned(x.shape[-2], x.shape[-1])
        return self.g_a(x)

    def _synthesize(self, net, y_hat, expected, clamp):
        if y_hat.shape[1] != expected:
            raise ValueError(f"decoder expects {expected} latent channels, got {y_hat.shape[1]}")
        x = net(y_hat)
        return x.clamp(0.0, 1.0) if clamp else x

    def synthesize_base(self, y1_hat: torch.Tensor, clamp: bool = True) -> torch.Tensor:
        return self._synthesize(self.g_s_base, y1_hat, self.config.base_channels, clamp)

    def synthesize_full(self, y_hat: torch.Tensor, clamp: bool = True) -> torch.Tensor:
        return self._synthesize(self.g_s_full, y_hat, self.config.total_channels, clamp)

    def hyper_analysis(self, y: torch.Tensor) -> torch.Tensor:
        check_aligned(y.shape[-2], y.shape[-1], HYPER_STRIDE, "latent")
        return self.h_a(y)

    def hyper_synthesis(self, z_hat: torch.Tensor) -> torch.Tensor:
        return self.h_s(z_hat)

    def layer_model(self, layer: str) -> LayerEntropyModel:
        if layer == "base":
            return self.entropy_base
        if layer in ("enh", "enhancement"):
            if self.entropy_enh is None:
                raise ValueError("model has no enhancement channels")
            return self.entropy_enh
        raise ValueError(f"unknown layer {layer!r}")

    def entropy_params(self, layer: str, y_layer: torch.Tensor, hyper: torch.Tensor):
        return self.layer_model(layer)(y_layer, hyper)

    # -- training pass ------------------------------------------------------------

    def forward(self, x_noisy: torch.Tensor, generator: Optional[torch.Generator] = None):
        """Noise-surrogate pass returning reconstructions and likelihoods."""
        y = self.analysis(x_noisy)
        z = self.hyper_analysis(y)
        z_tilde = quantize(z, "train", generator=generator)
        z_lik = self.prior_z.likelihood(z_tilde)
        hyper = self.hyper_synthesis(z_tilde)
        y_tilde = quantize(y, "train", generator=generator)
        y1, y2 = split_latent(y_tilde, self.config.base_channels)
        mu1, s1 = self.entropy_base(y1, hyper)
        out = {
            "x_hat": self.synthesize_base(y1, clamp=False),
            "x_n_hat": self.synthesize_full(y_tilde, clamp=False),
            "likelihoods": {"side": z_lik, "base": gaussian_likelihood(y1, mu1, s1)},
        }
        if self.entropy_enh is not None:
            mu2, s2 = self.entropy_enh(y2, hyper)
            out["likelihoods"]["enh"] = gaussian_likelihood(y2, mu2, s2)
        return out


# -- checkpoints ----------------------------------------------------------------------

def model_id(model: JICDModel) -> int:
    """64-bit fingerprint of the configuration and every weight."""
    h = hashlib.sha256(json.dumps(model.config.to_dict(), sort_keys=True).encode())
    for name, t in sorted(model.state_dict().items()):
        h.update(name.encode())
        h.update(np.ascontiguousarray(t.detach().cpu().float().numpy()).tobytes())
    return int.from_bytes(h.digest()[:8], "little")


def save_checkpoint(path, model: JICDModel, extra: Optional[dict] = None) -> None:
    arrays = {f"w/{k}": v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    meta = {"version": CHECKPOINT_VERSION, "config": model.config.to_dict(), "extra": extra or {}}
    arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def read_checkpoint(path):
    """Return ``(meta, state_dict)`` without building a model."""
    with np.load(path, allow_pickle=False) as data:
        if "__meta__" not in data:
            raise ValueError(f"{path}: not a JICD checkpoint")
        meta = json.loads(data["__meta__"].tobytes().decode())
        state = {k[2:]: torch.from_numpy(np.array(data[k])) for k in data.files if k.startswith("w/")}
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    return meta, state


def load_checkpoint(path) -> JICDModel:
    meta, state = read_checkpoint(path)
    model = JICDModel(ModelConfig(**meta["config"]))
    model.load_state_dict(state)
    model.eval()
    return model
