"""Rate-distortion training.

Loss per batch is ``bpp + lambda * D`` with
``D = (1 - w) * MSE(clean, denoised) + w * MSE(noisy, reconstruction)``,
both MSEs on the 0-255 scale. Noise is synthesized fresh for every crop of
every step from a seed stream keyed by (seed, step, crop).
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from .model import CHECKPOINT_VERSION, JICDModel, ModelConfig, save_checkpoint
from .noise import NoiseSpec, image_rng, sample_sigma, synth

# Table I
LAMBDA_LADDER = (0.0035, 0.0067, 0.013, 0.025, 0.0483, 0.09)
TASK_WEIGHT = 0.05


@dataclass
class TrainConfig:
    lmbda: float = 0.013
    w: float = TASK_WEIGHT
    crop: int = 256
    batch: int = 16
    epochs: int = 300
    steps_per_epoch: Optional[int] = None
    lr_init: float = 1e-4
    lr_factor: float = 0.5
    plateau_patience: int = 10
    plateau_threshold: float = 1e-3
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    model: ModelConfig = field(default_factory=ModelConfig.paper)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must be in [0, 1], got {self.w}")
        if self.lmbda <= 0:
            raise ValueError(f"lambda must be > 0, got {self.lmbda}")
        if self.crop % 64:
            raise ValueError(f"crop must be a multiple of 64, got {self.crop}")

    @classmethod
    def toy(cls, **kw):
        """Desk-scale settings: small model, 64x64 crops, faster learning rate."""
        base = {"crop": 64, "batch": 8, "epochs": 20, "steps_per_epoch": 100, "lr_init": 1e-3,
                "plateau_patience": 3, "model": ModelConfig.toy()}
        base.update(kw)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["noise"]["sigma_set"] = list(d["noise"]["sigma_set"])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["noise"] = NoiseSpec(**d.get("noise", {}))
        d["model"] = ModelConfig(**d.get("model", {}))
        return cls(**d)


@dataclass
class LossBreakdown:
    total: float
    rate_side: float
    rate_base: float
    rate_enh: float
    mse_denoise: float
    mse_noisy: float
    distortion: float
    lmbda: float
    num_pixels: int

    @property
    def rate_bits(self):
        return self.rate_side + self.rate_base + self.rate_enh

    @property
    def bpp(self):
        return self.rate_bits / self.num_pixels

    def recompute(self):
        return rd_loss(self.rate_bits, self.distortion, self.lmbda, self.num_pixels)


def mse255(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {tuple(a.shape)} vs {tuple(b.shape)}")
    d = (a - b) * 255.0
    return (d * d).mean()


def distortion(x, x_hat, x_n, x_n_hat, w: float = TASK_WEIGHT):
    """Weighted two-task MSE on the 0-255 scale (torch or numpy inputs)."""
    return (1.0 - w) * mse255(x, x_hat) + w * mse255(x_n, x_n_hat)


def rd_loss(rate_bits, d, lmbda: float, num_pixels: int):
    if lmbda <= 0:
        raise ValueError(f"lambda must be > 0, got {lmbda}")
    if not isinstance(rate_bits, torch.Tensor) and rate_bits < 0:
        raise ValueError("rate must be non-negative")
    return rate_bits / num_pixels + lmbda * d


def sigma_for_step(noise: NoiseSpec, seed: int, step: int) -> float:
    if noise.kind == "variable_awgn":
        return sample_sigma(noise.sigma_set, image_rng(seed, step, 1 << 20))
    return noise.sigma


def make_noisy_batch(clean: np.ndarray, noise: NoiseSpec, seed: int, step: int) -> np.ndarray:
    sigma = sigma_for_step(noise, seed, step)
    return np.stack([synth(c, noise, rng=image_rng(seed, step, k), sigma=sigma)
                     for k, c in enumerate(clean)])


def _nchw(batch: np.ndarray, dtype) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(batch.transpose(0, 3, 1, 2))).to(dtype)


def compute_loss(model: JICDModel, clean: torch.Tensor, noisy: torch.Tensor, config: TrainConfig,
                 generator: Optional[torch.Generator] = None):
    """Differentiable loss and its breakdown for one (clean, noisy) batch."""
    out = model(noisy, generator=generator)
    lik = out["likelihoods"]
    rates = {k: -torch.log2(v).sum() for k, v in lik.items()}
    zero = clean.new_zeros(())
    r_total = rates["side"] + rates["base"] + rates.get("enh", zero)
    mse_d = mse255(clean, out["x_hat"])
    mse_n = mse255(noisy, out["x_n_hat"])
    d = (1.0 - config.w) * mse_d + config.w * mse_n
    num_pixels = clean.shape[0] * clean.shape[2] * clean.shape[3]
    loss = rd_loss(r_total, d, config.lmbda, num_pixels)
    parts = LossBreakdown(
        total=loss.item(), rate_side=rates["side"].item(), rate_base=rates["base"].item(),
        rate_enh=rates.get("enh", zero).item(), mse_denoise=mse_d.item(), mse_noisy=mse_n.item(),
        distortion=d.item(), lmbda=config.lmbda, num_pixels=num_pixels)
    return loss, parts


def train_step(model: JICDModel, optimizer: torch.optim.Optimizer, clean: np.ndarray,
               config: TrainConfig, step: int) -> LossBreakdown:
    """One optimizer step on a batch of clean crops (B, H, W, 3) in [0, 1].

    The model is updated in place.
    """
    dtype = next(model.parameters()).dtype
    noisy = make_noisy_batch(clean, config.noise, config.seed, step)
    gen = torch.Generator().manual_seed(int(image_rng(config.seed, step, 1 << 21).integers(2 ** 62)))
    model.train()
    optimizer.zero_grad(set_to_none=True)
    loss, parts = compute_loss(model, _nchw(clean, dtype), _nchw(noisy, dtype), config, gen)
    if not math.isfinite(parts.total):
        raise FloatingPointError(f"non-finite loss at step {step}: {parts}")
    loss.backward()
    optimizer.step()
    return parts


class PlateauSchedule:
    """Multiply the learning rate by ``factor`` once ``patience`` epochs pass
    without a relative improvement of at least ``threshold``."""

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 10, threshold: float = 1e-3):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.threshold = threshold
        self.best = math.inf
        self.stale = 0

    def update(self, loss: float) -> float:
        if loss < self.best * (1.0 - self.threshold) or self.best == math.inf:
            self.best = loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.lr *= self.factor
                self.stale = 0
        return self.lr

    def state_dict(self):
        return dict(vars(self))

    def load_state_dict(self, state):
        vars(self).update(state)


def random_crops(images: Sequence[np.ndarray], size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty((count, size, size, 3))
    for k in range(count):
        img = images[rng.integers(len(images))]
        h, w = img.shape[:2]
        if h < size or w < size:
            img = np.pad(img, ((0, max(0, size - h)), (0, max(0, size - w)), (0, 0)), mode="symmetric")
            h, w = img.shape[:2]
        top = rng.integers(h - size + 1)
        left = rng.integers(w - size + 1)
        out[k] = img[top:top + size, left:left + size]
    return out


def _set_lr(optimizer, lr):
    for g in optimizer.param_groups:
        g["lr"] = lr


def fit(images: Sequence[np.ndarray], config: TrainConfig, out_dir=None, resume: bool = True,
        model: Optional[JICDModel] = None, log=None, epochs: Optional[int] = None, log_path=None):
    """Train for ``config.epochs`` epochs (or ``epochs`` if given).

    ``images`` are clean [0, 1] arrays; each step draws ``config.batch`` random
    crops. With ``out_dir`` a checkpoint is written every epoch and training
    resumes from it. Per-step records are appended as JSON lines to
    ``log_path`` (default ``out_dir/train_log.jsonl``). Returns ``(model, records)`` where records are the
    per-step log dictionaries of this call.
    """
    if len(images) == 0:
        raise ValueError("training set is empty")
    torch.manual_seed(config.seed)
    model = model if model is not None else JICDModel(config.model)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr_init)
    schedule = PlateauSchedule(config.lr_init, config.lr_factor, config.plateau_patience,
                               config.plateau_threshold)
    steps_per_epoch = config.steps_per_epoch or max(1, len(images) // config.batch)
    start_epoch = 0
    state_path = Path(out_dir) / "train_state.pt" if out_dir is not None else None
    if state_path is not None and resume and state_path.exists():
        state = torch.load(state_path, weights_only=False)
        if state.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"{state_path}: checkpoint version mismatch")
        model.load_state_dict(state["model"])
        optimizer.load_state_dict(state["optimizer"])
        schedule.load_state_dict(state["schedule"])
        start_epoch = state["epoch"]
    _set_lr(optimizer, schedule.lr)

    if log_path is None and out_dir is not None:
        log_path = Path(out_dir) / "train_log.jsonl"
    log_file = open(log_path, "a") if log_path is not None else None
    records = []
    try:
        for epoch in range(start_epoch, epochs if epochs is not None else config.epochs):
            epoch_losses = []
            for k in range(steps_per_epoch):
                step = epoch * steps_per_epoch + k
                crops = random_crops(images, config.crop, config.batch, image_rng(config.seed, step, 1 << 22))
                parts = train_step(model, optimizer, crops, config, step)
                epoch_losses.append(parts.total)
                rec = {"step": step, "L": parts.total, "R_side": parts.rate_side, "R_base": parts.rate_base,
                       "R_enh": parts.rate_enh, "mse_denoise": parts.mse_denoise,
                       "mse_noisy": parts.mse_noisy, "lr": optimizer.param_groups[0]["lr"]}
                records.append(rec)
                if log_file is not None:
                    log_file.write(json.dumps(rec) + "\n")
                if log is not None:
                    log(rec)
            _set_lr(optimizer, schedule.update(float(np.mean(epoch_losses))))
            if log_file is not None:
                log_file.flush()
            if out_dir is not None:
                torch.save({"version": CHECKPOINT_VERSION, "model": model.state_dict(),
                            "optimizer": optimizer.state_dict(), "schedule": schedule.state_dict(),
                            "epoch": epoch + 1, "config": config.to_dict()}, state_path)
                save_checkpoint(Path(out_dir) / "model.npz", model,
                                extra={"train": config.to_dict(), "epoch": epoch + 1})
    finally:
        if log_file is not None:
            log_file.close()
    model.eval()
    return model, records


__all__ = ["TrainConfig", "LossBreakdown", "LAMBDA_LADDER", "distortion", "rd_loss", "train_step",
           "fit", "PlateauSchedule", "compute_loss", "sigma_for_step", "random_crops"]
