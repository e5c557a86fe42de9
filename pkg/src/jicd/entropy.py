"""Quantization, discretized entropy models and rate estimation.

The latent is modelled by per-element discretized Gaussians (mean and scale
from the context model and hyperprior); the hyper-latent by a per-channel
non-parametric factorized density. Both have a torch path for training and a
numpy path that builds the integer frequency tables used by the range coder.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from scipy.special import ndtr

from .rangecoder import TOTAL, RangeDecoder, RangeEncoder

SIGMA_MIN = 0.11
P_MIN = 2.0 ** -32
# Gaussian tables cover offsets within TAIL_SIGMAS scales of the mean; rarer
# values go through an escape bin.
TAIL_SIGMAS = 8.0
MAX_HALF_SUPPORT = 2048
HYPER_MAX_HALF_SUPPORT = 256


def quantize(v, mode: str = "infer", mu=0.0, generator=None):
    """Uniform-noise surrogate (``train``) or mean-centred rounding (``infer``).

    Works on torch tensors and numpy arrays.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if isinstance(v, torch.Tensor):
        if mode == "train":
            u = torch.rand(v.shape, generator=generator, dtype=v.dtype, device=v.device) - 0.5
            return v + u
        return torch.round(v - mu) + mu
    v = np.asarray(v, dtype=np.float64)
    if mode == "train":
        rng = generator if isinstance(generator, np.random.Generator) else np.random.default_rng(generator)
        return v + rng.uniform(-0.5, 0.5, size=v.shape)
    return np.round(v - mu) + mu


def gaussian_bin_probability(v_hat, mu, sigma, floor: bool = True):
    """Mass of the unit bin centred on ``v_hat`` under N(mu, sigma^2).

    Floored at 2**-32 unless ``floor`` is false.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < SIGMA_MIN):
        raise ValueError(f"sigma below the scale floor {SIGMA_MIN}")
    d = np.abs(np.asarray(v_hat, dtype=np.float64) - np.asarray(mu, dtype=np.float64))
    # evaluate on the lower tail for accuracy far from the mean
    p = ndtr((0.5 - d) / sigma) - ndtr((-0.5 - d) / sigma)
    return np.maximum(p, P_MIN) if floor else p


def _std_cdf(x):
    return 0.5 * torch.erfc(-x * (2 ** -0.5))


def gaussian_likelihood(y_tilde: torch.Tensor, mu: torch.Tensor, sigma: torch.Tensor) -> torch.Tensor:
    """Differentiable counterpart of :func:`gaussian_bin_probability`."""
    d = torch.abs(y_tilde - mu)
    p = _std_cdf((0.5 - d) / sigma) - _std_cdf((-0.5 - d) / sigma)
    return torch.clamp(p, min=P_MIN)


def neg_log2_sum(p):
    if isinstance(p, torch.Tensor):
        return -torch.log2(p).sum()
    p = np.asarray(p, dtype=np.float64)
    if p.size and (np.any(p <= 0) or np.any(p > 1)):
        raise ValueError("probabilities must lie in (0, 1]")
    return float(-np.log2(p).sum()) if p.size else 0.0


@dataclass
class RateEstimate:
    side: float
    base: float
    enh: float

    @property
    def latent(self):
        return self.base + self.enh

    @property
    def total(self):
        return self.side + self.base + self.enh


def estimate_rate(latent_probs, hyper_probs) -> RateEstimate:
    """Ideal code length in bits, split into side, base and enhancement terms.

    ``latent_probs`` is either a single array (counted as base) or a mapping
    with ``base`` and ``enh`` entries.
    """
    if isinstance(latent_probs, dict):
        base = neg_log2_sum(latent_probs.get("base", np.ones(0)))
        enh = neg_log2_sum(latent_probs.get("enh", np.ones(0)))
    else:
        base, enh = neg_log2_sum(latent_probs), 0.0
    return RateEstimate(side=neg_log2_sum(hyper_probs), base=base, enh=enh)


class FactorizedPrior(nn.Module):
    """Per-channel learned monotone CDF for the hyper-latent.

    The cumulative is a composition of softplus-positive matrices and
    tanh-gated nonlinearities, which keeps it strictly increasing.
    """

    def __init__(self, channels: int, filters=(3, 3, 3), init_scale: float = 10.0):
        super().__init__()
        self.channels = int(channels)
        dims = (1, *filters, 1)
        scale = init_scale ** (1.0 / (len(filters) + 1))
        self.matrices = nn.ParameterList()
        self.biases = nn.ParameterList()
        self.factors = nn.ParameterList()
        for k in range(len(filters) + 1):
            init = math.log(math.expm1(1.0 / scale / dims[k + 1]))
            self.matrices.append(nn.Parameter(torch.full((channels, dims[k + 1], dims[k]), init)))
            self.biases.append(nn.Parameter(torch.rand(channels, dims[k + 1], 1) - 0.5))
            if k < len(filters):
                self.factors.append(nn.Parameter(torch.zeros(channels, dims[k + 1], 1)))

    def logits_cumulative(self, x: torch.Tensor) -> torch.Tensor:
        """``x`` has shape (C, 1, n); returns logits of the CDF at each point."""
        logits = x
        for k in range(len(self.matrices)):
            logits = torch.matmul(F.softplus(self.matrices[k]), logits) + self.biases[k]
            if k < len(self.factors):
                logits = logits + torch.tanh(self.factors[k]) * torch.tanh(logits)
        return logits

    def cdf(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits_cumulative(x))

    def likelihood(self, z: torch.Tensor) -> torch.Tensor:
        """Unit-bin probabilities for ``z`` of shape (B, C, H, W)."""
        b, c, h, w = z.shape
        v = z.permute(1, 0, 2, 3).reshape(c, 1, -1)
        lower = self.logits_cumulative(v - 0.5)
        upper = self.logits_cumulative(v + 0.5)
        # subtract in the tail where the sigmoid is not saturated
        sign = -torch.sign(lower + upper).detach()
        p = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        p = torch.clamp(p, min=P_MIN)
        return p.reshape(c, b, h, w).permute(1, 0, 2, 3)

    @torch.no_grad()
    def integer_pmf(self, half_support: int = HYPER_MAX_HALF_SUPPORT) -> np.ndarray:
        """Bin masses for integers -half_support..half_support, shape (C, 2K+1)."""
        k = torch.arange(-half_support, half_support + 1, dtype=self.matrices[0].dtype)
        grid = k.reshape(1, 1, -1).expand(self.channels, 1, -1)
        lower = self.logits_cumulative(grid - 0.5)
        upper = self.logits_cumulative(grid + 0.5)
        sign = -torch.sign(lower + upper)
        p = torch.abs(torch.sigmoid(sign * upper) - torch.sigmoid(sign * lower))
        return p.reshape(self.channels, -1).double().numpy()


# -- integer tables for the range coder -----------------------------------------

def pmf_to_cdf(pmf: np.ndarray) -> np.ndarray:
    """Quantize rows of probabilities to integer CDFs summing to ``TOTAL``.

    Every bin keeps a frequency of at least one. Rows may be zero-padded on the
    right; ``lengths`` of the valid part are inferred from ``pmf > 0`` runs, so
    callers pass strictly positive masses for valid bins.
    """
    pmf = np.atleast_2d(np.asarray(pmf, dtype=np.float64))
    valid = pmf > 0
    nbins = valid.sum(axis=1, keepdims=True)
    mass = np.where(valid, pmf, 0.0)
    mass = mass / mass.sum(axis=1, keepdims=True)
    freq = np.where(valid, np.floor(mass * (TOTAL - nbins)).astype(np.int64) + 1, 0)
    deficit = TOTAL - freq.sum(axis=1)
    rows = np.arange(freq.shape[0])
    freq[rows, np.argmax(mass, axis=1)] += deficit
    cdf = np.zeros((freq.shape[0], freq.shape[1] + 1), dtype=np.int64)
    np.cumsum(freq, axis=1, out=cdf[:, 1:])
    return cdf


def gaussian_half_support(sigma: np.ndarray) -> np.ndarray:
    return np.clip(np.ceil(TAIL_SIGMAS * np.asarray(sigma, dtype=np.float64)), 1, MAX_HALF_SUPPORT).astype(np.int64)


def gaussian_tables(sigma: np.ndarray):
    """Integer CDF tables for mean-centred Gaussian symbols.

    Row ``r`` covers offsets ``-L_r..L_r`` followed by one escape bin. Returns
    ``(cdfs, half_supports)`` where ``cdfs`` is a list of python int lists.
    """
    sigma = np.asarray(sigma, dtype=np.float64).ravel()
    if np.any(sigma < SIGMA_MIN):
        raise ValueError(f"sigma below the scale floor {SIGMA_MIN}")
    half = gaussian_half_support(sigma)
    width = 2 * int(half.max(initial=1)) + 2
    offs = np.arange(width)[None, :] - half[:, None]
    s = sigma[:, None]
    d = np.abs(offs)
    p = ndtr((0.5 - d) / s) - ndtr((-0.5 - d) / s)
    nsym = 2 * half + 1
    col = np.arange(width)[None, :]
    p = np.where(col < nsym[:, None], np.maximum(p, P_MIN), 0.0)
    tail = 2.0 * ndtr(-(half + 0.5) / sigma)
    p[np.arange(len(sigma)), nsym] = np.maximum(tail, P_MIN)
    cdf = pmf_to_cdf(p)
    tables = [row[: n + 2].tolist() for row, n in zip(cdf, nsym)]
    return tables, half


def hyper_tables(prior: FactorizedPrior, tail_mass: float = 1e-9):
    """Per-channel tables for the hyper-latent, same layout as :func:`gaussian_tables`."""
    K = HYPER_MAX_HALF_SUPPORT
    pmf = prior.integer_pmf(K)
    tables, halves = [], []
    for row in pmf:
        # smallest symmetric support whose outside mass is below tail_mass
        inside = np.cumsum(row)
        outside = np.array([1.0 - (inside[K + h] - (inside[K - h - 1] if K - h - 1 >= 0 else 0.0))
                            for h in range(K + 1)])
        ok = np.nonzero(outside < tail_mass)[0]
        h = int(ok[0]) if ok.size else K
        h = max(h, 1)
        p = np.maximum(row[K - h: K + h + 1], P_MIN)
        p = np.append(p, max(1.0 - p.sum(), P_MIN))
        tables.append(pmf_to_cdf(p)[0].tolist())
        halves.append(h)
    return tables, np.asarray(halves, dtype=np.int64)


# -- symbol coding with escapes ---------------------------------------------------

def encode_offset(enc: RangeEncoder, value: int, cdf, half: int):
    """Code an integer offset; values outside ``[-half, half]`` use the escape bin."""
    if -half <= value <= half:
        enc.encode_symbol(value + half, cdf)
        return
    enc.encode_symbol(2 * half + 1, cdf)
    enc.encode_bits(1 if value < 0 else 0, 1)
    m = abs(value) - half  # >= 1, Elias-gamma coded
    n = m.bit_length()
    enc.encode_bits(0, n - 1)
    enc.encode_bits(m, n)


def decode_offset(dec: RangeDecoder, cdf, half: int) -> int:
    s = dec.decode_symbol(cdf)
    if s <= 2 * half:
        return s - half
    negative = dec.decode_bits(1)
    zeros = 0
    while dec.decode_bits(1) == 0:
        zeros += 1
        if zeros > 62:
            raise ValueError("corrupted escape code in range-coded stream")
    m = (1 << zeros) | dec.decode_bits(zeros)
    v = m + half
    return -v if negative else v


def offset_cost_bits(value: int, cdf, half: int) -> float:
    """Ideal code length of :func:`encode_offset` under the quantized table."""
    if -half <= value <= half:
        s = value + half
        return -math.log2((cdf[s + 1] - cdf[s]) / TOTAL)
    s = 2 * half + 1
    m = abs(value) - half
    return -math.log2((cdf[s + 1] - cdf[s]) / TOTAL) + 1 + 2 * m.bit_length() - 1
