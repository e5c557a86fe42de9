"""Synthetic noise for training and evaluation.

Two families are supported: additive white Gaussian noise applied in the
8-bit domain (clipped and quantized, the way noisy photos are stored) and a
heteroscedastic Poissonian-Gaussian model whose variance grows linearly with
intensity.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .image import check_image, quantize_8bit

# Placeholder per-channel coefficients for the practical simulator; the fitted
# camera parameters are not public.
DEFAULT_PRACTICAL_A = 0.01
DEFAULT_PRACTICAL_B = 0.0001

KINDS = ("awgn", "practical", "variable_awgn")


@dataclass
class NoiseSpec:
    kind: str = "awgn"
    sigma: float = 50.0
    sigma_set: Sequence[float] = field(default_factory=lambda: (15.0, 25.0, 50.0))
    a: float = DEFAULT_PRACTICAL_A
    b: float = DEFAULT_PRACTICAL_B
    seed: int = 0
    exact_poisson: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {KINDS}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma_set = tuple(float(s) for s in self.sigma_set)
        if not self.sigma_set or min(self.sigma_set) < 0:
            raise ValueError("sigma_set must be nonempty with non-negative entries")
        if self.a < 0 or self.b < 0:
            raise ValueError("a and b must be >= 0")


def image_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, image index, ...) streams."""
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def synth_awgn(clean: np.ndarray, sigma: float, seed=0) -> np.ndarray:
    """Add Gaussian noise of std ``sigma`` (8-bit units), then clip and quantize.

    Returns values on the k/255 grid.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    clean = check_image(clean, "clean")
    rng = _as_rng(seed)
    noise = rng.standard_normal(clean.shape) * float(sigma)
    return quantize_8bit(255.0 * clean + noise) / 255.0


def synth_practical(clean: np.ndarray, a: float = DEFAULT_PRACTICAL_A,
                    b: float = DEFAULT_PRACTICAL_B, seed=0,
                    exact_poisson: bool = False) -> np.ndarray:
    """Poissonian-Gaussian noise with variance ``a*x + b`` on [0, 1] intensities.

    ``a`` and ``b`` may be scalars or per-channel length-3 sequences. By default
    the Poisson part is approximated by a Gaussian of matching variance; with
    ``exact_poisson`` it is sampled as ``a * Poisson(x / a)``.
    """
    clean = check_image(clean, "clean")
    a = np.broadcast_to(np.asarray(a, dtype=np.float64), (3,))
    b = np.broadcast_to(np.asarray(b, dtype=np.float64), (3,))
    if np.any(a < 0) or np.any(b < 0):
        raise ValueError("a and b must be >= 0")
    rng = _as_rng(seed)
    x = np.clip(clean.astype(np.float64), 0.0, 1.0)
    if exact_poisson:
        signal = np.where(a > 0, a * rng.poisson(x / np.where(a > 0, a, 1.0)), x)
        noisy = signal + rng.standard_normal(x.shape) * np.sqrt(b)
    else:
        noisy = x + rng.standard_normal(x.shape) * np.sqrt(a * x + b)
    return quantize_8bit(255.0 * noisy) / 255.0


def sample_sigma(sigma_set: Sequence[float], rng: np.random.Generator) -> float:
    """Uniform draw from the sigma set (one draw per training iteration)."""
    return float(sigma_set[rng.integers(len(sigma_set))])


def synth(clean: np.ndarray, spec: NoiseSpec, rng=None, sigma: Optional[float] = None) -> np.ndarray:
    """Apply the noise described by ``spec``.

    For ``variable_awgn`` the caller normally draws ``sigma`` once per batch;
    if it is omitted one is drawn here from ``rng``.
    """
    rng = _as_rng(spec.seed if rng is None else rng)
    if spec.kind == "awgn":
        return synth_awgn(clean, spec.sigma if sigma is None else sigma, rng)
    if spec.kind == "variable_awgn":
        if sigma is None:
            sigma = sample_sigma(spec.sigma_set, rng)
        return synth_awgn(clean, sigma, rng)
    return synth_practical(clean, spec.a, spec.b, rng, exact_poisson=spec.exact_poisson)


def estimate_sigma(noisy: np.ndarray, clean: np.ndarray) -> float:
    """Noise std in 8-bit units: std of ``255 * (noisy - clean)`` over all samples."""
    noisy = np.asarray(noisy, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    if noisy.shape != clean.shape:
        raise ValueError(f"dimension mismatch: {noisy.shape} vs {clean.shape}")
    if noisy.ndim >= 2 and noisy.shape[0] * noisy.shape[1] <= 1:
        warnings.warn("sigma estimate from a single pixel is degenerate", RuntimeWarning)
    return float(np.std(255.0 * (noisy - clean)))
