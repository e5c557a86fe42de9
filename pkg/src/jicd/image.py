"""Image buffers: H x W x 3 float arrays in [0, 1] backed by 8-bit storage."""

from pathlib import Path

import numpy as np
from PIL import Image


def check_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 3 or x.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got {x.shape}")
    return x


def quantize_8bit(values255: np.ndarray) -> np.ndarray:
    """Clip to [0, 255] and round half away from zero to integer levels."""
    clipped = np.clip(values255, 0.0, 255.0)
    # non-negative after clipping, so floor(v + 0.5) is round-half-away-from-zero
    return np.floor(clipped + 0.5)


def to_uint8(x: np.ndarray) -> np.ndarray:
    return quantize_8bit(np.asarray(x, dtype=np.float64) * 255.0).astype(np.uint8)


def from_uint8(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) / 255.0


def load_png(path) -> np.ndarray:
    """Read an image file as a float RGB buffer in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"))
    return from_uint8(arr)


def save_png(path, x: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(check_image(x))).save(path, format="PNG")


def pad_to_multiple(x: np.ndarray, multiple: int = 64):
    """Reflect-pad bottom and right up to the next multiple.

    Returns ``(padded, (h, w))``. Images smaller than the pad amount are
    reflected repeatedly (numpy ``symmetric`` tiling handles any size).
    """
    x = check_image(x)
    h, w = x.shape[:2]
    ph, pw = -h % multiple, -w % multiple
    if ph == 0 and pw == 0:
        return x, (h, w)
    mode = "reflect" if ph < h and pw < w else "symmetric"
    return np.pad(x, ((0, ph), (0, pw), (0, 0)), mode=mode), (h, w)


def pad_to_64(x: np.ndarray):
    return pad_to_multiple(x, 64)


def crop_back(y: np.ndarray, size) -> np.ndarray:
    h, w = size
    return y[:h, :w]
