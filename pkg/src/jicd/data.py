"""Dataset manifests and a small bundled corpus for desk-scale experiments."""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .image import load_png

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}


@dataclass
class DatasetManifest:
    label: str
    items: List[Tuple[str, Optional[str]]] = field(default_factory=list)

    def __len__(self):
        return len(self.items)

    def check(self):
        for clean, noisy in self.items:
            for p in (clean, noisy):
                if p is not None and not Path(p).is_file():
                    raise FileNotFoundError(p)
        return self

    def load_clean(self):
        return [load_png(c) for c, _ in self.items]

    def to_json(self):
        return json.dumps({"label": self.label,
                           "items": [{"clean": c, "noisy": n} for c, n in self.items]}, indent=1)

    @classmethod
    def from_json(cls, text, root=None):
        d = json.loads(text)
        root = Path(root) if root is not None else None

        def resolve(p):
            if p is None or root is None or Path(p).is_absolute():
                return p
            return str(root / p)

        return cls(d.get("label", "dataset"),
                   [(resolve(it["clean"]), resolve(it.get("noisy"))) for it in d["items"]])


def load_manifest(path) -> DatasetManifest:
    """A JSON manifest file, or a directory whose image files become clean entries."""
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        return DatasetManifest(path.name, [(str(p), None) for p in files])
    return DatasetManifest.from_json(path.read_text(), root=path.parent)


TRAIN_IMAGES = ("astronaut", "rocket", "immunohistochemistry", "hubble_deep_field", "retina")
HELDOUT_IMAGES = ("coffee", "chelsea")


def _skimage(name):
    from skimage import data
    return getattr(data, name)()[..., :3] / 255.0


def tile_crops(images, size: int, stride: Optional[int] = None) -> list:
    """Non-overlapping (or ``stride``-spaced) square crops from each image."""
    stride = stride or size
    out = []
    for img in images:
        h, w = img.shape[:2]
        for top in range(0, h - size + 1, stride):
            for left in range(0, w - size + 1, stride):
                out.append(np.ascontiguousarray(img[top:top + size, left:left + size]))
    return out


def sample_corpus(split: str = "train", size: int = 128, limit: Optional[int] = None, seed: int = 0) -> list:
    """Crops of the natural images shipped with scikit-image.

    ``train`` and ``heldout`` draw from disjoint source images. Crops are
    shuffled with ``seed`` before ``limit`` is applied.
    """
    names = {"train": TRAIN_IMAGES, "heldout": HELDOUT_IMAGES}[split]
    crops = tile_crops([_skimage(n) for n in names], size)
    # drop nearly flat crops (black retina borders, empty sky)
    crops = [c for c in crops if c.std() > 0.02]
    order = np.random.default_rng(seed).permutation(len(crops))
    crops = [crops[k] for k in order]
    return crops[:limit] if limit else crops
