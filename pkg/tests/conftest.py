import hashlib
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from jicd.model import JICDModel, ModelConfig  # noqa: E402

TINY = ModelConfig(total_channels=12, base_channels=8, width=12, hyper_channels=8, profile="toy")


def make_model(config=TINY, seed=0):
    torch.manual_seed(seed)
    return JICDModel(config).eval()


@pytest.fixture(scope="session")
def tiny_model():
    return make_model()


@pytest.fixture(scope="session")
def toy_model():
    return make_model(ModelConfig.toy())


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def smooth_image(h, w, seed=0):
    """Low-frequency random colour field in [0, 1]."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w] / max(h, w)
    img = np.zeros((h, w, 3))
    for c in range(3):
        for _ in range(4):
            fy, fx, ph = r.uniform(0.5, 4, 2).tolist() + [r.uniform(0, 6.3)]
            img[..., c] += np.sin(2 * np.pi * (fy * yy + fx * xx) + ph)
    img = (img - img.min()) / (img.max() - img.min() + 1e-12)
    return 0.15 + 0.7 * img


def source_digest():
    """Hash of the package sources; keys cached trained models."""
    h = hashlib.sha256()
    root = Path(__file__).parents[1] / "src" / "jicd"
    for p in sorted(root.glob("*.py")):
        h.update(p.read_bytes())
    return h.hexdigest()[:16]


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
