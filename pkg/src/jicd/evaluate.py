"""Metrics, bitrate accounting, rate-PSNR curves and BD-rate."""

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .bitstream import OVERHEAD_BYTES, ScalableBitstream
from .codec import decode_base, decode_full, encode_image
from .image import check_image, crop_back, pad_to_64
from .model import JICDModel
from .noise import NoiseSpec, image_rng, synth

PSNR_CAP = 100.0
TASKS = ("denoise", "noisy_recon")

__all__ = ["pad_to_64", "crop_back", "psnr", "bpp_accounting", "layer_bpp", "RDPoint", "RDCurve",
           "BDRateReport", "bd_rate", "evaluate", "write_curves", "read_curves", "plot_curves",
           "format_bd_table"]


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR in dB for [0, 1] images with a 255 peak; 100 dB when identical."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    mse = np.mean((255.0 * (a - b)) ** 2)
    if mse == 0:
        return PSNR_CAP
    return float(min(PSNR_CAP, 10.0 * np.log10(255.0 ** 2 / mse)))


def layer_bpp(header_bytes: int, side: int, base: int, enh: int, height: int, width: int):
    """Base and full bitrates; header and side bytes are charged to the base layer."""
    area = height * width
    if area <= 0:
        raise ValueError("zero-area image")
    base_bpp = 8.0 * (header_bytes + side + base) / area
    return {"base_bpp": base_bpp, "full_bpp": base_bpp + 8.0 * enh / area}


def bpp_accounting(bs: ScalableBitstream, orig_size=None):
    h, w = orig_size if orig_size is not None else (bs.orig_h, bs.orig_w)
    return layer_bpp(OVERHEAD_BYTES, len(bs.side), len(bs.base), len(bs.enhancement), h, w)


@dataclass
class RDPoint:
    bpp: float
    psnr: float
    task: str
    model_id: str = ""
    lmbda: Optional[float] = None
    dataset: str = ""


@dataclass
class RDCurve:
    points: List[RDPoint] = field(default_factory=list)

    def __post_init__(self):
        self.points = sorted(self.points, key=lambda p: p.bpp)

    @property
    def rates(self):
        return np.array([p.bpp for p in self.points])

    @property
    def psnrs(self):
        return np.array([p.psnr for p in self.points])

    @classmethod
    def from_arrays(cls, bpp, psnr_db, task="denoise", **kw):
        return cls([RDPoint(float(r), float(q), task, **kw) for r, q in zip(bpp, psnr_db)])

    def validate(self, min_points: int = 4):
        r = self.rates
        if len(r) < min_points:
            raise ValueError(f"curve needs at least {min_points} points, has {len(r)}")
        if np.any(r <= 0):
            raise ValueError("rates must be positive")
        if np.any(np.diff(r) <= 0):
            raise ValueError("curve rates must be strictly increasing")
        return self


@dataclass
class BDRateReport:
    percent: float
    overlap: tuple
    anchor_residual: float
    test_residual: float


def _cubic_fit(quality, log_rate):
    coeffs, residuals, *_ = np.polyfit(quality, log_rate, 3, full=True)
    return coeffs, float(residuals[0]) if len(residuals) else 0.0


def bd_rate(anchor: RDCurve, test: RDCurve) -> BDRateReport:
    """Bjontegaard delta rate of ``test`` against ``anchor`` in percent.

    Cubic fits of log10(rate) as a function of PSNR are integrated over the
    common PSNR interval. Negative means ``test`` needs less rate.
    """
    anchor.validate()
    test.validate()
    lo = max(anchor.psnrs.min(), test.psnrs.min())
    hi = min(anchor.psnrs.max(), test.psnrs.max())
    if not hi > lo:
        raise ValueError(f"PSNR ranges do not overlap ({lo:.3f} >= {hi:.3f})")
    pa, ra = _cubic_fit(anchor.psnrs, np.log10(anchor.rates))
    pt, rt = _cubic_fit(test.psnrs, np.log10(test.rates))
    ia, it = np.polyint(pa), np.polyint(pt)
    avg_diff = ((np.polyval(it, hi) - np.polyval(it, lo)) - (np.polyval(ia, hi) - np.polyval(ia, lo))) / (hi - lo)
    return BDRateReport(float((10.0 ** avg_diff - 1.0) * 100.0), (float(lo), float(hi)), ra, rt)


def _mean_point(values, task, mid, lmbda, label):
    rates, qualities = zip(*values)
    return RDPoint(float(np.mean(rates)), float(np.mean(qualities)), task, mid, lmbda, label)


def evaluate(models: Sequence[JICDModel], images: Sequence[np.ndarray], noise: NoiseSpec,
             dataset: str = "dataset", lambdas: Optional[Sequence[float]] = None,
             noisy_images: Optional[Sequence[np.ndarray]] = None) -> Dict[str, RDCurve]:
    """Rate-PSNR curves for the denoising and noisy-reconstruction tasks.

    Each model contributes one point per task: the mean per-image PSNR of the
    base decode against the clean image at the mean base bitrate, and of the
    full decode against the noisy input at the mean full bitrate. Noisy inputs
    are synthesized per image from ``noise.seed`` unless given.
    """
    from .model import model_id

    if not len(images):
        raise ValueError("no images to evaluate")
    noisy_all = []
    for k, x in enumerate(images):
        if noisy_images is not None and noisy_images[k] is not None:
            noisy_all.append(check_image(noisy_images[k]))
        else:
            noisy_all.append(synth(check_image(x), noise, rng=image_rng(noise.seed, k)))
    curves = {t: [] for t in TASKS}
    for j, model in enumerate(models):
        mid = f"{model_id(model):016x}"
        lam = lambdas[j] if lambdas is not None else None
        den, rec = [], []
        for k, (x, xn) in enumerate(zip(images, noisy_all)):
            padded, size = pad_to_64(xn)
            try:
                bs = encode_image(padded, model, orig_size=size)
                rates = bpp_accounting(bs)
                x_hat = decode_base(bs, model)
                x_n_hat = decode_full(bs, model)
            except Exception as e:
                raise RuntimeError(f"{dataset}: image {k} failed to code: {e}") from e
            den.append((rates["base_bpp"], psnr(x, x_hat)))
            rec.append((rates["full_bpp"], psnr(xn, x_n_hat)))
        curves["denoise"].append(_mean_point(den, "denoise", mid, lam, dataset))
        curves["noisy_recon"].append(_mean_point(rec, "noisy_recon", mid, lam, dataset))
    return {t: RDCurve(p) for t, p in curves.items()}


def write_curves(path, curves: Dict[str, RDCurve]) -> None:
    """Line-delimited records {dataset, task, model_id, lambda, bpp, psnr}."""
    with open(path, "w") as f:
        for task in sorted(curves):
            for p in curves[task].points:
                f.write(json.dumps({"dataset": p.dataset, "task": p.task, "model_id": p.model_id,
                                    "lambda": p.lmbda, "bpp": p.bpp, "psnr": p.psnr}) + "\n")


def read_curves(path) -> Dict[str, RDCurve]:
    points = {}
    with open(path) as f:
        for line in f:
            if line.strip():
                r = json.loads(line)
                points.setdefault(r["task"], []).append(
                    RDPoint(r["bpp"], r["psnr"], r["task"], r["model_id"], r["lambda"], r["dataset"]))
    return {t: RDCurve(p) for t, p in points.items()}


def format_bd_table(rows) -> str:
    """Aligned text for ``(name, BDRateReport)`` rows."""
    width = max([len(n) for n, _ in rows] + [4])
    lines = [f"{'test':<{width}}  BD-rate   PSNR overlap"]
    for name, rep in rows:
        lines.append(f"{name:<{width}}  {rep.percent:+7.2f}%  [{rep.overlap[0]:.2f}, {rep.overlap[1]:.2f}] dB")
    return "\n".join(lines)


def plot_curves(curves_by_label: Dict[str, Dict[str, RDCurve]], path, title: str = "") -> None:
    """Side-by-side rate-PSNR panels: denoising (left) and noisy reconstruction (right)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, task, ylabel in zip(axes, TASKS, ("PSNR vs clean (dB)", "PSNR vs noisy input (dB)")):
        for label, curves in curves_by_label.items():
            if task in curves and curves[task].points:
                c = curves[task]
                ax.plot(c.rates, c.psnrs, marker="o", label=label)
        ax.set_xlabel("bits per pixel")
        ax.set_ylabel(ylabel)
        ax.grid(True, alpha=0.3)
        if ax.lines:
            ax.legend()
    axes[0].set_title("denoising")
    axes[1].set_title("noisy input reconstruction")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fig.savefig(path, dpi=120)
    plt.close(fig)


def curve_dict(curve: RDCurve):
    return [asdict(p) for p in curve.points]
