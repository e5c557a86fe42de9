"""Command-line entry point: ``jicd {noise,train,encode,decode,eval,bdrate,plot}``.

Exit codes: 0 on success, 2 for missing or unreadable inputs (and usage
errors), 1 for any other failure.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as cfgmod
from .bitstream import BitstreamError
from .codec import DecodeError, decode_file, encode_image
from .data import DatasetManifest, load_manifest, sample_corpus
from .evaluate import (bd_rate, bpp_accounting, evaluate, format_bd_table, plot_curves, read_curves,
                       write_curves)
from .image import load_png, pad_to_64, save_png
from .model import load_checkpoint
from .noise import image_rng, synth

log = logging.getLogger("jicd")

class InputError(Exception):
    """Missing or unreadable input; exit code 2."""

def _require_file(path, what):
    if not Path(path).is_file():
        raise InputError(f"{what} not found: {path}")
    return Path(path)

def _load_model(path):
    _require_file(path, "checkpoint")
    try:
        return load_checkpoint(path)
    except Exception as e:
        raise InputError(f"cannot read checkpoint {path}: {e}") from e

def _load_image(path):
    _require_file(path, "input image")
    try:
        return load_png(path)
    except Exception as e:
        raise InputError(f"cannot read image {path}: {e}") from e

def _run_dir(path):
    root = Path(path)
    for sub in ("logs", "artifacts"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    return root

def _resolve(args):
    raw = cfgmod.read_config(args.config, args.override or [])
    if args.seed is not None:
        raw["train"]["seed"] = str(args.seed)
        raw["noise"]["seed"] = str(args.seed)
    return raw

def _record(run, raw, train=None):
    text = cfgmod.dump_config(raw, train)
    (run / "config.resolved").write_text(text)
    log.info("resolved config:\n%s", text)

def _dataset(source, split="train"):
    """Clean images from a manifest/directory path or ``builtin:<split>``."""
    if source is None or str(source).startswith("builtin"):
        split = str(source).split(":", 1)[1] if source and ":" in str(source) else split
        cache = os.environ.get("JICD_CACHE")
        if cache:
            cdir = Path(cache) / f"builtin-{split}"
            if not cdir.is_dir():
                cdir.mkdir(parents=True)
                for k, img in enumerate(sample_corpus(split)):
                    save_png(cdir / f"{k:04d}.png", img)
            return load_manifest(cdir).load_clean(), f"builtin-{split}"
        return sample_corpus(split), f"builtin-{split}"
    path = Path(source)
    if not path.exists():
        raise InputError(f"dataset not found: {source}")
    manifest = load_manifest(path)
    manifest.check()
    return manifest.load_clean(), manifest.label

# -- subcommands ------------------------------------------------------------------------

def cmd_noise(args):
    raw = _resolve(args)
    spec = cfgmod.noise_spec(raw)
    run = _run_dir(args.out)
    _record(run, raw)
    source = Path(args.input)
    if not source.exists():
        raise InputError(f"input corpus not found: {source}")
    manifest = load_manifest(source)
    items = []
    for k, (clean_path, _) in enumerate(manifest.items):
        noisy = synth(load_png(clean_path), spec, rng=image_rng(spec.seed, k))
        out = run / "artifacts" / f"{Path(clean_path).stem}_noisy.png"
        save_png(out, noisy)
        items.append((str(Path(clean_path).resolve()), str(out.resolve())))
    (run / "artifacts" / "manifest.json").write_text(DatasetManifest(manifest.label, items).to_json())
    print(f"wrote {len(items)} noisy images to {run / 'artifacts'}")

def cmd_train(args):
    from .train import fit

    raw = _resolve(args)
    train = cfgmod.train_config(raw)
    run = _run_dir(args.out)
    _record(run, raw, train)
    images, label = _dataset(raw["data"].get("train"))
    log.info("training on %d images from %s", len(images), label)
    fit(images, train, out_dir=run / "artifacts", log_path=run / "logs" / "train_log.jsonl")
    print(f"checkpoint: {run / 'artifacts' / 'model.npz'}")

def cmd_encode(args):
    if args.layer != "both":
        raise ValueError("encode only supports --layer both")
    model = _load_model(args.checkpoint)
    x = _load_image(args.input)
    padded, size = pad_to_64(x)
    bs, info = encode_image(padded, model, orig_size=size, return_info=True)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_bytes(bs.serialize())
    report = dict(bpp_accounting(bs))
    report["estimated_bits"] = {"side": info.estimated.side, "base": info.estimated.base,
                                "enhancement": info.estimated.enh}
    report["actual_bits"] = {"side": info.actual.side, "base": info.actual.base,
                             "enhancement": info.actual.enh}
    print(json.dumps(report))

def cmd_decode(args):
    model = _load_model(args.checkpoint)
    _require_file(args.input, "bitstream")
    x = decode_file(args.input, model, layer=args.layer)
    save_png(args.out, x)
    print(f"wrote {args.out} ({x.shape[1]}x{x.shape[0]}, layer={args.layer})")

def cmd_eval(args):
    raw = _resolve(args)
    spec = cfgmod.noise_spec(raw)
    run = _run_dir(args.out)
    _record(run, raw)
    models = [_load_model(p) for p in args.checkpoint]
    images, label = _dataset(args.data or raw["data"].get("eval"), split="heldout")
    lambdas = None
    if args.lambdas:
        lambdas = [float(v) for v in args.lambdas.split(",")]
    curves = evaluate(models, images, spec, dataset=label, lambdas=lambdas)
    out = run / "artifacts" / "curves.jsonl"
    write_curves(out, curves)
    for task, c in curves.items():
        for p in c.points:
            print(f"{task:12s} bpp={p.bpp:.4f} psnr={p.psnr:.2f}")
    print(f"curves: {out}")

def _curve(path, task):
    _require_file(path, "curve file")
    curves = read_curves(path)
    if task not in curves:
        raise ValueError(f"{path} has no points for task {task!r}")
    return curves[task]

def cmd_bdrate(args):
    anchor = _curve(args.anchor, args.task)
    rows = []
    for path in args.test:
        rows.append((Path(path).stem, bd_rate(anchor, _curve(path, args.task))))
    print(format_bd_table(rows))
    if args.out:
        with open(args.out, "w") as f:
            for name, rep in rows:
                f.write(json.dumps({"anchor": str(args.anchor), "test": name, "task": args.task,
                                    "bd_rate": rep.percent, "overlap": rep.overlap}) + "\n")

def cmd_plot(args):
    curves = {}
    for path in args.curves:
        _require_file(path, "curve file")
        curves[Path(path).stem] = read_curves(path)
    plot_curves(curves, args.out, title=args.title or "")
    print(f"wrote {args.out}")

# -- parser -------------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="jicd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="INI config file")
        sp.add_argument("--override", action="append", metavar="KEY=VALUE",
                        help="override a config entry (repeatable)")
        sp.add_argument("--seed", type=int)

    sp = sub.add_parser("noise", help="materialize a noisy corpus from a clean one")
    with_config(sp)
    sp.add_argument("input", help="directory of clean images or manifest JSON")
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(func=cmd_noise)

    sp = sub.add_parser("train", help="train a model")
    with_config(sp)
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("encode", help="compress an image")
    sp.add_argument("input")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--layer", default="both", choices=["both"])
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode the base (denoised) or full (noisy) layer")
    sp.add_argument("input")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--layer", default="base", choices=["base", "full"])
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("eval", help="rate-PSNR curves for a set of checkpoints")
    with_config(sp)
    sp.add_argument("--checkpoint", nargs="+", required=True)
    sp.add_argument("--data", help="manifest, image directory or builtin:<split>")
    sp.add_argument("--lambdas", help="comma-separated lambda per checkpoint")
    sp.add_argument("--out", required=True, help="run directory")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bdrate", help="BD-rate of test curves against an anchor")
    sp.add_argument("--anchor", required=True)
    sp.add_argument("--test", nargs="+", required=True)
    sp.add_argument("--task", default="denoise", choices=["denoise", "noisy_recon"])
    sp.add_argument("--out", help="write machine-readable records here")
    sp.set_defaults(func=cmd_bdrate)

    sp = sub.add_parser("plot", help="rate-PSNR figure from curve files")
    sp.add_argument("curves", nargs="+")
    sp.add_argument("--out", required=True)
    sp.add_argument("--title")
    sp.set_defaults(func=cmd_plot)
    return p

def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (InputError, FileNotFoundError) as e:
        print(f"jicd {args.command}: error: {e}", file=sys.stderr)
        return 2
    except (BitstreamError, DecodeError, ValueError, RuntimeError) as e:
        print(f"jicd {args.command}: error: {e}", file=sys.stderr)
        return 1
    return 0

if __name__ == "__main__":
    sys.exit(main())
