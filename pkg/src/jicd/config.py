"""INI-style run configuration with dotted-key overrides.

Sections ``[train]``, ``[model]``, ``[noise]`` and ``[data]`` map onto
:class:`~jicd.train.TrainConfig`, :class:`~jicd.model.ModelConfig`,
:class:`~jicd.noise.NoiseSpec` and data sources. A model ``profile`` of
``toy`` or ``paper`` selects preset defaults that explicit keys override.
"""

import configparser
import dataclasses
from pathlib import Path

from .model import ModelConfig
from .noise import NoiseSpec
from .train import TrainConfig

SECTIONS = ("train", "model", "noise", "data")


def _coerce(text: str, like):
    if isinstance(like, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if isinstance(like, (tuple, list)):
        return tuple(float(v) for v in text.replace(",", " ").split())
    if like is None:
        try:
            return int(text)
        except ValueError:
            return float(text) if text.strip().lower() != "none" else None
    return text


def read_config(path=None, overrides=()):
    """Load a config file (optional) and apply ``key=value`` overrides.

    Override keys may be dotted (``train.epochs``) or bare when the key exists
    in exactly one section.
    """
    cp = configparser.ConfigParser()
    if path is not None:
        if not Path(path).is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        cp.read(path)
    raw = {s: dict(cp[s]) if cp.has_section(s) else {} for s in SECTIONS}
    known = {
        "train": {f.name for f in dataclasses.fields(TrainConfig)} - {"noise", "model"},
        "model": {f.name for f in dataclasses.fields(ModelConfig)},
        "noise": {f.name for f in dataclasses.fields(NoiseSpec)},
    }
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, value = item.split("=", 1)
        key = key.strip()
        if "." in key:
            section, key = key.split(".", 1)
        else:
            hits = [s for s in SECTIONS if key in raw[s] or key in known.get(s, ())]
            if len(hits) != 1:
                raise ValueError(f"override key {key!r} is ambiguous or unknown; use section.key")
            section = hits[0]
        if section not in SECTIONS:
            raise ValueError(f"unknown config section {section!r}")
        raw[section][key] = value.strip()
    return raw


def _build(cls, values, defaults):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in values:
            kwargs[f.name] = _coerce(values[f.name], getattr(defaults, f.name))
    unknown = set(values) - {f.name for f in dataclasses.fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return dataclasses.replace(defaults, **kwargs)


def train_config(raw) -> TrainConfig:
    profile = raw["model"].get("profile", "toy")
    if profile == "toy":
        model_defaults, train_defaults = ModelConfig.toy(), TrainConfig.toy()
    elif profile == "paper":
        model_defaults, train_defaults = ModelConfig.paper(), TrainConfig()
    else:
        raise ValueError(f"unknown profile {profile!r}")
    model = _build(ModelConfig, raw["model"], model_defaults)
    noise = _build(NoiseSpec, raw["noise"], NoiseSpec())
    train = _build(TrainConfig, raw["train"], train_defaults)
    return dataclasses.replace(train, model=model, noise=noise)


def noise_spec(raw) -> NoiseSpec:
    return _build(NoiseSpec, raw["noise"], NoiseSpec())


def dump_config(raw, config: TrainConfig = None) -> str:
    """Resolved configuration as INI text."""
    cp = configparser.ConfigParser()
    if config is not None:
        d = config.to_dict()
        cp["model"] = {k: str(v) for k, v in d.pop("model").items()}
        noise = d.pop("noise")
        noise["sigma_set"] = ", ".join(str(s) for s in noise["sigma_set"])
        cp["noise"] = {k: str(v) for k, v in noise.items()}
        cp["train"] = {k: str(v) for k, v in d.items()}
    else:
        for s in ("train", "model", "noise"):
            if raw.get(s):
                cp[s] = raw[s]
    if raw.get("data"):
        cp["data"] = raw["data"]
    import io
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
