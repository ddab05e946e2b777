"""Nested JSON run configuration: defaults, merging, overrides, seed resolution."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import fields
from pathlib import Path

from .datapipe import PRESETS, DatasetManifest
from .errors import ConfigError
from .footprint import DeviceProfile
from .nn import TrainConfig
from .synthetic import synthetic_manifest

SEED_ENV = "TINYSWEEP_SEED"

# Subtrees whose content is validated elsewhere (manifest schema) rather than
# by key lookup.
OPAQUE_KEYS = ("dataset",)

INPUT_FORMATS = ("samples", "windows", "tswd", "synthetic")

DEFAULT_CONFIG = {
    "seed": 7,
    "output_dir": "out",
    "dataset_preset": None,
    "dataset": None,
    "input": {"path": None, "format": "samples"},
    "train": {f.name: f.default for f in fields(TrainConfig) if f.name != "seed"},
    "compress": {"sparsity_fraction": 0.0, "calibration_size": 128},
    "reduce": {"reduction_percent": 0},
    "profile": {"source": "compressed", "evaluate": True},
    "device_profile": DeviceProfile().to_dict(),
    "device_profile_path": None,
    "sweep": {"reductions": [0, 25, 50, 75], "radar_normalization": "max"},
    "report": {"inputs": [], "summary_reduction": None},
    "paths": {
        "recording": None,
        "windows": None,
        "reduced": None,
        "train_windows": None,
        "test_windows": None,
        "model": None,
        "compressed": None,
        "footprint": None,
        "report": None,
    },
}

# File names used when a ``paths.*`` entry is left null.
DEFAULT_FILES = {
    "recording": "recording.csv",
    "windows": "windows.tswd",
    "reduced": "reduced.tswd",
    "train_windows": "train.tswd",
    "test_windows": "test.tswd",
    "model": "model.tnym",
    "compressed": "model.tnyq",
    "footprint": "footprint.csv",
    "report": "report.md",
}


def flatten(tree, prefix="") -> dict:
    out = {}
    for k, v in tree.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and k not in OPAQUE_KEYS:
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _check_keys(user, default, prefix=""):
    for k, v in user.items():
        key = f"{prefix}{k}"
        if k not in default:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(default[k], dict) and k not in OPAQUE_KEYS:
            if not isinstance(v, dict):
                raise ConfigError(f"config key {key!r} must be an object")
            _check_keys(v, default[k], key + ".")


def deep_merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in OPAQUE_KEYS:
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text: str):
    """JSON literal if it parses, otherwise the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(tree: dict, item: str) -> None:
    """Apply one ``dotted.key=value`` override in place, rejecting unknown keys."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node, ref = tree, DEFAULT_CONFIG
    for i, p in enumerate(parts):
        last = i == len(parts) - 1
        if ref is not None:
            if p not in ref:
                raise ConfigError(f"unknown config key {key!r}")
            opaque = p in OPAQUE_KEYS and ref is DEFAULT_CONFIG
        if last:
            node[p] = parse_value(raw)
            return
        nxt = ref[p] if ref is not None else None
        if ref is not None and not opaque and not isinstance(nxt, dict):
            raise ConfigError(f"config key {'.'.join(parts[:i + 1])!r} has no sub-keys")
        if not isinstance(node.get(p), dict):
            node[p] = {}
        node = node[p]
        ref = None if (ref is None or opaque) else nxt


def read_config_file(path) -> dict:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: malformed JSON ({e})") from None
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return d


def resolve_seed(config_seed, flag_seed=None, env=None):
    """flag > TINYSWEEP_SEED > config."""
    env = os.environ if env is None else env
    if flag_seed is not None:
        return int(flag_seed), "flag"
    if env.get(SEED_ENV, "") != "":
        try:
            return int(env[SEED_ENV]), "env"
        except ValueError:
            raise ConfigError(f"{SEED_ENV}={env[SEED_ENV]!r} is not an integer") from None
    return int(config_seed), "config"


def resolve_config(user: dict = None, overrides=(), flag_seed=None, env=None) -> dict:
    """Merge user config and overrides over the defaults; fill the seed."""
    user = copy.deepcopy(user or {})
    _check_keys(user, DEFAULT_CONFIG)
    for item in overrides:
        apply_override(user, item)
    _check_keys(user, DEFAULT_CONFIG)
    base = copy.deepcopy(DEFAULT_CONFIG)
    dp_path = user.get("device_profile_path")
    if dp_path:
        try:
            loaded = json.loads(Path(dp_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"device profile {dp_path}: {e}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"device profile {dp_path}: top level must be an object")
        base["device_profile"] = deep_merge(base["device_profile"], loaded)
    cfg = deep_merge(base, user)
    if not isinstance(cfg["seed"], int) and flag_seed is None:
        raise ConfigError("seed must be an integer")
    cfg["seed"], source = resolve_seed(cfg["seed"], flag_seed, env)
    cfg["_seed_source"] = source
    return cfg


# -- typed views --------------------------------------------------------------

def manifest_of(cfg) -> DatasetManifest:
    if cfg["dataset"] is not None:
        if not isinstance(cfg["dataset"], dict):
            raise ConfigError("dataset must be an inline manifest object")
        d = copy.deepcopy(cfg["dataset"])
        m = DatasetManifest.from_dict(d)
    elif cfg["dataset_preset"] == "synthetic":
        m = synthetic_manifest()
    elif cfg["dataset_preset"] in PRESETS:
        m = PRESETS[cfg["dataset_preset"]]
    elif cfg["dataset_preset"] is None:
        raise ConfigError("either dataset or dataset_preset is required")
    else:
        raise ConfigError(f"unknown dataset_preset {cfg['dataset_preset']!r}; "
                          f"choose from {sorted(PRESETS) + ['synthetic']}")
    d = m.to_dict()
    d["split_policy"]["seed"] = cfg["seed"]
    return DatasetManifest.from_dict(d)


def train_config_of(cfg) -> TrainConfig:
    try:
        return TrainConfig(seed=cfg["seed"], **cfg["train"])
    except TypeError as e:
        raise ConfigError(f"train: {e}") from None


def device_profile_of(cfg) -> DeviceProfile:
    try:
        return DeviceProfile.from_dict(cfg["device_profile"])
    except TypeError as e:
        raise ConfigError(f"device_profile: {e}") from None


def path_of(cfg, key) -> Path:
    p = cfg["paths"][key]
    return Path(p) if p else Path(cfg["output_dir"]) / DEFAULT_FILES[key]


def seeds_of(cfg) -> dict:
    s = cfg["seed"]
    return {"global": s, "source": cfg["_seed_source"], "train": s, "split": s, "calibration": s}


def public(cfg) -> dict:
    """The resolved config without bookkeeping entries."""
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def help_lines() -> list:
    return [f"  {k} = {json.dumps(v)}" for k, v in sorted(flatten(DEFAULT_CONFIG).items())]
