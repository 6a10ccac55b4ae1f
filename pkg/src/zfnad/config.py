"""Pipeline configuration: a single JSON document with every default filled in."""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

from zfnad.scorer.training import DEFAULT_SPACE
from zfnad.synth import DEFAULT_SPEC

SEED_ENV = "ZFN_SEED"

# Operating point used on the PCBA data: p=100, n=4, alpha=4, q=250, m=30,
# 500 search iterations, 5-fold stratified CV.
FULL_DEFAULTS = {
    "seed": 0,
    "threads": 1,
    "data": {"source": "manifest", "test_manifest": None, "mask_manifest": None},
    "patch": {"p": 100, "n": 4, "alpha": 4, "q": 250},
    "weighting_mask": True,
    "m": 30,
    "embedder": {"mode": "baseline", "feature_dir": None},
    "scorer": {
        "classifiers": ["DT", "RF", "ET", "GBC", "LR", "KNN", "NB"],
        "iterations": 500,
        "folds": 5,
        "smote_k": 5,
        "space": DEFAULT_SPACE,
        "nested_search": False,
        "threshold_source": "oof",
    },
    "report": {"figures": True, "overlays": 0},
}

# Desk-scale space: same parameters, ensembles capped so a full run takes minutes.
DESK_SPACE = {
    "DT": {"max_depth": ["int", 1, 20]},
    "RF": {"n_estimators": ["int", 10, 40], "max_depth": ["int", 1, 20]},
    "ET": {"n_estimators": ["int", 10, 40], "max_depth": ["int", 1, 20]},
    "GBC": {"n_estimators": ["int", 10, 40], "learning_rate": ["uniform", 0.01, 0.3], "max_depth": ["int", 1, 3]},
    "LR": {"l2": ["loguniform", 1e-4, 10.0]},
    "KNN": {"n_neighbors": ["int", 1, 15]},
    "NB": {},
}


def _synth_defaults() -> dict:
    cfg = copy.deepcopy(FULL_DEFAULTS)
    spec = DEFAULT_SPEC.to_dict()
    cfg["data"] = {"source": "synth", "synth": spec}
    cfg["m"] = spec["mask_normals"]
    cfg["scorer"]["iterations"] = 4
    cfg["scorer"]["space"] = copy.deepcopy(DESK_SPACE)
    return cfg


SYNTH_DEFAULTS = _synth_defaults()
PRESETS = {"synth": SYNTH_DEFAULTS, "full": FULL_DEFAULTS}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "space":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def merged(config: dict | None = None, preset: str | None = None) -> dict:
    """Preset filled with ``config`` and the ZFN_SEED override, not validated."""
    config = dict(config or {})
    if preset is None:
        src = config.get("data", {}).get("source", "synth")
        preset = "synth" if src == "synth" else "full"
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}")
    cfg = _merge(PRESETS[preset], config)
    if cfg["data"].get("source") == "synth" and "m" not in config:
        cfg["m"] = cfg["data"]["synth"].get("mask_normals", cfg["m"])
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip() != "":
        cfg["seed"] = int(env)
    return cfg


def resolve(config: dict | None = None, preset: str | None = None) -> dict:
    """Fill a partial config from a preset (synth by default), apply ZFN_SEED and validate."""
    cfg = merged(config, preset)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    src = cfg["data"].get("source")
    if src not in ("synth", "manifest"):
        raise ValueError(f"data.source must be 'synth' or 'manifest', got {src!r}")
    if src == "manifest" and not cfg["data"].get("test_manifest"):
        raise ValueError("manifest source needs data.test_manifest")
    if cfg["weighting_mask"] and src == "manifest" and not cfg["data"].get("mask_manifest"):
        raise ValueError("weighting_mask needs data.mask_manifest")
    if cfg["m"] < 2:
        raise ValueError("m must be >= 2")
    if cfg["embedder"]["mode"] not in ("baseline", "external"):
        raise ValueError("embedder.mode must be 'baseline' or 'external'")
    if cfg["scorer"]["threshold_source"] not in ("oof", "refit"):
        raise ValueError("scorer.threshold_source must be 'oof' or 'refit'")


def load_config(path) -> dict:
    path = Path(path)
    cfg = json.loads(path.read_text())
    # relative data paths resolve against the config file
    data = cfg.get("data", {})
    for key in ("test_manifest", "mask_manifest"):
        if data.get(key) and not Path(data[key]).is_absolute():
            data[key] = str(path.parent / data[key])
    emb = cfg.get("embedder", {})
    if emb.get("feature_dir") and not Path(emb["feature_dir"]).is_absolute():
        emb["feature_dir"] = str(path.parent / emb["feature_dir"])
    return resolve(cfg)


def dumps(cfg: dict) -> str:
    return json.dumps(cfg, indent=2) + "\n"
