"""Typed run configurations, named profiles, JSON loading and digests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from despec.core import REGIMES

DEFAULT_RATIOS = {"textured": 0.5, "white": 0.2, "colored_lights": 0.1, "env_map": 0.2}
MODES = ("multiclass", "binary", "ae")


class ConfigError(ValueError):
    pass


def _digest(obj: Any) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass
class RenderConfig:
    n: int = 2000
    ratios: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RATIOS))
    resolution: int = 64
    seed: int = 0
    samples_per_light: int = 16
    out_dir: str = "data/train"
    shape_set: str = "train"
    save_specular: bool = True
    workers: int = 1

    # fields that change where or how fast, never what, gets rendered
    _NON_SEMANTIC = ("out_dir", "workers")

    def validate(self) -> "RenderConfig":
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if set(self.ratios) != set(REGIMES):
            raise ConfigError(f"ratios must name exactly {REGIMES}, got {sorted(self.ratios)}")
        if any(v < 0 for v in self.ratios.values()) or abs(sum(self.ratios.values()) - 1.0) > 1e-6:
            raise ConfigError(f"ratios must be nonnegative and sum to 1, got {self.ratios}")
        if self.resolution < 16 or self.resolution % 16:
            raise ConfigError(f"resolution must be a positive multiple of 16, got {self.resolution}")
        if self.samples_per_light < 1:
            raise ConfigError("samples_per_light must be >= 1")
        if self.shape_set not in ("train", "test"):
            raise ConfigError(f"shape_set must be 'train' or 'test', got {self.shape_set!r}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def digest(self) -> str:
        d = dataclasses.asdict(self)
        for k in self._NON_SEMANTIC:
            d.pop(k)
        return _digest(d)


# bumped whenever training semantics change, so cached runs are not reused
TRAINER_REVISION = 2


@dataclass
class TrainConfig:
    mode: str = "multiclass"
    batch_size: int = 16
    lr: float = 2e-4
    decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    lambda_adv: float = 1e-3
    iterations: int = 3000
    resolution: int = 64
    seed: int = 0
    manifest: str = ""
    out_dir: str = "runs/train"
    checkpoint_every: int = 500
    gen_widths: list[int] = field(default_factory=lambda: [32, 64, 128, 256])
    disc_base_width: int = 32
    gen_batch_norm: bool = True
    ssds_input_term: bool = True

    _NON_SEMANTIC = ("out_dir", "checkpoint_every")

    def validate(self) -> "TrainConfig":
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.batch_size < 1 or self.iterations < 1:
            raise ConfigError("batch_size and iterations must be >= 1")
        if self.lambda_adv < 0:
            raise ConfigError("lambda_adv must be >= 0")
        if self.lr <= 0 or self.decay < 0:
            raise ConfigError("lr must be > 0 and decay >= 0")
        if self.resolution < 16 or self.resolution % 16:
            raise ConfigError(f"resolution must be a positive multiple of 16, got {self.resolution}")
        if not self.gen_widths or any(w < 1 for w in self.gen_widths):
            raise ConfigError(f"gen_widths must be a nonempty list of positive ints, got {self.gen_widths}")
        if self.disc_base_width < 1 or self.checkpoint_every < 1:
            raise ConfigError("disc_base_width and checkpoint_every must be >= 1")
        return self

    def digest(self) -> str:
        d = dataclasses.asdict(self)
        for k in self._NON_SEMANTIC:
            d.pop(k)
        d["revision"] = TRAINER_REVISION
        return _digest(d)


# Desk profiles trade resolution, corpus size, iterations and network width for
# CPU-feasible runtimes; the paper profiles use the full-scale settings.
PROFILES: dict[str, dict[str, dict[str, Any]]] = {
    "render": {
        "desk": {"n": 2000, "resolution": 64},
        "desk-test": {"n": 200, "resolution": 64, "shape_set": "test", "seed": 1},
        "paper": {"n": 20000, "resolution": 256},
        "paper-test": {"n": 1000, "resolution": 256, "shape_set": "test", "seed": 1},
    },
    "train": {
        "desk": {"resolution": 64, "iterations": 3000, "gen_widths": [32, 64, 128, 256], "disc_base_width": 32},
        "paper": {"resolution": 256, "iterations": 30000, "gen_widths": [64, 128, 256, 512], "disc_base_width": 64},
    },
}

ALIASES = {"lambda": "lambda_adv"}

CONFIG_TYPES = {"render": RenderConfig, "train": TrainConfig}


def _coerce(value: Any, tp: Any, key: str) -> Any:
    origin = typing.get_origin(tp)
    if tp is bool:
        if isinstance(value, bool):
            return value
    elif tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
    elif tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
    elif tp is str:
        if isinstance(value, str):
            return value
    elif origin is list:
        (item_tp,) = typing.get_args(tp)
        if isinstance(value, (list, tuple)):
            return [_coerce(v, item_tp, f"{key}[]") for v in value]
    elif origin is dict:
        _, val_tp = typing.get_args(tp)
        if isinstance(value, dict):
            return {str(k): _coerce(v, val_tp, f"{key}.{k}") for k, v in value.items()}
    raise ConfigError(f"{key}: expected {getattr(tp, '__name__', tp)}, got {value!r}")


def _parse_literal(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(raw: dict[str, Any], overrides: Iterable[str]) -> dict[str, Any]:
    raw = json.loads(json.dumps(raw))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        parts[0] = ALIASES.get(parts[0], parts[0])
        node = raw
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = _parse_literal(text)
    return raw


def build_config(kind: str, raw: dict[str, Any]):
    cls = CONFIG_TYPES[kind]
    raw = {ALIASES.get(k, k): v for k, v in raw.items()}
    profile = raw.pop("profile", None)
    merged: dict[str, Any] = {}
    if profile is not None:
        if profile not in PROFILES[kind]:
            raise ConfigError(f"unknown {kind} profile {profile!r}; choose from {sorted(PROFILES[kind])}")
        merged.update(PROFILES[kind][profile])
    merged.update(raw)
    if kind == "render" and isinstance(merged.get("ratios"), list):
        if len(merged["ratios"]) != len(REGIMES):
            raise ConfigError(f"ratios list must have {len(REGIMES)} values")
        merged["ratios"] = dict(zip(REGIMES, merged["ratios"]))
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(merged) - names)
    if unknown:
        raise ConfigError(f"unknown {kind} config keys: {unknown}")
    kwargs = {k: _coerce(v, hints[k], k) for k, v in merged.items()}
    return cls(**kwargs).validate()


def parse_config(path: str | os.PathLike | None, overrides: Iterable[str] = (), kind: str = "train"):
    """Load a JSON config, apply ``key=value`` overrides and validate."""
    raw: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{p}: top level must be an object")
    return build_config(kind, apply_overrides(raw, overrides))


def config_to_json(cfg) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def write_snapshot(cfg, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {"config": config_to_json(cfg), "digest": cfg.digest()}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
