"""Metrics, test-set evaluation, learning-curve stability and the mode ablation."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
import torch

from despec.checkpoint import Checkpoint, checkpoint_load
from despec.config import MODES, TrainConfig
from despec.core import DatasetManifest, load_image, manifest_read
from despec.trainer import (
    CURVE_FILE,
    FINAL_CHECKPOINT,
    CurveLog,
    generator_from_checkpoint,
    load_pairs,
    train,
)

log = logging.getLogger(__name__)

SSIM_WINDOW = 8
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
EVAL_BATCH = 16


class EvaluationError(ValueError):
    pass


def _check_pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def l2_metric(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared difference over all pixels and channels."""
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2 * sigma**2))
    return g / g.sum()


def _filter_valid(x: np.ndarray, g: np.ndarray) -> np.ndarray:
    # separable correlation over the two leading axes, no padding
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(x, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=1) @ g


def ssim_map(a: np.ndarray, b: np.ndarray, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    a, b = _check_pair(a, b)
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    if a.shape[0] < window or a.shape[1] < window:
        raise ValueError(f"image {a.shape[:2]} smaller than the {window}x{window} SSIM window")
    g = gaussian_window(window, sigma)
    mu_a, mu_b = _filter_valid(a, g), _filter_valid(b, g)
    var_a = _filter_valid(a * a, g) - mu_a**2
    var_b = _filter_valid(b * b, g) - mu_b**2
    cov = _filter_valid(a * b, g) - mu_a * mu_b
    lum = (2 * mu_a * mu_b + SSIM_C1) / (mu_a**2 + mu_b**2 + SSIM_C1)
    cs = (2 * cov + SSIM_C2) / (var_a + var_b + SSIM_C2)
    return lum * cs


def dssim_metric(a: np.ndarray, b: np.ndarray) -> float:
    """``(1 - SSIM) / 2`` with an 8x8 Gaussian window (sigma 1.5), channel-averaged."""
    return float((1.0 - ssim_map(a, b).mean()) / 2.0)


@dataclass
class ImageRecord:
    id: str
    l2: float
    dssim: float


@dataclass
class MetricsReport:
    method: str
    records: list[ImageRecord]
    mean_l2: float
    mean_dssim: float
    config_digest: str = ""
    test_digest: str = ""
    # perceptual metrics need external weights; reserved for plugins
    net: Optional[float] = None
    lin_net: Optional[float] = None

    @classmethod
    def from_records(cls, method: str, records: list[ImageRecord], **kw) -> "MetricsReport":
        if not records:
            raise EvaluationError("no records to aggregate")
        return cls(
            method=method,
            records=records,
            mean_l2=float(np.mean([r.l2 for r in records])),
            mean_dssim=float(np.mean([r.dssim for r in records])),
            **kw,
        )

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "MetricsReport":
        doc = dict(doc)
        doc["records"] = [ImageRecord(**r) for r in doc["records"]]
        return cls(**doc)

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def write(self, path: str | os.PathLike) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        doc = self.to_json()
        doc["digest"] = self.digest()
        path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path: str | os.PathLike) -> "MetricsReport":
        doc = json.loads(Path(path).read_text())
        doc.pop("digest", None)
        return cls.from_json(doc)


Predictor = Callable[[np.ndarray], np.ndarray]


def _as_manifest(m: DatasetManifest | str | os.PathLike) -> DatasetManifest:
    return m if isinstance(m, DatasetManifest) else manifest_read(m)


def evaluate_predictor(predict: Predictor, test_manifest, method: str = "predictor", config_digest: str = "") -> MetricsReport:
    """Score ``predict(input) -> diffuse`` on every pair of the test manifest."""
    manifest = _as_manifest(test_manifest)
    if manifest.n == 0:
        raise EvaluationError("empty test set")
    records = []
    for e in manifest.entries:
        image = load_image(manifest.path(e.input))
        target = load_image(manifest.path(e.diffuse))
        pred = predict(image)
        records.append(ImageRecord(e.id, l2_metric(pred, target), dssim_metric(pred, target)))
    return MetricsReport.from_records(method, records, config_digest=config_digest, test_digest=manifest.digest())


def evaluate(checkpoint: Checkpoint | str | os.PathLike, test_manifest, method: Optional[str] = None) -> MetricsReport:
    """Run the checkpoint's generator over the test set and aggregate metrics."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else checkpoint_load(checkpoint)
    manifest = _as_manifest(test_manifest)
    if manifest.n == 0:
        raise EvaluationError("empty test set")
    resolution = int(ckpt.config.get("resolution", 0))
    probe = load_image(manifest.path(manifest.entries[0].input))
    if probe.shape[:2] != (resolution, resolution):
        raise EvaluationError(f"test images are {probe.shape[:2]}, checkpoint trained at {resolution}x{resolution}")
    inputs, diffuse = load_pairs(manifest, resolution)
    gen = generator_from_checkpoint(ckpt)
    records = []
    with torch.no_grad():
        for start in range(0, manifest.n, EVAL_BATCH):
            pred = gen(inputs[start : start + EVAL_BATCH]).permute(0, 2, 3, 1).numpy()
            target = diffuse[start : start + EVAL_BATCH].permute(0, 2, 3, 1).numpy()
            for k in range(pred.shape[0]):
                e = manifest.entries[start + k]
                records.append(ImageRecord(e.id, l2_metric(pred[k], target[k]), dssim_metric(pred[k], target[k])))
    label = method or ckpt.config.get("mode", "model")
    return MetricsReport.from_records(label, records, config_digest=ckpt.config_digest, test_digest=manifest.digest())


def curve_stability(series: Iterable[float], window: int) -> float:
    """Mean over sliding windows of the within-window population std."""
    x = np.asarray(list(series), dtype=np.float64)
    if window < 2 or window > x.size:
        raise ValueError(f"window must be in [2, {x.size}], got {window}")
    windows = np.lib.stride_tricks.sliding_window_view(x, window)
    return float(windows.std(axis=1).mean())


# --- ablation -----------------------------------------------------------------

TABLE_FIELDS = (
    "mode",
    "n_ok",
    "n_failed",
    "l2_mean",
    "l2_std",
    "dssim_mean",
    "dssim_std",
    "stability_mean",
    "stability_std",
)


@dataclass
class AblationCell:
    mode: str
    seed: int
    run_dir: str
    status: str = "ok"
    l2: Optional[float] = None
    dssim: Optional[float] = None
    stability: Optional[float] = None
    error: Optional[str] = None


@dataclass
class AblationTable:
    rows: list[dict]
    cells: list[AblationCell]
    baseline: dict = field(default_factory=dict)
    window: int = 500

    def cell(self, mode: str, seed: int) -> AblationCell:
        for c in self.cells:
            if c.mode == mode and c.seed == seed:
                return c
        raise KeyError((mode, seed))

    def to_json(self) -> dict:
        return {
            "rows": self.rows,
            "cells": [dataclasses.asdict(c) for c in self.cells],
            "baseline": self.baseline,
            "window": self.window,
        }

    def write(self, out_dir: str | os.PathLike) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "ablation.json").write_text(json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n")
        with open(out / "ablation.csv", "w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=TABLE_FIELDS)
            w.writeheader()
            for row in self.rows:
                w.writerow({k: ("" if row[k] is None else row[k]) for k in TABLE_FIELDS})


def _latest_checkpoint(run_dir: Path, digest: str) -> Optional[Path]:
    ckpts = sorted((run_dir / "checkpoints").glob("ckpt_*.despec")) if (run_dir / "checkpoints").is_dir() else []
    for p in reversed(ckpts):
        try:
            if checkpoint_load(p).config_digest == digest:
                return p
        except Exception:  # unreadable partial file, try an older one
            continue
    return None


def train_or_reuse(cfg: TrainConfig, data=None) -> Checkpoint:
    """Train ``cfg`` unless its run directory already holds the finished result.

    A final checkpoint with the same config digest is reused; otherwise the
    newest matching intermediate checkpoint is resumed.
    """
    run_dir = Path(cfg.out_dir)
    final = run_dir / FINAL_CHECKPOINT
    digest = cfg.digest()
    if final.exists() and (run_dir / CURVE_FILE).exists():
        ckpt = checkpoint_load(final)
        if ckpt.config_digest == digest and ckpt.iteration == cfg.iterations:
            log.info("reusing %s", final)
            return ckpt
    resume = _latest_checkpoint(run_dir, digest)
    if resume is not None:
        log.info("resuming %s", resume)
    ckpt, _ = train(cfg, resume=resume, data=data)
    return ckpt


def _mean_std(values: list[float]) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    return float(np.mean(values)), float(np.std(values))


def ablation_run(
    base_config: TrainConfig,
    modes: Iterable[str],
    seeds: Iterable[int],
    test_manifest,
    out_dir: str | os.PathLike,
    window: int = 500,
) -> AblationTable:
    """Train and evaluate every (mode, seed) cell and summarize per mode.

    Failures of individual cells are recorded in the table rather than raised.
    """
    requested = set(modes)
    if not requested or requested - set(MODES):
        raise ValueError(f"modes must be a nonempty subset of {MODES}, got {sorted(requested)}")
    modes = [m for m in MODES if m in requested]
    seeds = sorted(set(int(s) for s in seeds))
    if not seeds:
        raise ValueError("at least one seed is required")
    out = Path(out_dir)
    test = _as_manifest(test_manifest)
    train_manifest = manifest_read(base_config.manifest)
    inputs, diffuse = load_pairs(train_manifest, base_config.resolution)
    data = (inputs, diffuse, [e.id for e in train_manifest.entries])

    identity = evaluate_predictor(lambda x: x, test, method="identity")
    cells = []
    for mode in modes:
        for seed in seeds:
            run_dir = out / f"{mode}_seed{seed}"
            cell = AblationCell(mode, seed, str(run_dir))
            try:
                cfg = dataclasses.replace(base_config, mode=mode, seed=seed, out_dir=str(run_dir))
                ckpt = train_or_reuse(cfg, data)
                report = evaluate(ckpt, test)
                report.write(run_dir / "report.json")
                cell.l2, cell.dssim = report.mean_l2, report.mean_dssim
                content = CurveLog.read(run_dir / CURVE_FILE).series("content")
                if content.size >= window:
                    cell.stability = curve_stability(content, window)
            except Exception as exc:
                log.error("cell %s/seed %d failed: %s", mode, seed, exc)
                cell.status = "failed"
                cell.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
            cells.append(cell)

    rows = []
    for mode in modes:
        ok = [c for c in cells if c.mode == mode and c.status == "ok"]
        l2 = _mean_std([c.l2 for c in ok])
        ds = _mean_std([c.dssim for c in ok])
        st = _mean_std([c.stability for c in ok if c.stability is not None])
        rows.append(
            {
                "mode": mode,
                "n_ok": len(ok),
                "n_failed": sum(c.mode == mode for c in cells) - len(ok),
                "l2_mean": l2[0],
                "l2_std": l2[1],
                "dssim_mean": ds[0],
                "dssim_std": ds[1],
                "stability_mean": st[0],
                "stability_std": st[1],
            }
        )
    baseline = {"identity_l2": identity.mean_l2, "identity_dssim": identity.mean_dssim, "test_digest": test.digest()}
    table = AblationTable(rows=rows, cells=cells, baseline=baseline, window=window)
    table.write(out)
    return table
