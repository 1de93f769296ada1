"""Desk-scale experiment layout shared by the CLI and the acceptance suite.

Artifacts live under ``$DESPEC_CACHE`` (default ``~/.cache/despec``) so long
runs are computed once and reused by config digest.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from despec.config import build_config
from despec.core import DatasetManifest, dataset_split, manifest_read, manifest_write
from despec.renderer.dataset import MANIFEST_NAME, generate_dataset

TRAIN_SPLIT_NAME = "train_split.json"
HELDOUT_SPLIT_NAME = "heldout_split.json"
SPLIT_SEED = 0


def cache_dir() -> Path:
    root = os.environ.get("DESPEC_CACHE") or Path.home() / ".cache" / "despec"
    return Path(root)


def ensure_corpus(profile: str, out_dir: str | os.PathLike, workers: int = 1) -> DatasetManifest:
    """Render the profile's corpus unless a manifest with the same digest exists."""
    cfg = build_config("render", {"profile": profile, "out_dir": str(out_dir), "workers": workers})
    path = Path(out_dir) / MANIFEST_NAME
    if path.exists():
        m = manifest_read(path)
        if m.config_digest == cfg.digest():
            return m
    return generate_dataset(cfg)


@dataclass
class DeskLayout:
    root: Path

    def __post_init__(self):
        self.root = Path(self.root)

    @property
    def corpus(self) -> Path:
        return self.root / "desk" / "corpus"

    @property
    def test(self) -> Path:
        return self.root / "desk" / "test"

    @property
    def runs(self) -> Path:
        return self.root / "desk" / "ablation"

    @property
    def train_manifest(self) -> Path:
        return self.corpus / TRAIN_SPLIT_NAME

    @property
    def test_manifest(self) -> Path:
        return self.test / MANIFEST_NAME


def prepare_desk(root: str | os.PathLike | None = None, workers: int = 1) -> DeskLayout:
    """Render the 2000-pair desk corpus and 200-pair held-out-shape test set.

    Training uses a stratified half (1000 pairs) of the corpus.
    """
    layout = DeskLayout(Path(root) if root is not None else cache_dir())
    corpus = ensure_corpus("desk", layout.corpus, workers)
    ensure_corpus("desk-test", layout.test, workers)
    train, heldout = dataset_split(corpus, 0.5, seed=SPLIT_SEED)
    for m, name in ((train, TRAIN_SPLIT_NAME), (heldout, HELDOUT_SPLIT_NAME)):
        path = layout.corpus / name
        if not path.exists() or manifest_read(path) != m:
            manifest_write(m, path)
    return layout


def desk_train_config(layout: DeskLayout, **overrides):
    raw = {"profile": "desk", "manifest": str(layout.train_manifest), **overrides}
    return build_config("train", raw)
