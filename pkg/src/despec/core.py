"""Image currency, dichromatic composition, PNG I/O and dataset manifests.

Images are plain ``float32`` numpy arrays of shape ``(H, W, 3)`` with values in
``[0, 1]``, stored in linear radiometric space.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

log = logging.getLogger(__name__)

REGIMES = ("textured", "white", "colored_lights", "env_map")
MANIFEST_VERSION = 1


class ImageError(ValueError):
    pass


class ManifestError(ValueError):
    pass


def check_image(img: np.ndarray, name: str = "image") -> np.ndarray:
    """Validate an ``(H, W, 3)`` array with values in ``[0, 1]``."""
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ImageError(f"{name}: expected shape (H, W, 3), got {img.shape}")
    if not np.issubdtype(img.dtype, np.floating):
        raise ImageError(f"{name}: expected floating dtype, got {img.dtype}")
    if img.size and (np.nanmin(img) < 0.0 or np.nanmax(img) > 1.0 or np.isnan(img).any()):
        raise ImageError(f"{name}: values outside [0, 1]")
    return img


def compose_dichromatic(diffuse: np.ndarray, specular: np.ndarray) -> np.ndarray:
    """Form the observed image as the saturating sum of both reflection components."""
    diffuse = np.asarray(diffuse)
    specular = np.asarray(specular)
    if diffuse.shape != specular.shape:
        raise ImageError(f"shape mismatch: diffuse {diffuse.shape} vs specular {specular.shape}")
    return np.clip(diffuse + specular, 0.0, 1.0).astype(np.result_type(diffuse, specular), copy=False)


def save_image(img: np.ndarray, path: str | os.PathLike, bits: int = 16) -> None:
    img = check_image(img)
    if bits == 16:
        q = np.round(img.astype(np.float64) * 65535.0).astype(np.uint16)
    elif bits == 8:
        q = np.round(img.astype(np.float64) * 255.0).astype(np.uint8)
    else:
        raise ImageError(f"unsupported bit depth {bits}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # Fixed compression level keeps the encoded bytes reproducible.
    if not cv2.imwrite(str(path), q[..., ::-1], [cv2.IMWRITE_PNG_COMPRESSION, 6]):
        raise OSError(f"could not write {path}")


def load_image(path: str | os.PathLike) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ImageError(f"{path}: could not decode image")
    if raw.ndim != 3 or raw.shape[2] != 3:
        channels = 1 if raw.ndim == 2 else raw.shape[2]
        raise ImageError(f"{path}: expected 3 channels, got {channels}")
    if raw.dtype == np.uint16:
        scale = 65535.0
    elif raw.dtype == np.uint8:
        scale = 255.0
    else:
        raise ImageError(f"{path}: unsupported sample type {raw.dtype}")
    return np.ascontiguousarray(raw[..., ::-1], dtype=np.float32) / np.float32(scale)


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    input: str
    diffuse: str
    regime: str
    scene_seed: int
    shape_id: str
    specular: Optional[str] = None

    def to_json(self) -> dict:
        d = {
            "id": self.id,
            "input": self.input,
            "diffuse": self.diffuse,
            "regime": self.regime,
            "scene_seed": self.scene_seed,
            "shape_id": self.shape_id,
        }
        if self.specular is not None:
            d["specular"] = self.specular
        return d


@dataclass
class DatasetManifest:
    """A set of rendered pairs. Entry paths are relative to ``root``."""

    root: str
    entries: list[ManifestEntry]
    config_digest: str = ""
    ratios: Optional[dict[str, float]] = None
    missing: list[str] = field(default_factory=list, compare=False)

    def __post_init__(self):
        self.root = os.path.abspath(self.root)
        self.entries = sorted(self.entries, key=lambda e: e.id)

    @property
    def n(self) -> int:
        return len(self.entries)

    def path(self, rel: str) -> str:
        return os.path.join(self.root, rel)

    def regime_counts(self) -> dict[str, int]:
        counts = dict.fromkeys(REGIMES, 0)
        for e in self.entries:
            counts[e.regime] += 1
        return counts

    def subset(self, ids: Sequence[str]) -> "DatasetManifest":
        keep = set(ids)
        return replace(self, entries=[e for e in self.entries if e.id in keep], ratios=None, missing=[])

    def digest(self) -> str:
        payload = json.dumps(
            {"config_digest": self.config_digest, "entries": [e.to_json() for e in self.entries]},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()

    def load_pair(self, entry: ManifestEntry) -> tuple[np.ndarray, np.ndarray]:
        return load_image(self.path(entry.input)), load_image(self.path(entry.diffuse))


def regime_counts_for(n: int, ratios: dict[str, float]) -> dict[str, int]:
    """Split ``n`` by ratio; rounding slack goes to the textured regime."""
    counts = {r: int(np.floor(n * ratios.get(r, 0.0) + 1e-9)) for r in REGIMES if r != "textured"}
    counts = {"textured": n - sum(counts.values()), **counts}
    if counts["textured"] < 0:
        raise ManifestError(f"ratios {ratios} over-allocate {n} entries")
    return counts


def manifest_write(manifest: DatasetManifest, path: str | os.PathLike) -> None:
    if not manifest.entries:
        raise ManifestError("refusing to write a manifest with no entries")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = {
        "version": MANIFEST_VERSION,
        "config_digest": manifest.config_digest,
        "root": os.path.relpath(manifest.root, path.parent.resolve()),
        "n": manifest.n,
        "entries": [e.to_json() for e in manifest.entries],
    }
    if manifest.ratios is not None:
        doc["ratios"] = manifest.ratios
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def manifest_read(path: str | os.PathLike, strict: bool = True) -> DatasetManifest:
    """Read a manifest; in strict mode dangling file references raise."""
    path = Path(path)
    doc = json.loads(path.read_text())
    version = doc.get("version")
    if version != MANIFEST_VERSION:
        raise ManifestError(f"{path}: schema version {version!r}, expected {MANIFEST_VERSION}")
    try:
        entries = [
            ManifestEntry(
                id=str(e["id"]),
                input=e["input"],
                diffuse=e["diffuse"],
                regime=e["regime"],
                scene_seed=int(e["scene_seed"]),
                shape_id=e["shape_id"],
                specular=e.get("specular"),
            )
            for e in doc["entries"]
        ]
    except KeyError as exc:
        raise ManifestError(f"{path}: entry missing key {exc}") from None
    if not entries:
        raise ManifestError(f"{path}: no entries")
    for e in entries:
        if e.regime not in REGIMES:
            raise ManifestError(f"{path}: entry {e.id} has unknown regime {e.regime!r}")
    if "n" in doc and doc["n"] != len(entries):
        raise ManifestError(f"{path}: header says n={doc['n']}, found {len(entries)} entries")
    root = os.path.normpath(os.path.join(path.parent.resolve(), doc.get("root", ".")))
    m = DatasetManifest(root=root, entries=entries, config_digest=doc.get("config_digest", ""), ratios=doc.get("ratios"))

    if m.ratios is not None and m.regime_counts() != regime_counts_for(m.n, m.ratios):
        raise ManifestError(f"{path}: regime counts {m.regime_counts()} do not match ratios {m.ratios}")
    for e in m.entries:
        for rel in (e.input, e.diffuse, e.specular):
            if rel is not None and not os.path.isfile(m.path(rel)):
                m.missing.append(rel)
    if m.missing:
        msg = f"{path}: {len(m.missing)} referenced files missing (first: {m.missing[0]})"
        if strict:
            raise ManifestError(msg)
        log.warning(msg)
    return m


def dataset_split(manifest: DatasetManifest, val_fraction: float, seed: int) -> tuple[DatasetManifest, DatasetManifest]:
    """Deterministic regime-stratified (train, validation) partition."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    val_ids: list[str] = []
    for regime in REGIMES:
        ids = [e.id for e in manifest.entries if e.regime == regime]
        if not ids:
            continue
        k = int(round(val_fraction * len(ids)))
        order = rng.permutation(len(ids))
        val_ids.extend(ids[i] for i in order[:k])
    val = set(val_ids)
    train_ids = [e.id for e in manifest.entries if e.id not in val]
    return manifest.subset(train_ids), manifest.subset(val_ids)
