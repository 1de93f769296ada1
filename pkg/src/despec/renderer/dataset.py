"""Corpus generation: render every pair of a config and write a manifest."""

from __future__ import annotations

import logging
import os
import shutil
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from despec.config import RenderConfig
from despec.core import DatasetManifest, ManifestEntry, manifest_write, regime_counts_for, save_image
from despec.renderer.raycast import render_pair
from despec.renderer.scene import sample_scene

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def pair_seed(master: int, index: int) -> int:
    """Per-pair seed, a hash of the master seed and the pair index."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1, dtype=np.uint32)[0])


def assign_regimes(n: int, ratios: dict[str, float], master: int) -> list[str]:
    counts = regime_counts_for(n, ratios)
    regimes = [r for r, c in counts.items() for _ in range(c)]
    order = np.random.default_rng(np.random.SeedSequence([int(master), 0x5E71])).permutation(n)
    return [regimes[i] for i in order]


def _render_one(args):
    index, regime, seed, cfg_fields = args
    resolution, spl, shape_set, out_dir, save_spec = cfg_fields
    scene = sample_scene(regime, seed, shape_set)
    diffuse, specular, image = render_pair(scene, resolution, spl)
    pid = f"{index:06d}"
    rel = {"input": f"pairs/{pid}_input.png", "diffuse": f"pairs/{pid}_diffuse.png"}
    save_image(image, os.path.join(out_dir, rel["input"]))
    save_image(diffuse, os.path.join(out_dir, rel["diffuse"]))
    if save_spec:
        rel["specular"] = f"pairs/{pid}_specular.png"
        save_image(specular, os.path.join(out_dir, rel["specular"]))
    return ManifestEntry(id=pid, regime=regime, scene_seed=seed, shape_id=scene.shape_id, **rel)


def generate_dataset(config: RenderConfig) -> DatasetManifest:
    """Render ``config.n`` pairs into ``config.out_dir`` and write its manifest.

    On failure every file written by this call is removed before re-raising.
    """
    config.validate()
    out = Path(config.out_dir)
    pairs_dir = out / "pairs"
    existed = pairs_dir.exists()
    regimes = assign_regimes(config.n, config.ratios, config.seed)
    fields = (config.resolution, config.samples_per_light, config.shape_set, str(out), config.save_specular)
    jobs = [(i, regimes[i], pair_seed(config.seed, i), fields) for i in range(config.n)]
    written: list[ManifestEntry] = []
    try:
        pairs_dir.mkdir(parents=True, exist_ok=True)
        if config.workers > 1:
            with ProcessPoolExecutor(config.workers) as pool:
                for entry in pool.map(_render_one, jobs, chunksize=8):
                    written.append(entry)
        else:
            for job in jobs:
                written.append(_render_one(job))
                if len(written) % 200 == 0:
                    log.info("rendered %d/%d pairs", len(written), config.n)
        manifest = DatasetManifest(
            root=str(out), entries=written, config_digest=config.digest(), ratios=dict(config.ratios)
        )
        manifest_write(manifest, out / MANIFEST_NAME)
    except BaseException:
        _cleanup(out, jobs, existed)
        raise
    return manifest


def _cleanup(out: Path, jobs, pairs_existed: bool) -> None:
    for index, *_ in jobs:
        for kind in ("input", "diffuse", "specular"):
            p = out / "pairs" / f"{index:06d}_{kind}.png"
            if p.exists():
                p.unlink()
    if not pairs_existed:
        shutil.rmtree(out / "pairs", ignore_errors=True)
