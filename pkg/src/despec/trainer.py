"""Alternating adversarial training of the generator and discriminator.

Modes:
  multiclass  3-class discriminator, generator loss content + lambda * SSDS
  binary      real/fake discriminator, generator loss content + lambda * GAN
  ae          content loss only, no discriminator
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
import os
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from despec.checkpoint import Checkpoint, checkpoint_load, checkpoint_save
from despec.config import TrainConfig, write_snapshot
from despec.core import DatasetManifest, manifest_read
from despec.losses import (
    binary_gan_losses,
    binary_generator_loss,
    content_loss,
    discriminator_loss,
    ssds_loss,
    total_generator_loss,
)
from despec.nets import (
    DiscriminatorSpec,
    GeneratorSpec,
    build_discriminator,
    build_generator,
)

log = logging.getLogger(__name__)

CURVE_FIELDS = ("iteration", "content", "ssds", "disc", "wall_ms")


class DatasetError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, batch_ids: list[str], metrics: dict):
        super().__init__(f"non-finite loss at iteration {iteration} (batch {batch_ids[:4]}...): {metrics}")
        self.iteration = iteration
        self.batch_ids = batch_ids
        self.metrics = metrics


@dataclass
class StepMetrics:
    content: float
    adversarial: Optional[float]  # SSDS loss (multiclass) or GAN generator loss (binary)
    disc: Optional[float]
    total: float

    def finite(self) -> bool:
        return all(v is None or math.isfinite(v) for v in dataclasses.astuple(self))


class CurveLog:
    """Per-iteration loss records, persisted as CSV."""

    def __init__(self, records: Optional[list[dict]] = None):
        self.records: list[dict] = list(records or [])

    def append(self, iteration: int, m: StepMetrics, wall_ms: float) -> dict:
        if self.records and iteration != self.records[-1]["iteration"] + 1:
            raise ValueError(f"curve log gap: {self.records[-1]['iteration']} -> {iteration}")
        rec = {"iteration": iteration, "content": m.content, "ssds": m.adversarial, "disc": m.disc, "wall_ms": wall_ms}
        self.records.append(rec)
        return rec

    def series(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.records], dtype=np.float64)

    def truncate(self, iteration: int) -> None:
        self.records = [r for r in self.records if r["iteration"] <= iteration]

    @staticmethod
    def format_row(rec: dict) -> list[str]:
        out = [str(rec["iteration"])]
        for k in ("content", "ssds", "disc"):
            out.append("" if rec[k] is None else repr(float(rec[k])))
        out.append(f"{rec['wall_ms']:.3f}")
        return out

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CURVE_FIELDS)
            for r in self.records:
                w.writerow(self.format_row(r))

    @classmethod
    def read(cls, path: str | os.PathLike) -> "CurveLog":
        with open(path, newline="") as f:
            rows = list(csv.DictReader(f))
        recs = []
        for row in rows:
            recs.append(
                {
                    "iteration": int(row["iteration"]),
                    **{k: (None if row[k] == "" else float(row[k])) for k in ("content", "ssds", "disc")},
                    "wall_ms": float(row["wall_ms"]),
                }
            )
        return cls(recs)


class BatchSampler:
    """Seeded epoch shuffling; drops the remainder of each epoch."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xBA7C]))
        self.perm = self.rng.permutation(n)
        self.cursor = 0

    def next(self) -> np.ndarray:
        if self.cursor + self.batch_size > self.n:
            self.perm = self.rng.permutation(self.n)
            self.cursor = 0
        idx = self.perm[self.cursor : self.cursor + self.batch_size]
        self.cursor += self.batch_size
        return idx

    def state(self) -> dict:
        return {"bit_generator": self.rng.bit_generator.state, "perm": self.perm.tolist(), "cursor": self.cursor}

    def restore(self, st: dict) -> None:
        self.rng.bit_generator.state = st["bit_generator"]
        self.perm = np.asarray(st["perm"], dtype=np.int64)
        self.cursor = int(st["cursor"])


def load_pairs(manifest: DatasetManifest, resolution: int) -> tuple[torch.Tensor, torch.Tensor]:
    """All (input, diffuse) pairs as ``(N, 3, H, W)`` float32 tensors."""
    inputs, diffuse = [], []
    for e in manifest.entries:
        i, d = manifest.load_pair(e)
        if i.shape != (resolution, resolution, 3) or d.shape != i.shape:
            raise DatasetError(f"pair {e.id}: image shape {i.shape}/{d.shape}, config resolution {resolution}")
        inputs.append(i)
        diffuse.append(d)
    to_t = lambda xs: torch.from_numpy(np.stack(xs).transpose(0, 3, 1, 2).copy())
    return to_t(inputs), to_t(diffuse)


def generator_spec_for(cfg: TrainConfig) -> GeneratorSpec:
    return GeneratorSpec(widths=list(cfg.gen_widths), batch_norm=cfg.gen_batch_norm)


def discriminator_spec_for(cfg: TrainConfig) -> Optional[DiscriminatorSpec]:
    if cfg.mode == "ae":
        return None
    return DiscriminatorSpec(base_width=cfg.disc_base_width, input_size=cfg.resolution, binary=cfg.mode == "binary")


def _init_seeds(seed: int) -> tuple[int, int]:
    g, d = np.random.SeedSequence([int(seed), 0x1417]).generate_state(2)
    return int(g), int(d)


class Trainer:
    """Owns the models, optimizers and sampler for one run."""

    def __init__(self, cfg: TrainConfig, n_pairs: int):
        cfg.validate()
        self.cfg = cfg
        g_seed, d_seed = _init_seeds(cfg.seed)
        self.generator = build_generator(generator_spec_for(cfg), g_seed)
        dspec = discriminator_spec_for(cfg)
        self.discriminator = build_discriminator(dspec, d_seed) if dspec else None
        betas = (cfg.beta1, cfg.beta2)
        self.opt_g = torch.optim.Adam(self.generator.parameters(), lr=cfg.lr, betas=betas)
        self.opt_d = torch.optim.Adam(self.discriminator.parameters(), lr=cfg.lr, betas=betas) if self.discriminator else None
        self.sampler = BatchSampler(n_pairs, cfg.batch_size, cfg.seed)
        self.iteration = 0

    @property
    def models(self) -> dict:
        return {"generator": self.generator, "discriminator": self.discriminator}

    @property
    def optimizers(self) -> dict:
        return {"generator": self.opt_g, "discriminator": self.opt_d}

    def set_lr(self) -> None:
        # inverse-time decay as in Keras' ``decay`` argument
        lr = self.cfg.lr / (1.0 + self.cfg.decay * self.iteration)
        for opt in (self.opt_g, self.opt_d):
            if opt is not None:
                for g in opt.param_groups:
                    g["lr"] = lr

    def step(self, batch) -> StepMetrics:
        self.set_lr()
        m = train_step(
            batch,
            self.models,
            self.optimizers,
            self.cfg.mode,
            lam=self.cfg.lambda_adv,
            input_term=self.cfg.ssds_input_term,
        )
        self.iteration += 1
        return m

    def to_checkpoint(self) -> Checkpoint:
        opt_states = {"generator": self.opt_g.state_dict()}
        if self.opt_d is not None:
            opt_states["discriminator"] = self.opt_d.state_dict()
        return Checkpoint(
            iteration=self.iteration,
            config=dataclasses.asdict(self.cfg),
            config_digest=self.cfg.digest(),
            generator_spec=self.generator.spec.to_json(),
            generator_state={k: v.clone() for k, v in self.generator.state_dict().items()},
            optimizer_states=opt_states,
            discriminator_spec=self.discriminator.spec.to_json() if self.discriminator else None,
            discriminator_state={k: v.clone() for k, v in self.discriminator.state_dict().items()} if self.discriminator else None,
            rng=self.sampler.state(),
            torch_rng=torch.get_rng_state(),
        )

    def restore(self, ckpt: Checkpoint) -> None:
        if ckpt.config_digest != self.cfg.digest():
            log.warning("resuming from a checkpoint with a different config digest")
        self.generator.load_state_dict(ckpt.generator_state)
        self.opt_g.load_state_dict(ckpt.optimizer_states["generator"])
        if self.discriminator is not None:
            if ckpt.discriminator_state is None:
                raise ValueError("checkpoint has no discriminator but the config mode needs one")
            self.discriminator.load_state_dict(ckpt.discriminator_state)
            self.opt_d.load_state_dict(ckpt.optimizer_states["discriminator"])
        self.sampler.restore(ckpt.rng)
        if ckpt.torch_rng is not None:
            torch.set_rng_state(ckpt.torch_rng)
        self.iteration = ckpt.iteration


def train_step(batch, models, optimizers, mode: str, lam: float = 1e-3, input_term: bool = True) -> StepMetrics:
    """One discriminator update (adversarial modes) followed by one generator update."""
    image, diffuse = batch
    gen, disc = models["generator"], models.get("discriminator")
    opt_g, opt_d = optimizers["generator"], optimizers.get("discriminator")
    gen.train()
    generated = gen(image)
    b = image.shape[0]

    d_value = None
    if mode != "ae":
        disc.train()
        opt_d.zero_grad(set_to_none=True)
        fake = generated.detach()
        if mode == "multiclass":
            p_in, p_diff, p_gen = disc(torch.cat([image, diffuse, fake])).split(b)
            d_loss = discriminator_loss(p_in, p_diff, p_gen)
        else:
            d_real, d_fake = disc(torch.cat([diffuse, fake])).split(b)
            _, d_loss = binary_gan_losses(d_real, d_fake)
        d_loss.backward()
        opt_d.step()
        d_value = d_loss.item()

    opt_g.zero_grad(set_to_none=True)
    c = content_loss(generated, diffuse)
    adv = None
    # the discriminator sees the same batch composition as in its own update,
    # so train-mode batch statistics match between the two steps
    if mode == "multiclass":
        p_gen = disc(torch.cat([image, diffuse, generated])).split(b)[2]
        adv = ssds_loss(p_gen, input_term=input_term)
        total = total_generator_loss(c, adv, lam)
    elif mode == "binary":
        d_fake = disc(torch.cat([diffuse, generated])).split(b)[1]
        adv = binary_generator_loss(d_fake)
        total = total_generator_loss(c, adv, lam)
    else:
        total = c
    total.backward()
    opt_g.step()
    if disc is not None:
        # generator-step gradients on the discriminator are never applied
        opt_d.zero_grad(set_to_none=True)
    return StepMetrics(
        content=c.item(),
        adversarial=None if adv is None else adv.item(),
        disc=d_value,
        total=total.item(),
    )


def checkpoint_path(out_dir: str | os.PathLike, iteration: int) -> Path:
    return Path(out_dir) / "checkpoints" / f"ckpt_{iteration:06d}.despec"


FINAL_CHECKPOINT = "final.despec"
CURVE_FILE = "curve.csv"


def train(cfg: TrainConfig, resume: Optional[str | os.PathLike] = None, data=None) -> tuple[Checkpoint, CurveLog]:
    """Run ``cfg.iterations`` alternating steps, logging curves and checkpoints.

    ``data`` may supply preloaded ``(inputs, diffuse, ids)``; otherwise the
    pairs named by ``cfg.manifest`` are loaded.
    """
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_snapshot(cfg, out / "config.json")
    if data is None:
        manifest = manifest_read(cfg.manifest)
        inputs, diffuse = load_pairs(manifest, cfg.resolution)
        ids = [e.id for e in manifest.entries]
    else:
        inputs, diffuse, ids = data
        if tuple(inputs.shape[-2:]) != (cfg.resolution, cfg.resolution):
            raise DatasetError(f"data resolution {tuple(inputs.shape[-2:])} != config resolution {cfg.resolution}")

    trainer = Trainer(cfg, inputs.shape[0])
    curve = CurveLog()
    if resume is not None:
        trainer.restore(checkpoint_load(resume, expected_digest=cfg.digest()))
        if (out / CURVE_FILE).exists():
            curve = CurveLog.read(out / CURVE_FILE)
            curve.truncate(trainer.iteration)

    with open(out / CURVE_FILE, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CURVE_FIELDS)
        for r in curve.records:
            writer.writerow(CurveLog.format_row(r))
        t_start = time.perf_counter()
        start_iter = trainer.iteration
        while trainer.iteration < cfg.iterations:
            idx = trainer.sampler.next()
            t0 = time.perf_counter()
            m = trainer.step((inputs[idx], diffuse[idx]))
            if not m.finite():
                batch_ids = [ids[i] for i in idx]
                diag = {"iteration": trainer.iteration, "batch_ids": batch_ids, "metrics": dataclasses.asdict(m)}
                (out / "divergence.json").write_text(json.dumps(diag, indent=1))
                raise TrainingDiverged(trainer.iteration, batch_ids, dataclasses.asdict(m))
            rec = curve.append(trainer.iteration, m, (time.perf_counter() - t0) * 1e3)
            writer.writerow(CurveLog.format_row(rec))
            if trainer.iteration % cfg.checkpoint_every == 0 or trainer.iteration == cfg.iterations:
                f.flush()
                checkpoint_save(trainer.to_checkpoint(), checkpoint_path(out, trainer.iteration))
            if trainer.iteration % 100 == 0:
                rate = (time.perf_counter() - t_start) / (trainer.iteration - start_iter)
                log.info("iter %d content %.5f adv %s disc %s (%.2fs/it)", trainer.iteration, m.content, m.adversarial, m.disc, rate)

    final = trainer.to_checkpoint()
    checkpoint_save(final, out / FINAL_CHECKPOINT)
    return final, curve


def generator_from_checkpoint(ckpt: Checkpoint):
    spec = GeneratorSpec(**ckpt.generator_spec)
    gen = build_generator(spec, 0)
    gen.load_state_dict(ckpt.generator_state)
    gen.eval()
    return gen
