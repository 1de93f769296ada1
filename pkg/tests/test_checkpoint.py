import struct
import warnings

import pytest
import torch

from despec.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    checkpoint_load,
    checkpoint_save,
    decode,
    encode,
)
from despec.config import RenderConfig, TrainConfig
from despec.renderer import generate_dataset
from despec.trainer import CurveLog, Trainer, load_pairs, train

TINY = dict(batch_size=4, resolution=16, gen_widths=[4, 4, 4, 4], disc_base_width=2, checkpoint_every=5)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("ck")
    return generate_dataset(RenderConfig(n=10, resolution=16, samples_per_light=2, out_dir=str(root)))


def _trained(mode="multiclass"):
    tr = Trainer(TrainConfig(**TINY, mode=mode), 10)
    g = torch.Generator().manual_seed(0)
    x = torch.rand(4, 3, 16, 16, generator=g)
    tr.step((x, x * 0.5))
    return tr


@pytest.mark.parametrize("mode", ["multiclass", "binary", "ae"])
def test_save_load_save_identical(tmp_path, mode):
    ck = _trained(mode).to_checkpoint()
    checkpoint_save(ck, tmp_path / "a.despec")
    back = checkpoint_load(tmp_path / "a.despec")
    checkpoint_save(back, tmp_path / "b.despec")
    assert (tmp_path / "a.despec").read_bytes() == (tmp_path / "b.despec").read_bytes()
    assert back.iteration == 1 and back.config_digest == ck.config_digest
    for k, v in ck.generator_state.items():
        assert torch.equal(back.generator_state[k], v)
    assert (back.discriminator_state is None) == (mode == "ae")


def test_restore_gives_same_next_step():
    a = _trained()
    b = Trainer(TrainConfig(**TINY), 10)
    b.restore(decode(encode(a.to_checkpoint())))
    x = torch.rand(4, 3, 16, 16, generator=torch.Generator().manual_seed(1))
    assert a.step((x, x * 0.3)) == b.step((x, x * 0.3))


def test_bad_files(tmp_path):
    data = encode(_trained("ae").to_checkpoint())
    with pytest.raises(CheckpointError, match="magic"):
        decode(b"XXXXXXXX" + data[8:])
    wrong = MAGIC + struct.pack("<I", FORMAT_VERSION + 1) + data[12:]
    with pytest.raises(CheckpointError, match="version"):
        decode(wrong)
    with pytest.raises(CheckpointError, match="truncated"):
        decode(data[:-10])


def test_digest_mismatch_warns(tmp_path):
    checkpoint_save(_trained("ae").to_checkpoint(), tmp_path / "c.despec")
    with pytest.warns(UserWarning, match="digest"):
        checkpoint_load(tmp_path / "c.despec", expected_digest="0" * 64)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        checkpoint_load(tmp_path / "c.despec", expected_digest=None)


@pytest.mark.parametrize("mode", ["multiclass", "binary", "ae"])
def test_resume_matches_uninterrupted(corpus, tmp_path, mode):
    data = (*load_pairs(corpus, 16), [e.id for e in corpus.entries])
    base = dict(TINY, mode=mode, manifest=corpus.path("manifest.json"))
    full_cfg = TrainConfig(**base, iterations=15, out_dir=str(tmp_path / "full"))
    _, full = train(full_cfg, data=data)

    part_cfg = TrainConfig(**base, iterations=15, out_dir=str(tmp_path / "part"))
    real_step = Trainer.step

    def crash_after_7(self, batch):
        if self.iteration == 7:
            raise KeyboardInterrupt
        return real_step(self, batch)

    with pytest.MonkeyPatch.context() as mp:
        mp.setattr(Trainer, "step", crash_after_7)
        with pytest.raises(KeyboardInterrupt):
            train(part_cfg, data=data)
    assert not (tmp_path / "part" / "final.despec").exists()
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        _, resumed = train(part_cfg, resume=tmp_path / "part" / "checkpoints" / "ckpt_000005.despec", data=data)
    key = lambda c: [(r["iteration"], r["content"], r["ssds"], r["disc"]) for r in c.records]
    assert key(resumed) == key(full)
    assert key(CurveLog.read(tmp_path / "part" / "curve.csv")) == key(full)
    a = checkpoint_load(tmp_path / "full" / "final.despec")
    b = checkpoint_load(tmp_path / "part" / "final.despec")
    # identical apart from the run directory recorded in the config
    assert a.config_digest == b.config_digest and a.rng == b.rng
    for sa, sb in ((a.generator_state, b.generator_state), (a.discriminator_state or {}, b.discriminator_state or {})):
        assert sa.keys() == sb.keys() and all(torch.equal(sa[k], sb[k]) for k in sa)
