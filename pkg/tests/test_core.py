import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from despec.core import (
    REGIMES,
    DatasetManifest,
    ImageError,
    ManifestEntry,
    ManifestError,
    compose_dichromatic,
    dataset_split,
    load_image,
    manifest_read,
    manifest_write,
    regime_counts_for,
    save_image,
)

images = arrays(np.float32, (4, 5, 3), elements=st.floats(0, 1, width=32))


def test_compose_examples():
    d = np.full((2, 2, 3), 0.2, np.float32)
    assert np.array_equal(compose_dichromatic(d, np.zeros_like(d)), d)
    one = lambda v: np.full((1, 1, 3), v, np.float32)
    assert compose_dichromatic(one(0.5), one(0.3))[0, 0, 0] == pytest.approx(0.8)
    assert compose_dichromatic(one(0.9), one(0.4))[0, 0, 0] == 1.0


def test_compose_shape_mismatch():
    with pytest.raises(ImageError):
        compose_dichromatic(np.zeros((2, 2, 3)), np.zeros((2, 3, 3)))


@given(images, images)
def test_compose_dominates_diffuse(d, s):
    assert np.array_equal(compose_dichromatic(d, np.zeros_like(d)), d)
    assert np.all(compose_dichromatic(d, s) >= d)


def test_png_round_trip_exact(tmp_path):
    zeros = np.zeros((32, 32, 3), np.float32)
    save_image(zeros, tmp_path / "z.png")
    assert np.array_equal(load_image(tmp_path / "z.png"), zeros)
    checker = (np.indices((32, 32)).sum(0) % 2).astype(np.float32)[..., None].repeat(3, -1)
    for bits in (8, 16):
        save_image(checker, tmp_path / f"c{bits}.png", bits=bits)
        assert np.array_equal(load_image(tmp_path / f"c{bits}.png"), checker)


def test_png_8bit_quantization(tmp_path):
    save_image(np.full((4, 4, 3), 0.5, np.float32), tmp_path / "h.png", bits=8)
    v = load_image(tmp_path / "h.png")
    assert np.all((v == np.float32(127 / 255)) | (v == np.float32(128 / 255)))


@settings(max_examples=20, deadline=None)
@given(images)
def test_png_round_trip_tolerance(tmp_path_factory, img):
    d = tmp_path_factory.mktemp("png")
    save_image(img, d / "a.png", bits=16)
    save_image(img, d / "b.png", bits=8)
    assert np.abs(load_image(d / "a.png") - img).max() <= 0.5 / 65535 + 1e-7
    assert np.abs(load_image(d / "b.png") - img).max() <= 0.5 / 255 + 1e-7


def test_load_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_image(tmp_path / "missing.png")
    (tmp_path / "junk.png").write_bytes(b"not a png")
    with pytest.raises(ImageError):
        load_image(tmp_path / "junk.png")
    import cv2

    cv2.imwrite(str(tmp_path / "gray.png"), np.zeros((4, 4), np.uint8))
    with pytest.raises(ImageError, match="3 channels"):
        load_image(tmp_path / "gray.png")
    with pytest.raises(ImageError):
        save_image(np.full((2, 2, 3), 1.5, np.float32), tmp_path / "x.png")


def _manifest(root, n, regimes=None, with_files=False):
    entries = []
    for i in range(n):
        pid = f"{i:06d}"
        entries.append(
            ManifestEntry(
                id=pid,
                input=f"pairs/{pid}_input.png",
                diffuse=f"pairs/{pid}_diffuse.png",
                regime=regimes[i] if regimes else REGIMES[i % 4],
                scene_seed=1000 + i,
                shape_id="sphere",
                specular=f"pairs/{pid}_specular.png" if i % 2 else None,
            )
        )
        if with_files:
            for rel in (entries[-1].input, entries[-1].diffuse, entries[-1].specular):
                if rel:
                    save_image(np.zeros((16, 16, 3), np.float32), root / rel)
    return DatasetManifest(root=str(root), entries=entries, config_digest="abc")


def test_manifest_round_trip(tmp_path):
    m = _manifest(tmp_path, 1, with_files=True)
    manifest_write(m, tmp_path / "manifest.json")
    assert manifest_read(tmp_path / "manifest.json") == m


def test_manifest_round_trip_large(tmp_path):
    rng = np.random.default_rng(0)
    regimes = [REGIMES[i] for i in rng.integers(0, 4, 2000)]
    m = _manifest(tmp_path, 2000, regimes)
    m.entries = list(reversed(m.entries))
    m.__post_init__()
    manifest_write(m, tmp_path / "manifest.json")
    back = manifest_read(tmp_path / "manifest.json", strict=False)
    assert back == m
    assert [e.id for e in back.entries] == sorted(e.id for e in m.entries)
    assert len(back.missing) > 0


def test_manifest_errors(tmp_path):
    with pytest.raises(ManifestError):
        manifest_write(DatasetManifest(root=str(tmp_path), entries=[]), tmp_path / "m.json")
    m = _manifest(tmp_path, 3)
    manifest_write(m, tmp_path / "m.json")
    with pytest.raises(ManifestError, match="missing"):
        manifest_read(tmp_path / "m.json")
    doc = json.loads((tmp_path / "m.json").read_text())
    doc["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(doc))
    with pytest.raises(ManifestError, match="version"):
        manifest_read(tmp_path / "v.json", strict=False)


def test_manifest_ratio_check(tmp_path):
    m = _manifest(tmp_path, 10, ["textured"] * 5 + ["white"] * 2 + ["colored_lights"] + ["env_map"] * 2)
    m.ratios = {"textured": 0.5, "white": 0.2, "colored_lights": 0.1, "env_map": 0.2}
    manifest_write(m, tmp_path / "ok.json")
    assert manifest_read(tmp_path / "ok.json", strict=False).ratios == m.ratios
    m.ratios = {"textured": 0.4, "white": 0.3, "colored_lights": 0.1, "env_map": 0.2}
    manifest_write(m, tmp_path / "bad.json")
    with pytest.raises(ManifestError, match="regime counts"):
        manifest_read(tmp_path / "bad.json", strict=False)


@pytest.mark.parametrize(
    "n, expected",
    [(10, (5, 2, 1, 2)), (2000, (1000, 400, 200, 400)), (20000, (10000, 4000, 2000, 4000)), (7, (5, 1, 0, 1))],
)
def test_regime_counts(n, expected):
    ratios = {"textured": 0.5, "white": 0.2, "colored_lights": 0.1, "env_map": 0.2}
    assert tuple(regime_counts_for(n, ratios).values()) == expected


def test_split_deterministic_partition(tmp_path):
    m = _manifest(tmp_path, 100)
    a = dataset_split(m, 0.1, seed=7)
    b = dataset_split(m, 0.1, seed=7)
    assert a == b
    train, val = a
    ids_t = {e.id for e in train.entries}
    ids_v = {e.id for e in val.entries}
    assert not ids_t & ids_v
    assert ids_t | ids_v == {e.id for e in m.entries}
    assert dataset_split(m, 0.1, seed=8)[1] != val


def test_split_stratified(tmp_path):
    counts = {"textured": 1000, "white": 400, "colored_lights": 200, "env_map": 400}
    regimes = [r for r, c in counts.items() for _ in range(c)]
    m = _manifest(tmp_path, 2000, list(np.random.default_rng(1).permutation(regimes)))
    _, val = dataset_split(m, 0.1, seed=3)
    for r, c in val.regime_counts().items():
        assert abs(c - counts[r] / 2000 * val.n) <= 1


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
def test_split_fraction_range(tmp_path, frac):
    with pytest.raises(ValueError):
        dataset_split(_manifest(tmp_path, 10), frac, seed=0)
