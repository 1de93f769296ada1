import json

import pytest

from despec.config import (
    DEFAULT_RATIOS,
    ConfigError,
    RenderConfig,
    TrainConfig,
    build_config,
    parse_config,
    write_snapshot,
)


def test_defaults():
    cfg = parse_config(None, [])
    assert cfg == TrainConfig()
    assert cfg.batch_size == 16 and cfg.lr == 2e-4 and cfg.lambda_adv == 1e-3 and cfg.decay == 0.0
    assert parse_config(None, [], kind="render") == RenderConfig()


def test_override_changes_digest(tmp_path):
    (tmp_path / "t.json").write_text(json.dumps({"mode": "binary"}))
    base = parse_config(tmp_path / "t.json")
    cfg = parse_config(tmp_path / "t.json", ["lr=1e-3"])
    assert cfg.lr == 1e-3 and cfg.mode == "binary"
    assert cfg.digest() != base.digest()
    assert parse_config(tmp_path / "t.json", ["out_dir=elsewhere"]).digest() == base.digest()


def test_alias_and_lists():
    cfg = parse_config(None, ["lambda=0.01", "gen_widths=[8,8,8,8]", "ssds_input_term=false"])
    assert cfg.lambda_adv == 0.01 and cfg.gen_widths == [8, 8, 8, 8] and cfg.ssds_input_term is False
    r = build_config("render", {"ratios": [0.25, 0.25, 0.25, 0.25]})
    assert r.ratios == {"textured": 0.25, "white": 0.25, "colored_lights": 0.25, "env_map": 0.25}


@pytest.mark.parametrize(
    "overrides",
    [["nope=1"], ["batch_size=abc"], ["batch_size=1.5"], ["mode=gan"], ["lambda=-1"], ["resolution=40"], ["batch_size"]],
)
def test_override_errors(overrides):
    with pytest.raises(ConfigError):
        parse_config(None, overrides)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        parse_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "bad.json")
    (tmp_path / "list.json").write_text("[1, 2]")
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "list.json")


def test_render_validation():
    with pytest.raises(ConfigError):
        build_config("render", {"ratios": {"textured": 0.5, "white": 0.5, "colored_lights": 0.5, "env_map": 0.0}})
    with pytest.raises(ConfigError):
        build_config("render", {"n": 0})
    with pytest.raises(ConfigError):
        build_config("render", {"shape_set": "validation"})


def test_profiles():
    desk = build_config("render", {"profile": "desk"})
    assert desk.n == 2000 and desk.resolution == 64 and desk.ratios == DEFAULT_RATIOS
    t = build_config("train", {"profile": "desk"})
    assert t.iterations == 3000 and t.resolution == 64 and t.batch_size == 16
    p = build_config("train", {"profile": "paper"})
    assert p.iterations == 30000 and p.resolution == 256 and p.gen_widths == [64, 128, 256, 512]
    assert build_config("train", {"profile": "desk", "iterations": 10}).iterations == 10
    with pytest.raises(ConfigError):
        build_config("train", {"profile": "huge"})


def test_render_digest_ignores_output_location():
    a = RenderConfig(out_dir="a", workers=1)
    assert a.digest() == RenderConfig(out_dir="b", workers=4).digest()
    assert a.digest() != RenderConfig(seed=1).digest()


def test_snapshot(tmp_path):
    cfg = TrainConfig(seed=4)
    write_snapshot(cfg, tmp_path / "s" / "config.json")
    doc = json.loads((tmp_path / "s" / "config.json").read_text())
    assert doc["digest"] == cfg.digest()
    assert build_config("train", doc["config"]) == cfg
