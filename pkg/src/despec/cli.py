"""``despec`` command-line tool.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch

from despec.checkpoint import checkpoint_load
from despec.config import MODES, ConfigError, apply_overrides, build_config, parse_config, write_snapshot
from despec.core import load_image, save_image
from despec.desk import cache_dir
from despec.evaluation import ablation_run, curve_stability, evaluate
from despec.nets import DOWNSAMPLE
from despec.renderer.dataset import generate_dataset
from despec.trainer import CurveLog, generator_from_checkpoint, train

log = logging.getLogger("despec")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class UsageError(ConfigError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _snapshot_next_to(out_file: Path, doc: dict) -> None:
    path = out_file.with_name(out_file.stem + ".config.json")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _load_config(args, kind: str):
    overrides = list(args.set or [])
    if getattr(args, "profile", None):
        overrides.insert(0, f"profile={args.profile}")
    cfg = parse_config(args.config, overrides, kind=kind)
    if getattr(args, "out", None):
        cfg = dataclasses.replace(cfg, out_dir=str(args.out))
    return cfg


def cmd_render(args) -> None:
    cfg = _load_config(args, "render")
    if args.workers is not None:
        cfg = dataclasses.replace(cfg, workers=args.workers)
    write_snapshot(cfg, Path(cfg.out_dir) / "config.json")
    m = generate_dataset(cfg)
    counts = ", ".join(f"{k}={v}" for k, v in m.regime_counts().items())
    print(f"wrote {m.n} pairs to {cfg.out_dir} ({counts})")


def cmd_train(args) -> None:
    cfg = _load_config(args, "train")
    if args.manifest:
        cfg = dataclasses.replace(cfg, manifest=str(args.manifest))
    if not cfg.manifest:
        raise ConfigError("train needs a manifest (--manifest or manifest=...)")
    final, curve = train(cfg, resume=args.resume)
    print(f"trained {cfg.mode} to iteration {final.iteration}; outputs in {cfg.out_dir}")


def cmd_eval(args) -> None:
    out = Path(args.out)
    _snapshot_next_to(out, {"checkpoint": str(args.ckpt), "test": str(args.test), "method": args.method})
    report = evaluate(args.ckpt, args.test, method=args.method)
    report.write(out)
    print(f"{report.method}: L2 {report.mean_l2:.6f}  DSSIM {report.mean_dssim:.6f}  ({len(report.records)} images)")


def reflect_pad(image: np.ndarray, multiple: int = DOWNSAMPLE) -> tuple[np.ndarray, tuple[int, int]]:
    h, w = image.shape[:2]
    ph, pw = -h % multiple, -w % multiple
    return np.pad(image, ((0, ph), (0, pw), (0, 0)), mode="reflect"), (h, w)


def infer_image(gen: torch.nn.Module, image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Diffuse estimate and specular residual ``clamp(I - D_hat, 0, 1)``."""
    padded, (h, w) = reflect_pad(image)
    x = torch.from_numpy(np.ascontiguousarray(padded.transpose(2, 0, 1)))[None].float()
    with torch.no_grad():
        d = gen(x)[0].permute(1, 2, 0).numpy()[:h, :w]
    return d, np.clip(image - d, 0.0, 1.0)


def cmd_infer(args) -> None:
    out = Path(args.out)
    spec_out = Path(args.specular_out) if args.specular_out else out.with_name(out.stem + "_specular" + out.suffix)
    _snapshot_next_to(out, {"checkpoint": str(args.ckpt), "input": str(args.inp), "bits": args.bits})
    gen = generator_from_checkpoint(checkpoint_load(args.ckpt))
    diffuse, specular = infer_image(gen, load_image(args.inp))
    save_image(diffuse, out, bits=args.bits)
    save_image(specular, spec_out, bits=args.bits)
    print(f"wrote {out} and {spec_out}")


def cmd_curves(args) -> None:
    out = Path(args.out)
    _snapshot_next_to(out, {"log": str(args.log), "window": args.window, "series": args.series})
    series = CurveLog.read(args.log).series(args.series)
    value = curve_stability(series, args.window)
    doc = {"log": str(args.log), "series": args.series, "window": args.window, "length": int(series.size), "stability": value}
    out.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"stability({args.series}, window {args.window}) = {value:.6g}")


ABLATION_KEYS = {"train", "modes", "seeds", "test", "out_dir", "window"}


def cmd_ablate(args) -> None:
    raw = json.loads(Path(args.config).read_text()) if args.config else {}
    unknown = set(raw) - ABLATION_KEYS
    if unknown:
        raise ConfigError(f"unknown ablation config keys: {sorted(unknown)}")
    base = build_config("train", apply_overrides(dict(raw.get("train", {})), args.set or []))
    modes = raw.get("modes", list(MODES))
    seeds = raw.get("seeds", [0, 1, 2])
    test = args.test or raw.get("test")
    if not base.manifest or not test:
        raise ConfigError("ablation needs train.manifest and test")
    out = Path(args.out or raw.get("out_dir") or cache_dir() / "ablation" / base.digest()[:12])
    window = int(raw.get("window", 500))
    snapshot = {"train": dataclasses.asdict(base), "modes": modes, "seeds": seeds, "test": str(test), "window": window}
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(snapshot, indent=1, sort_keys=True) + "\n")
    try:
        table = ablation_run(base, modes, seeds, test, out, window=window)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    for row in table.rows:
        print(json.dumps(row))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="despec", description="Synthetic specular/diffuse corpora, separation training and evaluation.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--profile", help="named preset, e.g. desk or paper")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")

    r = sub.add_parser("render-dataset", help="render a synthetic corpus")
    with_config(r)
    r.add_argument("--out", help="output directory")
    r.add_argument("--workers", type=int)
    r.set_defaults(func=cmd_render)

    t = sub.add_parser("train", help="train a separation network")
    with_config(t)
    t.add_argument("--manifest", help="training manifest")
    t.add_argument("--out", help="run directory")
    t.add_argument("--resume", help="checkpoint to continue from")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a test set")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--test", required=True, help="test manifest")
    e.add_argument("--out", required=True, help="report JSON path")
    e.add_argument("--method", help="label for the report")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("infer", help="separate a single image")
    i.add_argument("--ckpt", required=True)
    i.add_argument("--in", dest="inp", required=True)
    i.add_argument("--out", required=True, help="diffuse output PNG")
    i.add_argument("--specular-out", help="specular residual PNG (default <out>_specular.png)")
    i.add_argument("--bits", type=int, choices=(8, 16), default=16)
    i.set_defaults(func=cmd_infer)

    c = sub.add_parser("curves", help="learning-curve stability")
    c.add_argument("--log", required=True, help="curve.csv from a training run")
    c.add_argument("--window", type=int, default=500)
    c.add_argument("--series", default="content", choices=("content", "ssds", "disc"))
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_curves)

    a = sub.add_parser("ablate", help="train and compare ae/binary/multiclass")
    a.add_argument("--config", help="JSON with train, modes, seeds, test, out_dir, window")
    a.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a train config key")
    a.add_argument("--test", help="test manifest")
    a.add_argument("--out")
    a.set_defaults(func=cmd_ablate)
    return p


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("traceback", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
