"""Command-line front end.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric abort.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, load_checkpoint
from .config import ConfigError, parse_config
from .data import (
    CropError,
    DatasetError,
    ImageFormatError,
    load_dataset,
    load_image,
    read_manifest,
    read_split,
    save_image,
    split_dataset,
    synth_dataset,
    write_dataset,
    write_split,
)
from .metrics import DegeneratePredictionError, MetricsReport, baseline_constant, evaluate_pairs
from .training import NumericalError, evaluate, evaluate_two_fold, train
from .validation import check_product

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
RESOLVED_CONFIG = "run_config.txt"

# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed",
    "iterations": "train.iterations",
    "batch_size": "train.batch_size",
    "warmup": "train.warmup",
    "disc_per_gen": "train.disc_per_gen",
    "lam": "train.lambda",
    "lr_start": "train.lr_start",
    "lr_end": "train.lr_end",
    "crop_size": "train.crop_size",
    "width": "model.width",
    "blocks": "model.blocks",
    "target": "model.target",
    "count": "data.count",
    "size": "data.size",
    "split_mode": "data.split_mode",
    "split_seed": "data.split_seed",
    "fraction": "data.fraction",
    "folds": "eval.folds",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _config_flags(p, keys):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    for dest in keys:
        flag = "--lambda" if dest == "lam" else "--" + dest.replace("_", "-")
        p.add_argument(flag, dest=dest, default=None, help=f"override {FLAG_KEYS[dest]}")


def _resolve(args):
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for dest, key in FLAG_KEYS.items():
        if getattr(args, dest, None) is not None:
            overrides[key] = getattr(args, dest)
    return parse_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="darn", description="Intrinsic image decomposition with a product-consistent generator.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic Mondrian dataset")
    p.add_argument("--out", required=True)
    _config_flags(p, ["seed", "count", "size", "split_mode", "split_seed", "fraction"])

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="train", help="split file name, or 'all'")
    _config_flags(p, ["seed", "iterations", "batch_size", "warmup", "disc_per_gen", "lam",
                      "lr_start", "lr_end", "crop_size", "width", "blocks", "target"])

    p = sub.add_parser("eval", help="score a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--checkpoint2", help="model trained on the reciprocal split (two-fold)")
    p.add_argument("--split2", default="train", help="test split of the second model")
    p.add_argument("--out", required=True, help="metrics CSV path")
    _config_flags(p, ["folds"])

    p = sub.add_parser("decompose", help="split one PNG into albedo and shading")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("image")
    p.add_argument("--out-dir", default=None)

    p = sub.add_parser("metrics", help="score prediction trees against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--scale", choices=("raw", "table", "both"), default="both")

    p = sub.add_parser("baselines", help="constant-shading and constant-albedo reports")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("config", help="configuration utilities")
    p.add_argument("action", choices=("dump",))
    _config_flags(p, list(FLAG_KEYS))
    return parser


def _load_split(root, split):
    ids = None if split == "all" else read_split(root, split)
    return load_dataset(root, ids)


def _print_summary(report: MetricsReport, scale: str = "both"):
    scales = {"raw": [("raw", 1.0)], "table": [("x100", 100.0)], "both": [("raw", 1.0), ("x100", 100.0)]}[scale]
    for label, k in scales:
        s = report.summary(k)
        fams = "  ".join(f"{f}={s[f]['average']:.6g}" for f in ("si_mse", "si_lmse", "dssim", "mse"))
        print(f"[{label}] n={s['count']}  {fams}  rs_mse={s['rs_mse']:.6g}")


def cmd_synth(args) -> int:
    cfg = _resolve(args)
    v = cfg.values
    samples = synth_dataset(v["seed"], v["data.count"], v["data.size"], cfg.synth_config(),
                            v["data.frames_per_scene"])
    out = Path(args.out)
    write_dataset(out, samples)
    train_set, test_set = split_dataset(samples, cfg.split_spec())
    write_split(out, "train", train_set)
    write_split(out, "test", test_set)
    cfg.write(out / RESOLVED_CONFIG)
    print(f"wrote {len(samples)} samples ({len(train_set)} train / {len(test_set)} test) to {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve(args)
    tc = cfg.train_config()
    samples = _load_split(args.data, args.split)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg.write(out / RESOLVED_CONFIG)
    result = train(tc, samples, out_dir=out, progress=print)
    print(f"checkpoint: {result.checkpoint}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args)
    folds = 2 if args.checkpoint2 else cfg["eval.folds"]
    if folds == 2:
        if not args.checkpoint2:
            raise ConfigError("eval.folds = 2 needs --checkpoint2")
        report = evaluate_two_fold([args.checkpoint, args.checkpoint2],
                                   [_load_split(args.data, args.split), _load_split(args.data, args.split2)])
    else:
        report = evaluate(args.checkpoint, _load_split(args.data, args.split))
    report.to_csv(args.out)
    _print_summary(report)
    return EXIT_OK


def _fit_range(image, albedo, shading):
    """Bring both components inside [0, 1] without breaking albedo * shading = image.

    A single global factor is tried first since it leaves the prediction untouched up to the
    scale ambiguity. If no factor fits, shading is clamped per pixel into [image, 1] and the
    albedo recomputed, which only moves pixels that could not be written anyway.
    """
    amax, smax = float(albedo.max()), float(shading.max())
    if amax * smax <= 1:
        k = amax if amax > 1 else (1 / smax if smax > 1 else 1.0)
        return albedo / k, shading * k, 0
    shading = shading * (1 / smax)
    lifted = np.maximum(shading, image)
    moved = int(np.count_nonzero(lifted != shading))
    shading = np.clip(lifted, 1e-6, 1.0)
    return image / shading, shading, moved


def cmd_decompose(args) -> int:
    bundle = load_checkpoint(args.checkpoint)
    path = Path(args.image)
    image = load_image(path)
    pair = bundle.generator.decompose(image)
    albedo, shading, moved = _fit_range(image, pair.albedo, pair.shading)
    if moved:
        print(f"warning: shading raised at {moved} values to keep albedo within [0, 1]", file=sys.stderr)
    check_product(image, albedo, shading)
    out = Path(args.out_dir) if args.out_dir else path.parent
    out.mkdir(parents=True, exist_ok=True)
    save_image(out / f"{path.stem}_albedo.png", albedo)
    save_image(out / f"{path.stem}_shading.png", shading)
    print(f"wrote {out / (path.stem + '_albedo.png')} and {out / (path.stem + '_shading.png')}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    gt_root, pred_root = Path(args.gt), Path(args.pred)
    items = []
    for sid, _scene, _clean, apath, spath in read_manifest(gt_root):
        items.append((sid, load_image(gt_root / apath), load_image(pred_root / apath),
                      load_image(gt_root / spath), load_image(pred_root / spath)))
    if not items:
        raise DatasetError(f"no ground truth found under {gt_root}")
    report = evaluate_pairs(items)
    if args.out:
        report.to_csv(args.out)
    _print_summary(report, args.scale)
    return EXIT_OK


def cmd_baselines(args) -> int:
    samples = _load_split(args.data, args.split)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for component in ("shading", "albedo"):
        report = baseline_constant(component, samples)
        report.to_csv(out / f"baseline_{component}.csv")
        print(f"constant {component}:")
        _print_summary(report)
    return EXIT_OK


def cmd_config(args) -> int:
    sys.stdout.write(_resolve(args).dump())
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "decompose": cmd_decompose,
    "metrics": cmd_metrics, "baselines": cmd_baselines, "config": cmd_config,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericalError, FloatingPointError, DegeneratePredictionError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DatasetError, ImageFormatError, CheckpointError, CropError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
