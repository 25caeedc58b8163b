"""Command-line entry point: train, enhance, evaluate, fit-niqe.

Exit codes are a stable scripting contract: 0 success, 1 runtime failure,
2 usage/config error.  ``--section.key value`` (or a unique bare key)
overrides any config file field for ``train``.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

from .config import RunConfig
from .errors import ConfigError, DataError, RelightError
from .imaging import load_image, save_image
from .metrics import NiqeModel, evaluate_pairs, fit_niqe_model, write_report
from .pipeline import Checkpoint, checkpoint_to_state, derive_seed, enhance_image, train

CONFIG_ENV_VAR = "RELIGHT_CONFIG"
_IMAGE_GLOBS = ("*.png", "*.jpg", "*.jpeg", "*.PNG", "*.JPG", "*.JPEG")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relight",
        description="Zero-reference low-light image enhancement",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model from a config file")
    p_train.add_argument("--config", help=f"TOML config (default: ${CONFIG_ENV_VAR})")
    p_train.add_argument("--output", help="output dir (overrides paths.output_dir)")
    p_train.add_argument("--resume", help="resume from a checkpoint file")

    p_enh = sub.add_parser("enhance", help="enhance one image or a directory")
    p_enh.add_argument("--checkpoint", required=True)
    p_enh.add_argument("--input", required=True, help="image file or directory")
    p_enh.add_argument("--output", required=True, help="output directory")
    p_enh.add_argument("--seed", type=int, default=0)
    p_enh.add_argument("--save-illumination", action="store_true")
    p_enh.add_argument("--jobs", type=int, default=1)

    p_eval = sub.add_parser("evaluate", help="score a directory of enhanced images")
    p_eval.add_argument("enhanced", help="directory of enhanced images")
    p_eval.add_argument("--reference", help="ground-truth images with matching names")
    p_eval.add_argument("--original", help="pre-enhancement inputs (LOE baseline)")
    p_eval.add_argument("--report", default="report.json", help="JSON report path")
    p_eval.add_argument("--niqe-model", help="NIQE model file (default: bundled)")

    p_fit = sub.add_parser("fit-niqe", help="fit a NIQE pristine model offline")
    p_fit.add_argument("--images", required=True, help="directory of pristine images")
    p_fit.add_argument("--out", required=True, help="output .npz model path")
    p_fit.add_argument("--patch", type=int, default=96)
    return parser


def _split_overrides(extra: list[str]) -> list[tuple[str, str]]:
    pairs = []
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise ConfigError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            if i + 1 >= len(extra):
                raise ConfigError(f"override {token!r} is missing a value")
            value = extra[i + 1]
            i += 1
        pairs.append((key, value))
        i += 1
    return pairs


def _glob_images(directory: Path) -> list[Path]:
    files: list[Path] = []
    for pattern in _IMAGE_GLOBS:
        files.extend(directory.glob(pattern))
    return sorted(set(files))


def _cmd_train(args, extra) -> int:
    overrides = _split_overrides(extra)
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    run = RunConfig.load(config_path, overrides)
    out_dir = Path(args.output or run.get("paths", "output_dir") or ".")
    train_config = run.to_train_config()
    out_dir.mkdir(parents=True, exist_ok=True)
    run.save_snapshot(out_dir / "config_resolved.toml")
    ckpt = train(train_config, out_dir=out_dir, resume_from=args.resume)
    print(f"trained {ckpt.iteration} iterations -> {out_dir / 'checkpoint.ckpt'}")
    return 0


def _enhance_one(state, path: Path, out_dir: Path, seed: int, save_illum: bool) -> None:
    img = load_image(path, crop_to_even=True)
    file_seed = derive_seed(seed, f"enhance:{path.name}", 0)
    enhanced, illum = enhance_image(state, img, seed=file_seed)
    save_image(enhanced, out_dir / f"{path.stem}.png")
    if save_illum:
        # kept out of the output dir proper so `evaluate` can scan it cleanly
        illum_dir = out_dir / "illumination"
        illum_dir.mkdir(exist_ok=True)
        save_image(illum, illum_dir / f"{path.stem}.png")


def _cmd_enhance(args, extra) -> int:
    if extra:
        raise ConfigError(f"unknown arguments: {' '.join(extra)}")
    ckpt_path = Path(args.checkpoint)
    if not ckpt_path.exists():
        raise ConfigError(f"checkpoint not found: {ckpt_path}")
    state = checkpoint_to_state(Checkpoint.load(ckpt_path))
    in_path = Path(args.input)
    files = _glob_images(in_path) if in_path.is_dir() else [in_path]
    if not files:
        raise DataError(f"no images found under {in_path}")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "enhance_args.json").write_text(
        json.dumps(
            {
                "checkpoint": str(ckpt_path),
                "input": str(in_path),
                "output": str(out_dir),
                "seed": args.seed,
                "save_illumination": args.save_illumination,
                "jobs": args.jobs,
            },
            indent=2,
        )
        + "\n"
    )

    failures = 0

    def run_one(f: Path):
        _enhance_one(state, f, out_dir, args.seed, args.save_illumination)

    if args.jobs > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=args.jobs) as pool:
            futures = {pool.submit(run_one, f): f for f in files}
            for fut, f in futures.items():
                try:
                    fut.result()
                except (OSError, ValueError) as exc:
                    failures += 1
                    print(f"warning: {f}: {exc}", file=sys.stderr)
    else:
        for f in files:
            try:
                run_one(f)
            except (OSError, ValueError) as exc:
                failures += 1
                print(f"warning: {f}: {exc}", file=sys.stderr)
    if failures == len(files):
        print("error: every input failed", file=sys.stderr)
        return 1
    print(f"enhanced {len(files) - failures}/{len(files)} images -> {out_dir}")
    return 0


def _cmd_evaluate(args, extra) -> int:
    if extra:
        raise ConfigError(f"unknown arguments: {' '.join(extra)}")
    model = NiqeModel.load(args.niqe_model) if args.niqe_model else None
    report = evaluate_pairs(
        args.enhanced,
        reference_dir=args.reference,
        original_dir=args.original,
        model=model,
    )
    write_report(report, args.report)
    means = report["means"]
    print(f"{'metric':<8}{'mean':>12}")
    for name in ("psnr", "ssim", "niqe", "loe"):
        val = means[name]
        shown = "-" if val is None else f"{val:.3f}"
        note = ""
        if name == "psnr" and means["psnr_inf_count"]:
            note = f"  ({means['psnr_inf_count']} inf excluded)"
        print(f"{name.upper():<8}{shown:>12}{note}")
    print(f"report written to {args.report}")
    return 0


def _cmd_fit_niqe(args, extra) -> int:
    if extra:
        raise ConfigError(f"unknown arguments: {' '.join(extra)}")
    img_dir = Path(args.images)
    files = _glob_images(img_dir)
    if not files:
        raise DataError(f"no images found under {img_dir}")
    model = fit_niqe_model((load_image(f) for f in files), patch_size=args.patch)
    model.save(args.out)
    print(f"fitted NIQE model on {len(files)} images -> {args.out}")
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "enhance": _cmd_enhance,
    "evaluate": _cmd_evaluate,
    "fit-niqe": _cmd_fit_niqe,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        return _COMMANDS[args.command](args, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (RelightError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
