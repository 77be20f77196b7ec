"""Command line entry point wiring data generation, both training stages,
evaluation, inference, and plotting into one subcommand-style tool."""

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import datagen
from .config import ConfigError, RunConfig, apply_overrides, load_config, save_config
from .evaluation import compression_sweep, evaluate, save_records
from .features.flow import default_estimator
from .model import AblationFlags

log = logging.getLogger("mvf")


def _run_dir(args, command):
    out = args.out or os.path.join("runs", f"{command}-{time.strftime('%Y%m%d-%H%M%S')}")
    os.makedirs(out, exist_ok=True)
    return out


def _load_cfg(args) -> RunConfig:
    if args.config:
        if not os.path.isfile(args.config):
            raise FileNotFoundError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    else:
        if args.seed is None:
            raise ConfigError("provide --config or --seed")
        cfg = RunConfig(seed=args.seed)
    if args.set:
        cfg = apply_overrides(cfg, args.set)
    if args.seed is not None:
        cfg = apply_overrides(cfg, [f"seed={args.seed}"])
    return cfg


def _echo(cfg, out):
    save_config(cfg, os.path.join(out, "config.yaml"))


def _estimator(cfg):
    return default_estimator(levels=cfg.model.flow_levels,
                             iterations=cfg.model.flow_iterations,
                             alpha=cfg.model.flow_alpha)


def _generate_clips(cfg, count, seed_base, workers):
    kinds = list(cfg.data.manipulation_kinds)
    lo_hi = tuple(cfg.data.area_fraction)

    def one(i):
        base = datagen.make_authentic_clip(cfg.data.frame_hw, cfg.data.clip_len,
                                           seed_base + 2 * i)
        if i % 2 == 0:
            return base
        kind = kinds[(i // 2) % len(kinds)]
        mcfg = datagen.ManipulationConfig(
            kind=kind, area_fraction_range=lo_hi,
            edit_ops=tuple(cfg.data.edit_ops),
            temporal_independence=(kind == "temporal_inpaint"))
        return datagen.make_manipulated_clip(base, mcfg, seed_base + 2 * i + 1)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, range(count)))
    return [one(i) for i in range(count)]


def cmd_gen_data(args):
    cfg = _load_cfg(args)
    out = _run_dir(args, "gen-data")
    _echo(cfg, out)
    camera = datagen.make_camera_dataset(cfg.data.camera_models,
                                         cfg.data.frames_per_model,
                                         cfg.data.frame_hw, cfg.seed)
    datagen.save_camera_dataset(camera, os.path.join(out, "camera"))
    splits = {"train": (cfg.data.num_train_clips, 1000),
              "val": (cfg.data.num_val_clips, 2000),
              "test": (cfg.data.num_test_clips, 3000)}
    for name, (count, offset) in splits.items():
        clips = _generate_clips(cfg, count, cfg.seed * 10 + offset, args.workers)
        datagen.save_clip_set(clips, os.path.join(out, "clips", name))
    print(f"wrote camera frames and clip splits under {out}")
    return 0


def cmd_pretrain(args):
    from .training import pretrain
    cfg = _load_cfg(args)
    out = _run_dir(args, "pretrain")
    _echo(cfg, out)
    camera_dir = os.path.join(args.data, "camera") if args.data else None
    if camera_dir and os.path.isdir(camera_dir):
        dataset = datagen.load_camera_dataset(camera_dir)
    else:
        dataset = datagen.make_camera_dataset(cfg.data.camera_models,
                                              cfg.data.frames_per_model,
                                              cfg.data.frame_hw, cfg.seed)
    path, _, _ = pretrain(dataset, cfg, out)
    print(f"pretrained trunk checkpoint: {path}")
    return 0


def _load_split(data_root, name):
    return datagen.load_clip_set(os.path.join(data_root, "clips", name))


def cmd_train(args):
    from .training import train_full
    cfg = _load_cfg(args)
    out = _run_dir(args, "train")
    _echo(cfg, out)
    if args.pretrained and not os.path.isfile(args.pretrained):
        raise FileNotFoundError(f"pretrained checkpoint not found: {args.pretrained}")
    train_clips = _load_split(args.data, "train")
    val_clips = _load_split(args.data, "val")
    ablation = AblationFlags.from_names(args.ablation) if args.ablation else None
    best, _, _ = train_full(train_clips, val_clips, cfg, out,
                            pretrained=args.pretrained, ablation=ablation)
    print(f"best checkpoint: {best}")
    return 0


def _load_model(args, cfg):
    from .training import load_model
    if not os.path.isfile(args.ckpt):
        raise FileNotFoundError(f"checkpoint not found: {args.ckpt}")
    return load_model(args.ckpt)


def cmd_eval(args):
    cfg = _load_cfg(args)
    out = _run_dir(args, "eval")
    _echo(cfg, out)
    model = _load_model(args, cfg)
    clips = _load_split(args.data, args.split)
    report = evaluate(model, clips, threshold=cfg.eval.mask_threshold,
                      estimator=_estimator(cfg), flow_order=cfg.model.flow_argument_order,
                      use_mask_score=cfg.eval.score_from_mask,
                      sweep_threshold=cfg.eval.sweep_threshold, config=cfg.to_dict())
    report.save(os.path.join(out, "report.json"))
    with open(os.path.join(out, "report.csv"), "w") as fh:
        fh.write("metric,value\n")
        fh.write(f"map_pooled,{report.map_pooled}\n")
        fh.write(f"mean_f1,{report.mean_f1}\n")
    save_records(report._records, os.path.join(out, "records"))
    print(f"mAP {report.map_pooled:.4f} F1 {report.mean_f1:.4f} -> {out}")
    return 0


def cmd_infer(args):
    from .evaluation import predict_clip
    from PIL import Image
    cfg = _load_cfg(args)
    out = _run_dir(args, "infer")
    _echo(cfg, out)
    model = _load_model(args, cfg)
    clip = datagen.load_clip(args.clip)
    scores, masks = predict_clip(model, clip, _estimator(cfg),
                                 flow_order=cfg.model.flow_argument_order)
    with open(os.path.join(out, "scores.json"), "w") as fh:
        json.dump({str(i): float(s) for i, s in enumerate(scores)}, fh, indent=1)
    for i, mask in enumerate(masks):
        arr = np.clip(np.round(mask * 255), 0, 255).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(os.path.join(out, f"mask_{i:04d}.png"))
    print(f"wrote scores.json and {len(masks)} mask PNGs to {out}")
    return 0


def cmd_sweep(args):
    cfg = _load_cfg(args)
    out = _run_dir(args, "sweep")
    _echo(cfg, out)
    model = _load_model(args, cfg)
    clips = _load_split(args.data, args.split)
    qualities = args.qualities or list(cfg.eval.qualities)
    reports = compression_sweep(model, clips, qualities,
                                threshold=cfg.eval.mask_threshold,
                                estimator=_estimator(cfg),
                                flow_order=cfg.model.flow_argument_order,
                                config=cfg.to_dict(),
                                plot_path=os.path.join(out, "sweep.svg"))
    with open(os.path.join(out, "sweep.json"), "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=1)
    for r in reports:
        print(f"{r.quality}: mAP {r.map_pooled:.4f} F1 {r.mean_f1:.4f}")
    return 0


def cmd_plot(args):
    import csv as csvmod

    from .plotting import line_plot_svg
    if not os.path.isfile(args.csv):
        raise FileNotFoundError(f"csv file not found: {args.csv}")
    with open(args.csv) as fh:
        rows = list(csvmod.DictReader(fh))
    if not rows:
        raise ValueError(f"no rows in {args.csv}")
    x_key = args.x or list(rows[0].keys())[0]
    series = {}
    for key in rows[0]:
        if key == x_key:
            continue
        try:
            series[key] = [float(r[key]) for r in rows]
        except ValueError:
            continue
    xs = [float(r[x_key]) for r in rows]
    out = args.out or (os.path.splitext(args.csv)[0] + ".svg")
    line_plot_svg(out, xs, series, title=os.path.basename(args.csv), xlabel=x_key,
                  ylabel="value", metadata={"source": args.csv, "rows": rows})
    print(f"wrote {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mvf",
        description="Video forgery detection and localization: synthetic data, "
                    "two-stage training, evaluation, and inference.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="run directory (default: runs/<cmd>-<timestamp>)")
        p.add_argument("--workers", type=int, default=1, help="parallel workers")
        p.add_argument("--device", default="cpu", help="compute device")
        p.add_argument("--set", action="append", default=[],
                       metavar="KEY=VALUE", help="config override, e.g. train.epochs=3")

    p = sub.add_parser("gen-data", help="generate camera frames and clip splits")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", help="camera-model pretraining of the spatial trunk")
    common(p)
    p.add_argument("--data", help="gen-data output directory (else data is regenerated)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="full network training")
    common(p)
    p.add_argument("--data", required=True, help="gen-data output directory")
    p.add_argument("--pretrained", help="pretrained trunk checkpoint")
    p.add_argument("--ablation", nargs="*", default=[],
                   help="ablation flags, e.g. no_optflow_residual")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a clip split")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="score and localize one clip directory")
    common(p)
    p.add_argument("--clip", required=True)
    p.add_argument("--ckpt", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="re-encode quality ladder evaluation")
    common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--qualities", nargs="*")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="plot a curves CSV as SVG")
    p.add_argument("--csv", required=True)
    p.add_argument("--x", help="x-axis column (default: first)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
