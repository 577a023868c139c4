"""Command-line entry point: data generation, training, inference, evaluation, rollout, rendering."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import torch

from .diffusion import DiffusionConfig
from .errors import ConfigMismatch, ContainerError, FrameOutOfRange, NonFiniteState, ShapeMismatch
from .evaluation import autoregressive_rollout, evaluate_task, sample_videos
from .fields import FieldVideo, TaskKind, TaskSpec, apply_mask, read_container, write_container
from .masks import MaskRng, mask_for_task
from .model.checkpoint import load_checkpoint
from .model.config import HvditConfig
from .solvers.dataset import TrajectoryDataset, generate_dataset, generate_trajectory, parse_family
from .training import TrainConfig, fit

log = logging.getLogger("pdeinpaint")

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

TASK_NAMES = {
    "continuous-sensors": TaskKind.CONTINUOUS_SENSORS,
    "forward-full": TaskKind.FORWARD_FULL,
    "inverse-full": TaskKind.INVERSE_FULL,
    "forward-partial": TaskKind.FORWARD_PARTIAL,
    "inverse-partial": TaskKind.INVERSE_PARTIAL,
    "unrestricted": TaskKind.UNRESTRICTED,
}


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


def task_from_args(name: str, rate: float) -> TaskSpec:
    kind = TASK_NAMES[name]
    return TaskSpec(kind, 1.0 if kind.is_full else rate)


def _echo(out_dir: Path, name: str, obj) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / name).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "threads", "verbose")}


def _load_ckpt(path):
    if not Path(path).exists():
        raise DataError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def _load_video(path) -> FieldVideo:
    if not Path(path).exists():
        raise DataError(f"input not found: {path}")
    return read_container(path)


# gen-data


def cmd_gen_data(args) -> int:
    out = Path(args.out)
    generate_dataset(parse_family(args.family), args.count, out, args.seed, args.size, args.frames, val_fraction=args.val_fraction)
    _echo(out, "gen_data_args.json", _args_dict(args))
    return 0


# train

CONFIG_SECTIONS = ("data", "model", "diffusion", "train", "task")


def load_train_config(path, overrides: dict) -> dict:
    """Read the sectioned JSON config and apply flag overrides (dotted section.key names)."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as e:
        raise ConfigError(f"config not found: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    unknown = set(raw) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = {s: dict(raw.get(s) or {}) if s != "task" else raw.get("task", "unified") for s in CONFIG_SECTIONS}
    for key, value in overrides.items():
        if value is None:
            continue
        section, field = key.split(".")
        cfg[section][field] = value
    return cfg


def build_train_objects(cfg: dict):
    try:
        model_kw = dict(cfg["model"])
        for k in ("patch", "widths", "depths", "kernel"):
            if k in model_kw:
                model_kw[k] = tuple(model_kw[k])
        train_kw = dict(cfg["train"])
        train_kw.setdefault("wall_clock", False)
        train_kw["task"] = cfg["task"]
        train = TrainConfig(**train_kw)
        diffusion = DiffusionConfig(**cfg["diffusion"])
        return model_kw, train, diffusion
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def _training_records(data: dict, base: Path):
    if "manifest" in data:
        path = base / data["manifest"]  # relative paths are taken from the config's directory
        if not path.exists():
            raise DataError(f"manifest not found: {path}")
        ds = TrajectoryDataset.load(path)
        return ds.split("train"), ds.split("val")
    family = parse_family(data.get("family", "ns"))
    seed, count = int(data.get("seed", 0)), int(data.get("count", 8))
    size, frames = int(data.get("size", 32)), int(data.get("frames", 8))
    return [generate_trajectory(family, seed + i, size, frames) for i in range(count)], []


def cmd_train(args) -> int:
    overrides = {"train.steps": args.steps, "train.seed": args.seed, "train.batch_size": args.batch_size, "train.lr": args.lr}
    cfg = load_train_config(args.config, overrides)
    model_kw, train, diffusion = build_train_objects(cfg)
    records, val = _training_records(cfg["data"], Path(args.config).resolve().parent)
    if not records:
        raise DataError("training split is empty")
    t, h, _, c = records[0].dims
    try:
        model_cfg = HvditConfig(**{"frames": t, "size": h, "channels": c, **model_kw})
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    if (model_cfg.frames, model_cfg.size, model_cfg.size, model_cfg.channels) != tuple(records[0].dims):
        raise ConfigError(f"model dims do not match data dims {records[0].dims}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_bytes(Path(args.config).read_bytes())
    _echo(out, "resolved_config.json", cfg)
    fit(records, model_cfg, train, diffusion, out, val_records=val)
    return 0


# infer / eval / rollout


def cmd_infer(args) -> int:
    model, _, meta = _load_ckpt(args.checkpoint)
    video = _load_video(args.input)
    c = model.cfg
    if video.dims != (c.frames, c.size, c.size, c.channels):
        raise ConfigMismatch(f"input dims {video.dims} do not match the model")
    task = task_from_args(args.task, args.rate)
    t, h, w, ch = video.dims
    obs = apply_mask(video, mask_for_task(task, t, h, w, MaskRng(args.mask_seed), ch))
    diffusion = DiffusionConfig(**meta.get("diffusion", {}))
    pred = sample_videos(model.eval(), [obs], diffusion, [args.seed], meta.get("data_scale", 1.0), 1)[0]
    write_container(args.out, FieldVideo(pred.astype(np.float32), video.dt, video.dx, video.family, args.seed))
    return 0


def cmd_eval(args) -> int:
    model, _, meta = _load_ckpt(args.checkpoint)
    path = Path(args.manifest)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    ds = TrajectoryDataset.load(path)
    names = ds.manifest["split"][args.split]
    records = ds.split(args.split)
    diffusion = DiffusionConfig(**meta.get("diffusion", {}))
    task = task_from_args(args.task, args.rate)
    rep = evaluate_task(
        model.eval(), records, task, diffusion, seeds=list(range(args.seeds)), data_scale=meta.get("data_scale", 1.0), mask_seed=args.mask_seed, ids=[Path(n).stem for n in names]
    )
    rep.write_csv(args.out, frames=model.cfg.frames)
    if rep.rows:
        mean, std = rep.err_all
        umean, ustd = rep.err_unobserved
        print(f"{task.kind.value} rate={task.rate:g}: err_all {mean:.4%} ± {std:.4%}, err_unobserved {umean:.4%} ± {ustd:.4%}")
    else:
        print("no trajectories in split; wrote header only")
    return 0


def cmd_rollout(args) -> int:
    model, _, meta = _load_ckpt(args.checkpoint)
    video = _load_video(args.input)
    diffusion = DiffusionConfig(**meta.get("diffusion", {}))
    frames = autoregressive_rollout(model.eval(), video.data[0], args.windows, diffusion, seed=args.seed, data_scale=meta.get("data_scale", 1.0))
    write_container(args.out, FieldVideo(frames.astype(np.float32), video.dt, video.dx, video.family, args.seed))
    return 0


# render


def render_pgm(frame: np.ndarray, path) -> dict:
    """Write a P5 8-bit PGM min-max normalised over ``frame``; returns the sidecar record."""
    lo, hi = float(frame.min()), float(frame.max())
    constant = lo == hi
    if constant:
        img = np.full(frame.shape, 128, np.uint8)
    else:
        img = np.round((frame.astype(np.float64) - lo) / (hi - lo) * 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    return {"min": lo, "max": hi, "constant": constant}


def cmd_render(args) -> int:
    video = _load_video(args.input)
    t, _, _, c = video.dims
    if not 0 <= args.frame < t:
        raise FrameOutOfRange(f"frame {args.frame} outside [0, {t})")
    if not 0 <= args.channel < c:
        raise ConfigError(f"channel {args.channel} outside [0, {c})")
    side = render_pgm(video.data[args.frame, :, :, args.channel], args.out)
    side.update(frame=args.frame, channel=args.channel, source=str(args.input))
    Path(str(args.out) + ".json").write_text(json.dumps(side, indent=2, sort_keys=True) + "\n")
    return 0


class _HelpFormatter(argparse.HelpFormatter):
    """Show the default of every optional flag, including ones without help text."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.required or action.default in (None, argparse.SUPPRESS, False) or "%(default)" in text:
            return text
        return f"{text} (default: %(default)s)".lstrip()


def build_parser() -> argparse.ArgumentParser:
    fmt = _HelpFormatter
    p = argparse.ArgumentParser(prog="pdeinpaint", description="Video-diffusion inpainting for PDE trajectories.", formatter_class=fmt)
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads (falls back to VPDE_THREADS, then the core count)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    tasks = sorted(TASK_NAMES)

    g = sub.add_parser("gen-data", help="simulate trajectories into containers plus a manifest", formatter_class=fmt)
    g.add_argument("--family", default="ns", help="ns, kf, wave, ac or helmholtz")
    g.add_argument("--count", type=int, default=8, help="number of trajectories")
    g.add_argument("--size", type=int, default=32, help="grid points per side")
    g.add_argument("--frames", type=int, default=8, help="frames per trajectory")
    g.add_argument("--seed", type=int, default=0, help="seed of the first trajectory")
    g.add_argument("--val-fraction", type=float, default=0.125, help="share held out as the val split")
    g.add_argument("--out", required=True, help="output directory")
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a denoiser from a JSON config", formatter_class=fmt)
    t.add_argument("--config", required=True, help="JSON with sections data, model, diffusion, train, task")
    t.add_argument("--out", required=True, help="run directory")
    t.add_argument("--steps", type=int, default=None, help="override train.steps")
    t.add_argument("--seed", type=int, default=None, help="override train.seed")
    t.add_argument("--batch-size", type=int, default=None, help="override train.batch_size")
    t.add_argument("--lr", type=float, default=None, help="override train.lr")
    t.set_defaults(func=cmd_train)

    i = sub.add_parser("infer", help="reconstruct one video from a masked observation", formatter_class=fmt)
    i.add_argument("--checkpoint", required=True, help="trained .vpde checkpoint")
    i.add_argument("--input", required=True, help="ground-truth container to observe")
    i.add_argument("--task", choices=tasks, default="continuous-sensors", help="observation pattern")
    i.add_argument("--rate", type=float, default=0.03, help="observed fraction for partial tasks")
    i.add_argument("--seed", type=int, default=0, help="sampler seed")
    i.add_argument("--mask-seed", type=int, default=0, help="seed for sensor placement")
    i.add_argument("--out", required=True, help="output container")
    i.set_defaults(func=cmd_infer)

    e = sub.add_parser("eval", help="score a checkpoint on a dataset split", formatter_class=fmt)
    e.add_argument("--checkpoint", required=True, help="trained .vpde checkpoint")
    e.add_argument("--manifest", required=True, help="manifest.json from gen-data")
    e.add_argument("--task", choices=tasks, default="continuous-sensors", help="observation pattern")
    e.add_argument("--rate", type=float, default=0.03, help="observed fraction for partial tasks")
    e.add_argument("--split", choices=["train", "val"], default="val", help="manifest split to score")
    e.add_argument("--seeds", type=int, default=1, help="number of sampler seeds per trajectory")
    e.add_argument("--mask-seed", type=int, default=0, help="seed for sensor placement")
    e.add_argument("--out", required=True, help="report CSV")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("rollout", help="autoregressive forward prediction from frame 0", formatter_class=fmt)
    r.add_argument("--checkpoint", required=True, help="trained .vpde checkpoint")
    r.add_argument("--input", required=True, help="container whose first frame seeds the rollout")
    r.add_argument("--windows", type=int, default=4, help="number of chained forward windows")
    r.add_argument("--seed", type=int, default=0, help="sampler seed of the first window")
    r.add_argument("--out", required=True, help="output container")
    r.set_defaults(func=cmd_rollout)

    v = sub.add_parser("render", help="export one frame as an 8-bit PGM", formatter_class=fmt)
    v.add_argument("--input", required=True, help="container to read")
    v.add_argument("--frame", type=int, default=0, help="frame index")
    v.add_argument("--channel", type=int, default=0, help="channel index")
    v.add_argument("--out", required=True, help="PGM path; a .json sidecar is written next to it")
    v.set_defaults(func=cmd_render)
    return p


def _threads(value) -> int:
    if value is None:
        env = os.environ.get("VPDE_THREADS")
        value = int(env) if env else (os.cpu_count() or 1)
    if value < 1:
        raise ConfigError("--threads must be positive")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        torch.set_num_threads(_threads(args.threads))
        return args.func(args)
    except (ConfigError, ConfigMismatch, KeyError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ContainerError, ShapeMismatch, FrameOutOfRange, FileNotFoundError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteState, ArithmeticError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
