"""``motionstitch`` command line: preprocess, train, train-extractor, generate, evaluate, export-plot.

Exit codes: 0 success, 1 usage error, 2 runtime error. Every command accepts
``--config FILE`` (JSON); explicit flags override file values, and the
effective configuration is written next to the command's output.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("motionstitch")

DATASET_FILE = "dataset.mstch"
MANIFEST_FILE = "manifest.json"

DEFAULTS = {
    "preprocess": {"fps": 15.0, "block": 75, "augment": 2, "split_seed": 0, "scale": 1.0, "up_axis": "y"},
    "train": {
        "batch": 128, "timesteps": 300, "epochs": 1, "lr": 1e-4, "lr_schedule": "constant", "seed": 0, "layers": 6, "model_dim": 512,
        "ff_dim": 2048, "heads": 8, "dropout": 0.1, "beta_min": 1e-4, "beta_max": 0.02, "grad_clip": 1.0,
        "patience": None, "resume": False,
    },
    "train-extractor": {"steps": 2000, "hidden": 64, "lr": 1e-3, "seed": 0, "split": "train"},
    "generate": {"seed": 0, "indices": None, "chunk_index": 0, "scale": 1.0, "chunk_out": False, "mode": "direct",
                 "context_len": None},
    "evaluate": {"split": "test", "context_len": [20, 10], "reps": 10, "repeats": 10, "seed": 0, "pairs": 300,
                 "dataset_name": None, "mode": "direct"},
    "export-plot": {"stride": 5, "chunk_index": 0, "context_indices": None, "scale": 1.0, "up_axis": "y"},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="motionstitch", description="Diffusion-based motion stitching and in-betweening.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    S = argparse.SUPPRESS

    def cmd(name, help):
        sp = sub.add_parser(name, help=help, argument_default=S)
        sp.add_argument("--config", help="JSON file with option values")
        return sp

    sp = cmd("preprocess", "BVH directory -> chunk dataset + manifest")
    sp.add_argument("src", help="directory of .bvh files")
    sp.add_argument("out", help="output directory")
    sp.add_argument("--fps", type=float)
    sp.add_argument("--block", type=int)
    sp.add_argument("--augment", type=int, help="random yaw copies per chunk")
    sp.add_argument("--split-seed", type=int, dest="split_seed")
    sp.add_argument("--scale", type=float, help="file units to metres (0.01 for cm)")
    sp.add_argument("--up-axis", choices=["y", "z"], dest="up_axis")

    sp = cmd("train", "train the denoiser")
    sp.add_argument("dataset", help="preprocessed dataset directory")
    sp.add_argument("out", help="checkpoint directory")
    sp.add_argument("--batch", type=int)
    sp.add_argument("--timesteps", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--lr-schedule", choices=["constant", "cosine"], dest="lr_schedule")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--layers", type=int)
    sp.add_argument("--model-dim", type=int, dest="model_dim")
    sp.add_argument("--ff-dim", type=int, dest="ff_dim")
    sp.add_argument("--heads", type=int)
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--beta-min", type=float, dest="beta_min")
    sp.add_argument("--beta-max", type=float, dest="beta_max")
    sp.add_argument("--grad-clip", type=float, dest="grad_clip")
    sp.add_argument("--patience", type=int)
    sp.add_argument("--resume", action="store_true")

    sp = cmd("train-extractor", "train the metric feature autoencoder")
    sp.add_argument("dataset")
    sp.add_argument("out", help="extractor artifact path")
    sp.add_argument("--steps", type=int)
    sp.add_argument("--hidden", type=int)
    sp.add_argument("--lr", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--split", choices=["train", "val", "test", "all"])

    sp = cmd("generate", "in-between keyframes taken from a BVH or chunk file")
    sp.add_argument("checkpoint")
    sp.add_argument("context", help="BVH file or chunk dataset file supplying the keyframes")
    sp.add_argument("out", help="output .bvh path")
    sp.add_argument("--indices", type=_ints, help="keyframe frame indices, e.g. 0,20,40")
    sp.add_argument("--context-len", type=int, dest="context_len", help="draw this many random keyframe slots")
    sp.add_argument("--chunk-index", type=int, dest="chunk_index")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scale", type=float)
    sp.add_argument("--chunk-out", action="store_true", dest="chunk_out", help="also write a chunk file")
    sp.add_argument("--mode", choices=["direct", "ddpm-posterior"])

    sp = cmd("evaluate", "FID / Diversity / Multimodality report")
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    sp.add_argument("extractor")
    sp.add_argument("out", help="report path (.txt; a .json twin is written alongside)")
    sp.add_argument("--split", choices=["train", "val", "test", "all"])
    sp.add_argument("--context-len", type=int, nargs="+", dest="context_len")
    sp.add_argument("--reps", type=int)
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--pairs", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--dataset-name", dest="dataset_name")
    sp.add_argument("--mode", choices=["direct", "ddpm-posterior"])

    sp = cmd("export-plot", "frame-strip figure of a sequence")
    sp.add_argument("sequence", help="BVH or chunk dataset file")
    sp.add_argument("out", help="image path (.png/.svg/.pdf)")
    sp.add_argument("--stride", type=int)
    sp.add_argument("--chunk-index", type=int, dest="chunk_index")
    sp.add_argument("--context-indices", type=_ints, dest="context_indices")
    sp.add_argument("--scale", type=float)
    sp.add_argument("--up-axis", choices=["x", "y", "z"], dest="up_axis")
    return p


def effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[args.command])
    given = {k: v for k, v in vars(args).items() if k not in ("command", "verbose", "config")}
    if getattr(args, "config", None):
        try:
            cfg.update(json.loads(Path(args.config).read_text()))
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
    cfg.update(given)
    unknown = set(cfg) - set(DEFAULTS[args.command]) - set(given)
    if unknown:
        raise UsageError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    return cfg


def _write_config(path: Path, command: str, cfg: dict) -> None:
    path.write_text(json.dumps({"command": command, **cfg}, indent=2, sort_keys=True, default=str) + "\n")


def _dataset_paths(path: str) -> tuple[Path, Path]:
    p = Path(path)
    if p.is_dir():
        return p / DATASET_FILE, p / MANIFEST_FILE
    return p, p.with_name(MANIFEST_FILE)


def _load_split(path: str, split: str):
    from .data import read_chunk_file, read_manifest

    data_path, manifest_path = _dataset_paths(path)
    ds = read_chunk_file(data_path)
    if split == "all":
        return ds
    if not manifest_path.exists():
        raise UsageError(f"no manifest next to {data_path}")
    manifest, _ = read_manifest(manifest_path)
    return ds.select(getattr(manifest, split))


# -- commands -------------------------------------------------------------

def cmd_preprocess(cfg: dict) -> int:
    from .bvh import read_bvh
    from .data import preprocess, write_chunk_file, write_manifest

    src = Path(cfg["src"])
    files = sorted(src.glob("*.bvh")) if src.is_dir() else []
    if not files:
        raise UsageError(f"no .bvh files in {src}")
    seqs, failures = [], []
    for f in files:
        try:
            motion = read_bvh(f, cfg["scale"])
        except ValueError as exc:
            failures.append(f"{f.name}: {exc}")
            continue
        seqs.append((f.stem, motion.to_sequence()))
        print(f"{f.name}: {motion.num_frames} frames at {motion.fps:g} fps, {motion.skeleton.num_joints} joints")
    for msg in failures:
        print(f"FAILED {msg}", file=sys.stderr)
    if not seqs:
        raise RuntimeError("every input file failed to parse")
    ds, split = preprocess(seqs, cfg["fps"], cfg["block"], cfg["augment"], cfg["split_seed"], cfg["up_axis"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_chunk_file(out / DATASET_FILE, ds)
    write_manifest(out / MANIFEST_FILE, split, DATASET_FILE)
    _write_config(out / "preprocess_config.json", "preprocess", cfg)
    print(f"{len(ds)} chunks ({len(split.train)} train / {len(split.val)} val / {len(split.test)} test) -> {out}")
    return 0


def cmd_train(cfg: dict) -> int:
    from .denoiser import DenoiserConfig, DenoiserModel
    from .schedule import make_schedule
    from .training import TrainConfig, fit

    train = _load_split(cfg["dataset"], "train")
    try:
        val = _load_split(cfg["dataset"], "val")
    except UsageError:
        val = None
    mcfg = DenoiserConfig(
        feature_dim=train.frames.shape[2], layers_per_stack=cfg["layers"], model_dim=cfg["model_dim"],
        ff_dim=cfg["ff_dim"], heads=cfg["heads"], dropout=cfg["dropout"], block=train.block, timesteps=cfg["timesteps"],
    )
    tcfg = TrainConfig(batch_size=cfg["batch"], timesteps=cfg["timesteps"], beta_min=cfg["beta_min"],
                       beta_max=cfg["beta_max"], lr=cfg["lr"], lr_schedule=cfg["lr_schedule"], epochs=cfg["epochs"], seed=cfg["seed"],
                       grad_clip=cfg["grad_clip"], patience=cfg["patience"])
    model = DenoiserModel(mcfg, cfg["seed"])
    sched = make_schedule(cfg["timesteps"], cfg["beta_min"], cfg["beta_max"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    _write_config(out / "train_config.json", "train", cfg)
    records = fit(train, model, sched, tcfg, out, val=val, resume=cfg["resume"])
    if records:
        print(f"{len(records)} steps, last total loss {records[-1]['total']:.4f}")
    print(f"checkpoints in {out}")
    return 0


def cmd_train_extractor(cfg: dict) -> int:
    from .evaluation import save_extractor, train_extractor

    ds = _load_split(cfg["dataset"], cfg["split"])
    ext, mse = train_extractor(ds.frames, steps=cfg["steps"], lr=cfg["lr"], hidden=cfg["hidden"], seed=cfg["seed"])
    out = Path(cfg["out"])
    save_extractor(out, ext, {"train_mse": mse, "chunks": len(ds), **{k: cfg[k] for k in ("steps", "hidden", "seed")}})
    _write_config(out.with_name(out.name + ".config.json"), "train-extractor", cfg)
    print(f"extractor reconstruction MSE {mse:.5f} -> {out}")
    return 0


def _load_context_source(path: str, cfg: dict, block: int, fps: float):
    from .bvh import read_bvh
    from .data import CHUNK_MAGIC, MotionSequence, downsample, rebase, read_chunk_file

    p = Path(path)
    if p.read_bytes()[: len(CHUNK_MAGIC)] == CHUNK_MAGIC:
        ds = read_chunk_file(p)
        return ds.sequence(cfg["chunk_index"]).frames
    seq = read_bvh(p, cfg["scale"]).to_sequence()
    if seq.fps > fps * 1.01:
        seq = downsample(seq, fps)
    if len(seq) < block:
        raise UsageError(f"{p} has {len(seq)} frames at {seq.fps:g} fps, need {block}")
    return MotionSequence(rebase(seq.frames[:block]), seq.fps, seq.skeleton).frames


def cmd_generate(cfg: dict) -> int:
    from .bvh import sequence_to_bvh, write_bvh
    from .data import ChunkDataset, Context, check_context_length, sample_context, write_chunk_file
    from .denoiser import load_checkpoint, sample
    from .kinematics import Skeleton

    model, sched, extra, _ = load_checkpoint(cfg["checkpoint"])
    B = model.config.block
    fps = extra.get("fps", 15.0)
    skeleton = Skeleton.from_dict(extra["skeleton"])
    frames = _load_context_source(cfg["context"], cfg, B, fps)
    if frames.shape[1] != model.config.feature_dim:
        raise UsageError(f"context has {frames.shape[1]} features, model expects {model.config.feature_dim}")
    rng = np.random.default_rng(cfg["seed"])
    if cfg["indices"] is not None:
        idx = np.array(sorted(set(cfg["indices"])), dtype=np.int64)
        try:
            check_context_length(len(idx), B)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        if idx[0] < 0 or idx[-1] >= B:
            raise UsageError(f"keyframe indices must lie in [0, {B})")
        ctx = Context(frames[idx], idx)
    else:
        L = cfg["context_len"] or 20
        try:
            ctx = sample_context(frames, L, rng)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    seq = sample(ctx, model, sched, rng, skeleton, fps, cfg["mode"])
    out = Path(cfg["out"])
    write_bvh(out, sequence_to_bvh(seq), cfg["scale"])
    meta = {"context_indices": ctx.indices.tolist(), "frames": len(seq), "fps": seq.fps, "seed": cfg["seed"]}
    if cfg["chunk_out"]:
        write_chunk_file(out.with_suffix(".mstch"), ChunkDataset(seq.frames[None], seq.fps, skeleton, ["generated"]))
    out.with_name(out.name + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    _write_config(out.with_name(out.name + ".config.json"), "generate", cfg)
    print(f"{len(seq)} frames at {seq.fps:g} fps through keyframes {ctx.indices.tolist()} -> {out}")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    from .denoiser import load_checkpoint
    from .evaluation import evaluate_generation, format_report, load_extractor

    ext_path = Path(cfg["extractor"])
    if not ext_path.exists():
        raise UsageError(f"feature extractor {ext_path} not found; create one with `motionstitch train-extractor`")
    model, sched, _, _ = load_checkpoint(cfg["checkpoint"])
    ds = _load_split(cfg["dataset"], cfg["split"])
    if len(ds) < 4:
        raise UsageError(f"split {cfg['split']!r} has only {len(ds)} chunks")
    ext = load_extractor(ext_path)
    name = cfg["dataset_name"] or Path(cfg["dataset"]).stem
    rows = evaluate_generation(model, sched, ds.frames, ext, cfg["context_len"], cfg["reps"], cfg["repeats"],
                               cfg["pairs"], cfg["seed"], name, cfg["mode"])
    out = Path(cfg["out"])
    text = format_report(rows)
    out.write_text(text)
    out.with_suffix(".json").write_text(json.dumps(rows, indent=2) + "\n")
    _write_config(out.with_name(out.name + ".config.json"), "evaluate", cfg)
    print(text, end="")
    return 0


def cmd_export_plot(cfg: dict) -> int:
    from .plotting import export_plot

    p = Path(cfg["sequence"])
    from .bvh import read_bvh
    from .data import CHUNK_MAGIC, read_chunk_file

    if p.read_bytes()[: len(CHUNK_MAGIC)] == CHUNK_MAGIC:
        seq = read_chunk_file(p).sequence(cfg["chunk_index"])
    else:
        seq = read_bvh(p, cfg["scale"]).to_sequence()
    keys = cfg["context_indices"]
    meta = p.with_name(p.name + ".meta.json")
    if keys is None and meta.exists():
        keys = json.loads(meta.read_text()).get("context_indices", [])
    n = export_plot(seq, cfg["out"], cfg["stride"], keys or (), cfg["up_axis"])
    _write_config(Path(str(cfg["out"]) + ".config.json"), "export-plot", cfg)
    print(f"{n} frames drawn -> {cfg['out']}")
    return 0


COMMANDS = {
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "train-extractor": cmd_train_extractor,
    "generate": cmd_generate,
    "evaluate": cmd_evaluate,
    "export-plot": cmd_export_plot,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        cfg = effective_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"motionstitch {args.command}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError, KeyError, FloatingPointError) as exc:
        print(f"motionstitch {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
