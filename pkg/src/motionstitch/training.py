"""Training loop: sample contexts and steps, noise, denoise, score, update."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import ChunkDataset, Context
from .denoiser import DenoiserModel, context_arrays, load_checkpoint, save_checkpoint
from .kinematics import Skeleton
from .losses import COMPONENTS, total_loss
from .schedule import DiffusionSchedule, add_noise
from .tensor import Tensor, get_default_dtype, no_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 128
    timesteps: int = 300
    beta_min: float = 1e-4
    beta_max: float = 0.02
    lr: float = 1e-4
    lr_schedule: str = "constant"  # or "cosine": decay from lr to lr_min over the whole run
    lr_min: float = 1e-5
    betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    epochs: int = 1
    seed: int = 0
    context_min: int = 1
    context_max: int | None = None  # None -> B // 2
    grad_clip: float | None = 1.0
    patience: int | None = None
    loss_weights: dict[str, float] | None = None

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ValueError(f"unknown lr_schedule {self.lr_schedule!r}")
        if self.context_min < 1 or (self.context_max is not None and self.context_max < self.context_min):
            raise ValueError("context-length bounds must satisfy 1 <= min <= max")

    def context_bounds(self, block: int) -> tuple[int, int]:
        hi = block // 2 if self.context_max is None else self.context_max
        if hi > block // 2:
            raise ValueError(f"context_max {hi} exceeds B/2 = {block // 2}")
        return self.context_min, hi

    def lr_at(self, step: int, total: int) -> float:
        """Learning rate for the 0-based ``step`` of a ``total``-step run."""
        if self.lr_schedule == "constant" or total <= 1:
            return self.lr
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + math.cos(math.pi * step / total))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class Adam:
    """Adam with bias correction; moments kept in the model's dtype."""

    def __init__(self, params: list[Tensor], lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr, self.betas, self.eps = lr, tuple(betas), eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.step_count = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1.0 - b1**self.step_count
        c2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data = p.data - (self.lr / c1) * m / (np.sqrt(v / c2) + self.eps)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"adam.m.{i}"] = m
            out[f"adam.v.{i}"] = v
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        dtype = get_default_dtype()
        self.m = [arrays[f"adam.m.{i}"].astype(dtype) for i in range(len(self.params))]
        self.v = [arrays[f"adam.v.{i}"].astype(dtype) for i in range(len(self.params))]
        self.step_count = step_count


@dataclass
class StepResult:
    losses: dict[str, float]
    t_mean: float
    grad_norm: float
    clipped: bool


def draw_training_inputs(x0: np.ndarray, sched: DiffusionSchedule, rng: np.random.Generator, bounds: tuple[int, int]):
    """Per sample: context length, keyframe slots, diffusion step and noise, in that order."""
    N, B, _ = x0.shape
    contexts, steps, noisy = [], np.empty(N, dtype=np.int64), np.empty_like(x0)
    for n in range(N):
        L = int(rng.integers(bounds[0], bounds[1] + 1))
        idx = np.sort(rng.choice(B, size=L, replace=False))
        contexts.append(Context(x0[n, idx], idx))
        steps[n] = int(rng.integers(1, sched.T + 1))
        eps = rng.standard_normal(x0[n].shape)
        noisy[n] = add_noise(x0[n], int(steps[n]), eps, sched)
    return contexts, steps, noisy


def batch_loss(model: DenoiserModel, x0: np.ndarray, sched: DiffusionSchedule, rng, skeleton: Skeleton, cfg: TrainConfig):
    dtype = get_default_dtype()
    x0 = np.asarray(x0, dtype=dtype)
    cfg_m = model.config
    bounds = cfg.context_bounds(cfg_m.block)
    contexts, steps, noisy = draw_training_inputs(x0, sched, rng, bounds)
    frames, mask = context_arrays(contexts, cfg_m.block, cfg_m.feature_dim)
    x0_hat = model(frames.astype(dtype), mask, noisy.astype(dtype), steps, rng)
    breakdown = total_loss(x0_hat, Tensor(x0), [c.indices for c in contexts], skeleton, cfg.loss_weights)
    return breakdown, steps


def train_step(
    x0: np.ndarray,
    model: DenoiserModel,
    sched: DiffusionSchedule,
    opt: Adam,
    rng: np.random.Generator,
    skeleton: Skeleton,
    cfg: TrainConfig,
    batch_ids: list[str] | None = None,
) -> StepResult:
    """One optimiser update on a batch ``(N, B, F)``; returns the pre-update losses."""
    model.train()
    breakdown, steps = batch_loss(model, x0, sched, rng, skeleton, cfg)
    values = breakdown.as_floats()
    if not np.isfinite(values["total"]):
        raise FloatingPointError(f"non-finite loss {values} on batch {batch_ids}")
    model.zero_grad()
    breakdown.total.backward()
    grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in opt.params]
    norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))
    clipped = cfg.grad_clip is not None and norm > cfg.grad_clip
    if clipped:
        log.debug("gradient norm %.3g clipped to %.3g", norm, cfg.grad_clip)
        scale = get_default_dtype().type(cfg.grad_clip / norm)
        grads = [g * scale for g in grads]
    opt.step(grads)
    return StepResult(values, float(steps.mean()), norm, bool(clipped))


def evaluate_epoch(
    x0: np.ndarray,
    model: DenoiserModel,
    sched: DiffusionSchedule,
    skeleton: Skeleton,
    cfg: TrainConfig | None = None,
    seed: int = 1234,
    batch_size: int = 32,
) -> dict[str, float]:
    """Mean loss terms over ``x0`` in eval mode with a fixed draw of contexts, steps and noise."""
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(seed)
    model.eval()
    sums = dict.fromkeys(COMPONENTS + ("total",), 0.0)
    n = len(x0)
    with no_grad():
        for start in range(0, n, batch_size):
            batch = x0[start : start + batch_size]
            breakdown, _ = batch_loss(model, batch, sched, rng, skeleton, cfg)
            for k, v in breakdown.as_floats().items():
                sums[k] += v * len(batch)
    return {k: v / n for k, v in sums.items()}


def fit(
    train: ChunkDataset,
    model: DenoiserModel,
    sched: DiffusionSchedule,
    cfg: TrainConfig,
    out_dir,
    val: ChunkDataset | None = None,
    resume: bool = False,
) -> list[dict]:
    """Epoch loop with per-step JSONL log and one checkpoint per epoch.

    With ``resume`` the latest checkpoint in ``out_dir`` (model, optimiser,
    RNG state, counters) is restored and training continues from there.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    latest = out / "latest.ckpt"
    opt = Adam(model.parameters(), cfg.lr, cfg.betas, cfg.adam_eps)
    rng = np.random.default_rng(cfg.seed)
    state = {"epoch": 0, "step": 0, "best_val": None, "bad_epochs": 0}
    if resume and latest.exists():
        loaded, _, extra, arrays = load_checkpoint(latest)
        model.load_state_dict(loaded.state_dict())
        opt = Adam(model.parameters(), cfg.lr, cfg.betas, cfg.adam_eps)
        opt.load_state_arrays(arrays, extra["step"])
        rng.bit_generator.state = extra["rng_state"]
        state = {k: extra[k] for k in state}
    elif not resume and log_path.exists():
        log_path.unlink()

    def checkpoint(path):
        extra = {**state, "rng_state": rng.bit_generator.state, "train_config": cfg.to_dict(), "fps": train.fps,
                 "skeleton": train.skeleton.to_dict()}
        save_checkpoint(path, model, sched, extra, opt.state_arrays())

    if state["epoch"] == 0 and state["step"] == 0:
        checkpoint(out / "initial.ckpt")
    records = []
    frames = train.frames
    total_steps = cfg.epochs * math.ceil(len(frames) / cfg.batch_size)
    while state["epoch"] < cfg.epochs:
        order = rng.permutation(len(frames))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            opt.lr = cfg.lr_at(state["step"], total_steps)
            res = train_step(frames[idx], model, sched, opt, rng, train.skeleton, cfg, [train.ids[i] for i in idx])
            state["step"] += 1
            rec = {"step": state["step"], "epoch": state["epoch"], "t_mean": res.t_mean, **res.losses,
                   "grad_norm": res.grad_norm, "clipped": res.clipped}
            records.append(rec)
            with open(log_path, "a") as f:
                f.write(json.dumps(rec) + "\n")
        state["epoch"] += 1
        stop = False
        if val is not None and len(val):
            metrics = evaluate_epoch(val.frames, model, sched, train.skeleton, cfg)
            with open(log_path, "a") as f:
                f.write(json.dumps({"epoch": state["epoch"], "val": metrics}) + "\n")
            if state["best_val"] is None or metrics["total"] < state["best_val"]:
                state["best_val"], state["bad_epochs"] = metrics["total"], 0
                checkpoint(out / "best.ckpt")
            else:
                state["bad_epochs"] += 1
                stop = cfg.patience is not None and state["bad_epochs"] >= cfg.patience
        checkpoint(latest)
        checkpoint(out / f"epoch{state['epoch']:04d}.ckpt")
        if stop:
            log.info("early stopping after epoch %d", state["epoch"])
            break
    return records
