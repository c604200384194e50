"""Two-stack transformer denoiser and the reverse-diffusion sampler.

The context stack reads a length-``B`` token sequence in which keyframe slots
carry projected poses and every other slot a learned mask token. The denoising
stack reads that stack's output concatenated (along the token axis) with the
projected noisy motion, and the tokens at the noisy-motion positions are
projected back to clean frames.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .data import Context, MotionSequence, check_context_length, renormalize_frames
from .kinematics import Skeleton
from .nn import Encoder, Linear, Module, encoder_parameter_count, sinusoidal_encoding
from .schedule import DiffusionSchedule, reverse_step
from .tensor import Tensor, concat, gelu, get_default_dtype, no_grad, where

CHECKPOINT_MAGIC = b"MSDNZ01\n"
CHECKPOINT_VERSION = 1


@dataclass
class DenoiserConfig:
    feature_dim: int
    layers_per_stack: int = 6
    model_dim: int = 512
    ff_dim: int = 2048
    heads: int = 8
    dropout: float = 0.1
    block: int = 75
    timesteps: int = 300
    cache_context: bool = False

    def __post_init__(self):
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.feature_dim < 9 or (self.feature_dim - 3) % 6:
            raise ValueError(f"feature_dim {self.feature_dim} is not 3 + 6J")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DenoiserConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def parameter_count(self) -> int:
        d, F = self.model_dim, self.feature_dim
        projections = 2 * (F * d + d) + (d * F + F)
        time_mlp = 2 * (d * d + d)
        stacks = 2 * encoder_parameter_count(self.layers_per_stack, d, self.ff_dim)
        return projections + time_mlp + d + stacks


class DenoiserModel(Module):
    def __init__(self, config: DenoiserConfig, rng: np.random.Generator | int = 0):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        c = config
        self.config = c
        d = c.model_dim
        self.context_in = Linear(c.feature_dim, d, rng)
        self.noisy_in = Linear(c.feature_dim, d, rng)
        self.mask_token = Tensor(rng.normal(0.0, 0.02, size=d), requires_grad=True)
        self.time_fc1 = Linear(d, d, rng)
        self.time_fc2 = Linear(d, d, rng)
        self.context_encoder = Encoder(c.layers_per_stack, d, c.heads, c.ff_dim, rng, c.dropout)
        self.denoise_encoder = Encoder(c.layers_per_stack, d, c.heads, c.ff_dim, rng, c.dropout)
        self.head = Linear(d, c.feature_dim, rng)
        self.positions = sinusoidal_encoding(np.arange(c.block), d).astype(get_default_dtype())
        n = self.num_parameters()
        if n != c.parameter_count():
            raise AssertionError(f"parameter count {n} != closed form {c.parameter_count()}")

    def time_embedding(self, t) -> Tensor:
        """``(N, d)`` learned projection of a sinusoidal step embedding."""
        t = np.atleast_1d(np.asarray(t))
        base = Tensor(sinusoidal_encoding(t, self.config.model_dim))
        return self.time_fc2(gelu(self.time_fc1(base)))

    def build_masked_input(self, context_frames, mask, t) -> Tensor:
        """Token sequence ``(N, B, d)`` for the context stack.

        ``context_frames`` is ``(N, B, F)`` with keyframes in place (other rows
        are ignored); ``mask`` is ``(N, B)``, true at keyframe slots.
        """
        frames = Tensor(context_frames)
        mask = np.asarray(mask, dtype=bool)
        if frames.shape[1:] != (self.config.block, self.config.feature_dim) or mask.shape != frames.shape[:2]:
            raise ValueError(f"context frames {frames.shape} / mask {mask.shape} do not match the config")
        tokens = where(mask[..., None], self.context_in(frames), self.mask_token)
        return tokens + self.positions + self.time_embedding(t)[:, None, :]

    def encode_context(self, masked: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return self.context_encoder(masked, rng)

    def denoise(self, x_t, memory: Tensor, t, rng: np.random.Generator | None = None) -> Tensor:
        x_t = x_t if isinstance(x_t, Tensor) else Tensor(x_t)
        B, F = self.config.block, self.config.feature_dim
        if x_t.shape[1:] != (B, F) or memory.shape != (x_t.shape[0], B, self.config.model_dim):
            raise ValueError(f"x_t {x_t.shape} / memory {memory.shape} do not match the config")
        h = self.noisy_in(x_t) + self.positions + self.time_embedding(t)[:, None, :]
        out = self.denoise_encoder(concat([memory, h], axis=1), rng)
        return self.head(out[:, B:, :])

    def __call__(self, context_frames, mask, x_t, t, rng: np.random.Generator | None = None) -> Tensor:
        memory = self.encode_context(self.build_masked_input(context_frames, mask, t), rng)
        return self.denoise(x_t, memory, t, rng)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)[:5]}")
        for name, p in params.items():
            value = np.asarray(state[name])
            if value.shape != p.shape:
                raise ValueError(f"{name}: shape {value.shape} != {p.shape}")
            p.data = value.astype(get_default_dtype())


def context_arrays(contexts: list[Context], block: int, feature_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """Scatter contexts into zero-padded ``(N, B, F)`` frames and an ``(N, B)`` slot mask."""
    frames = np.zeros((len(contexts), block, feature_dim))
    mask = np.zeros((len(contexts), block), dtype=bool)
    for n, ctx in enumerate(contexts):
        check_context_length(len(ctx), block)
        if ctx.indices[-1] >= block:
            raise ValueError(f"context index {ctx.indices[-1]} outside block of {block}")
        frames[n, ctx.indices] = ctx.poses
        mask[n, ctx.indices] = True
    return frames, mask


def sample_batch(
    contexts: list[Context],
    model: DenoiserModel,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    mode: str = "direct",
) -> np.ndarray:
    """Run the full reverse process for several contexts at once; returns raw ``(N, B, F)`` predictions."""
    cfg = model.config
    frames, mask = context_arrays(contexts, cfg.block, cfg.feature_dim)
    N = len(contexts)
    dtype = get_default_dtype()
    model.eval()
    x = rng.standard_normal((N, cfg.block, cfg.feature_dim)).astype(dtype)
    memory = None
    with no_grad():
        for t in range(sched.T, 0, -1):
            steps = np.full(N, t)
            if memory is None or not cfg.cache_context:
                memory = model.encode_context(model.build_masked_input(frames, mask, steps))
            x0_hat = model.denoise(x, memory, steps).data
            if not np.all(np.isfinite(x0_hat)):
                raise FloatingPointError(f"non-finite prediction at step {t}")
            if t > 1:
                x = reverse_step(x0_hat, t, sched, rng, x_t=x, mode=mode).astype(dtype)
    return x0_hat


def sample(
    ctx: Context,
    model: DenoiserModel,
    sched: DiffusionSchedule,
    rng: np.random.Generator,
    skeleton: Skeleton,
    fps: float = 15.0,
    mode: str = "direct",
) -> MotionSequence:
    """Generate one full motion through the keyframes of ``ctx``."""
    raw = sample_batch([ctx], model, sched, rng, mode)[0]
    return MotionSequence(renormalize_frames(raw.astype(np.float64)), fps, skeleton)


# -- checkpoints ----------------------------------------------------------

class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path,
    model: DenoiserModel,
    sched: DiffusionSchedule,
    extra: dict | None = None,
    arrays: dict[str, np.ndarray] | None = None,
) -> None:
    """Magic, uint32 header length, JSON header, then named little-endian float32 blobs."""
    blobs = [(f"param/{k}", v) for k, v in model.state_dict().items()]
    blobs += [(f"extra/{k}", v) for k, v in (arrays or {}).items()]
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "schedule": sched.to_dict(),
        "extra": extra or {},
        "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in blobs],
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(text)))
        f.write(text)
        for _, v in blobs:
            f.write(np.ascontiguousarray(v, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[DenoiserModel, DiffusionSchedule, dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a denoiser checkpoint (bad magic)")
    try:
        (n,) = struct.unpack_from("<I", raw, len(CHECKPOINT_MAGIC))
        start = len(CHECKPOINT_MAGIC) + 4
        header = json.loads(raw[start : start + n])
    except (struct.error, ValueError) as exc:
        raise CheckpointError(f"{path}: corrupt header ({exc})") from None
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported version {header.get('version')}")
    offset = start + n
    params, arrays = {}, {}
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + 4 * count
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated at tensor {entry['name']}")
        value = np.frombuffer(raw[offset:end], dtype="<f4").reshape(entry["shape"]).astype(np.float32)
        offset = end
        kind, name = entry["name"].split("/", 1)
        (params if kind == "param" else arrays)[name] = value
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    model = DenoiserModel(DenoiserConfig.from_dict(header["config"]))
    model.load_state_dict(params)
    s = header["schedule"]
    return model, DiffusionSchedule(s["T"], s["beta_min"], s["beta_max"]), header["extra"], arrays
