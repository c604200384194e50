"""Motion data model and the preprocessing pipeline.

A frame is laid out as ``[root_position (3), joint 0 6D, joint 1 6D, ...]`` so
``F = 3 + 6 * J``. Root positions are relative to the first frame of the
sequence they belong to.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .kinematics import Skeleton, forward_kinematics
from .rotation import axis_rotation, matrix_to_sixd, sixd_to_matrix

ROT_DIM = 6
CHUNK_MAGIC = b"MSTCH01\n"
CHUNK_VERSION = 1


def feature_dim(num_joints: int, rot_dim: int = ROT_DIM) -> int:
    return 3 + num_joints * rot_dim


def encode_frames(root_positions, rotations) -> np.ndarray:
    """``(n, 3)`` roots and ``(n, J, 3, 3)`` local rotations to ``(n, 3 + 6J)`` frames."""
    root_positions = np.asarray(root_positions, dtype=np.float64)
    sixd = matrix_to_sixd(rotations)
    return np.concatenate([root_positions, sixd.reshape(sixd.shape[:-2] + (-1,))], axis=-1)


def decode_frames(frames) -> tuple[np.ndarray, np.ndarray]:
    frames = np.asarray(frames, dtype=np.float64)
    J = (frames.shape[-1] - 3) // ROT_DIM
    if frames.shape[-1] != feature_dim(J):
        raise ValueError(f"feature size {frames.shape[-1]} is not 3 + 6J")
    sixd = frames[..., 3:].reshape(frames.shape[:-1] + (J, ROT_DIM))
    return frames[..., :3], sixd_to_matrix(sixd)


def renormalize_frames(frames) -> np.ndarray:
    """Project every 6D group back onto a valid rotation."""
    root, rot = decode_frames(frames)
    return encode_frames(root, rot)


@dataclass
class MotionSequence:
    frames: np.ndarray
    fps: float
    skeleton: Skeleton

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != feature_dim(self.skeleton.num_joints):
            raise ValueError(
                f"frames must be (n, {feature_dim(self.skeleton.num_joints)}), got {self.frames.shape}"
            )

    def __len__(self) -> int:
        return self.frames.shape[0]

    @classmethod
    def from_rotations(cls, root_positions, rotations, fps: float, skeleton: Skeleton) -> "MotionSequence":
        return cls(encode_frames(root_positions, rotations), fps, skeleton)

    @property
    def root_positions(self) -> np.ndarray:
        return self.frames[:, :3]

    def rotations(self) -> np.ndarray:
        return decode_frames(self.frames)[1]

    def joint_positions(self) -> np.ndarray:
        root, rot = decode_frames(self.frames)
        return forward_kinematics(self.skeleton, rot, root)


@dataclass
class Context:
    """Keyframe poses ``(L, F)`` at strictly increasing frame ``indices``."""

    poses: np.ndarray
    indices: np.ndarray

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=np.float64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.poses.ndim != 2 or len(self.poses) != len(self.indices):
            raise ValueError("context needs one pose per index")
        if len(self.indices) == 0:
            raise ValueError("context needs at least one pose")
        if np.any(np.diff(self.indices) <= 0):
            raise ValueError("context indices must be unique and sorted")
        if self.indices[0] < 0:
            raise ValueError("negative context index")

    def __len__(self) -> int:
        return len(self.indices)


def check_context_length(L: int, block: int) -> None:
    if not 1 <= L <= block // 2:
        raise ValueError(f"context length {L} outside [1, B/2] = [1, {block // 2}] for B = {block}")


@dataclass
class DatasetSplit:
    train: list[str]
    val: list[str]
    test: list[str]
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "train": self.train, "val": self.val, "test": self.test}

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(list(d["train"]), list(d["val"]), list(d["test"]), int(d["seed"]))


# -- pipeline stages ----------------------------------------------------

def downsample(seq: MotionSequence, target_fps: float) -> MotionSequence:
    """Keep every ``round(source_fps / target_fps)``-th frame starting at frame 0."""
    if target_fps > seq.fps:
        raise ValueError(f"cannot downsample {seq.fps} fps to a higher rate {target_fps}")
    stride = max(1, int(np.floor(seq.fps / target_fps + 0.5)))
    return MotionSequence(seq.frames[::stride].copy(), seq.fps / stride, seq.skeleton)


def rebase(frames: np.ndarray) -> np.ndarray:
    out = np.array(frames, dtype=np.float64)
    out[:, :3] -= out[0, :3]
    return out


def chunk(seq: MotionSequence, block: int = 75) -> list[MotionSequence]:
    """Consecutive non-overlapping windows; a trailing remainder shorter than ``block`` is dropped."""
    if block < 1:
        raise ValueError("block must be positive")
    n = len(seq) // block
    return [MotionSequence(rebase(seq.frames[k * block : (k + 1) * block]), seq.fps, seq.skeleton) for k in range(n)]


def rotate_about_vertical(seq: MotionSequence, yaw: float, up_axis: str = "y") -> MotionSequence:
    """Yaw the whole motion about the origin: root positions and root rotation only."""
    Q = axis_rotation(up_axis, yaw)
    root, rot = decode_frames(seq.frames)
    rot = rot.copy()
    rot[:, 0] = Q @ rot[:, 0]
    return MotionSequence(encode_frames(root @ Q.T, rot), seq.fps, seq.skeleton)


def augment_rotations(seq: MotionSequence, count: int, rng: np.random.Generator, up_axis: str = "y") -> list[MotionSequence]:
    if count < 0:
        raise ValueError("count must be non-negative")
    yaws = rng.uniform(0.0, 2 * np.pi, size=count)
    return [rotate_about_vertical(seq, float(y), up_axis) for y in yaws]


def sample_context(seq: MotionSequence | np.ndarray, L: int, rng: np.random.Generator) -> Context:
    frames = seq.frames if isinstance(seq, MotionSequence) else np.asarray(seq)
    B = frames.shape[0]
    check_context_length(L, B)
    idx = np.sort(rng.choice(B, size=L, replace=False))
    return Context(frames[idx].copy(), idx)


def split_dataset(chunk_ids: list[str], seed: int, groups: dict[str, str] | None = None) -> DatasetSplit:
    """Seeded 80/10/10 split (floor, floor, remainder) over source chunks.

    ``groups`` maps a chunk id to the id of its source chunk; every augmented
    copy lands in the same partition as its source.
    """
    groups = groups or {}
    sources = sorted({groups.get(c, c) for c in chunk_ids})
    n = len(sources)
    if n < 10:
        raise ValueError(f"need at least 10 source chunks to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_train, n_val = n * 8 // 10, n // 10
    part = {}
    for rank, k in enumerate(order):
        part[sources[k]] = 0 if rank < n_train else 1 if rank < n_train + n_val else 2
    buckets: list[list[str]] = [[], [], []]
    for c in chunk_ids:
        buckets[part[groups.get(c, c)]].append(c)
    return DatasetSplit(buckets[0], buckets[1], buckets[2], seed)


# -- chunk dataset file ---------------------------------------------------

@dataclass
class ChunkDataset:
    """A stack of equal-length chunks ``(N, B, F)`` sharing one skeleton."""

    frames: np.ndarray
    fps: float
    skeleton: Skeleton
    ids: list[str]
    sources: list[str] = field(default_factory=list)
    up_axis: str = "y"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 3:
            raise ValueError("chunk frames must be (N, B, F)")
        if len(self.ids) != len(self.frames):
            raise ValueError("one id per chunk required")
        if not self.sources:
            self.sources = list(self.ids)

    @property
    def block(self) -> int:
        return self.frames.shape[1]

    def __len__(self) -> int:
        return len(self.frames)

    def select(self, ids: list[str]) -> "ChunkDataset":
        pos = {c: i for i, c in enumerate(self.ids)}
        idx = [pos[c] for c in ids]
        return replace(self, frames=self.frames[idx], ids=list(ids), sources=[self.sources[i] for i in idx])

    def sequence(self, i: int) -> MotionSequence:
        return MotionSequence(self.frames[i].astype(np.float64), self.fps, self.skeleton)


class ChunkFormatError(ValueError):
    pass


def write_chunk_file(path, ds: ChunkDataset) -> None:
    """Magic, uint32 header length, JSON header, then little-endian float32 frames."""
    N, B, F = ds.frames.shape
    header = {
        "version": CHUNK_VERSION,
        "J": ds.skeleton.num_joints,
        "B": B,
        "D": ROT_DIM,
        "F": F,
        "fps": ds.fps,
        "count": N,
        "up_axis": ds.up_axis,
        "skeleton": ds.skeleton.to_dict(),
        "ids": ds.ids,
        "sources": ds.sources,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(CHUNK_MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(np.ascontiguousarray(ds.frames, dtype="<f4").tobytes())


def read_chunk_file(path) -> ChunkDataset:
    raw = Path(path).read_bytes()
    if raw[: len(CHUNK_MAGIC)] != CHUNK_MAGIC:
        raise ChunkFormatError(f"{path}: not a chunk dataset (bad magic)")
    try:
        (n,) = struct.unpack_from("<I", raw, len(CHUNK_MAGIC))
        start = len(CHUNK_MAGIC) + 4
        header = json.loads(raw[start : start + n])
    except (struct.error, ValueError) as exc:
        raise ChunkFormatError(f"{path}: corrupt header ({exc})") from None
    if header.get("version") != CHUNK_VERSION:
        raise ChunkFormatError(f"{path}: unsupported version {header.get('version')}")
    N, B, F = header["count"], header["B"], header["F"]
    if F != 3 + header["J"] * header["D"]:
        raise ChunkFormatError(f"{path}: inconsistent header (F != 3 + J*D)")
    body = raw[start + n :]
    if len(body) != N * B * F * 4:
        raise ChunkFormatError(f"{path}: body has {len(body)} bytes, header implies {N * B * F * 4}")
    frames = np.frombuffer(body, dtype="<f4").reshape(N, B, F).astype(np.float32)
    return ChunkDataset(
        frames, header["fps"], Skeleton.from_dict(header["skeleton"]), header["ids"], header["sources"], header["up_axis"]
    )


def write_manifest(path, split: DatasetSplit, dataset_file: str) -> None:
    payload = {"dataset": dataset_file, **split.to_dict()}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_manifest(path) -> tuple[DatasetSplit, str]:
    d = json.loads(Path(path).read_text())
    return DatasetSplit.from_dict(d), d.get("dataset", "")


# -- whole pipeline -------------------------------------------------------

def preprocess(
    sequences: list[tuple[str, MotionSequence]],
    fps: float = 15,
    block: int = 75,
    augment: int = 2,
    seed: int = 0,
    up_axis: str = "y",
) -> tuple[ChunkDataset, DatasetSplit]:
    """Downsample, chunk and yaw-augment named sequences, then split by source chunk.

    Each source chunk is kept and joined by ``augment`` randomly yawed copies.
    """
    if not sequences:
        raise ValueError("no input sequences")
    rng = np.random.default_rng(seed)
    skeleton = sequences[0][1].skeleton
    frames, ids, sources = [], [], []
    out_fps = None
    for name, seq in sequences:
        if seq.skeleton.num_joints != skeleton.num_joints or not np.array_equal(seq.skeleton.parent, skeleton.parent):
            raise ValueError(f"{name}: skeleton differs from the first sequence")
        low = downsample(seq, fps)
        out_fps = low.fps if out_fps is None else out_fps
        for k, c in enumerate(chunk(low, block)):
            src = f"{name}/c{k:04d}"
            copies = [c] + augment_rotations(c, augment, rng, up_axis)
            for a, copy in enumerate(copies):
                frames.append(copy.frames)
                ids.append(f"{src}/a{a}")
                sources.append(src)
    if not frames:
        raise ValueError(f"no sequence is long enough for a {block}-frame chunk")
    ds = ChunkDataset(np.stack(frames), out_fps, skeleton, ids, sources, up_axis)
    split = split_dataset(ids, seed, dict(zip(ids, sources)))
    return ds, split
