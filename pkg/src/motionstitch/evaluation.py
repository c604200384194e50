"""Feature autoencoder and the FID / Diversity / Multimodality metrics.

Absolute metric values depend on the feature extractor; they are only
comparable between runs that share one frozen extractor artifact.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .nn import Linear, Module
from .tensor import Tensor, gelu, get_default_dtype, no_grad

EMBED_DIM = 256
EXTRACTOR_MAGIC = b"MSFEX01\n"
EXTRACTOR_VERSION = 1


class FeatureExtractor(Module):
    """Strided temporal-convolution autoencoder ``(B, F) -> 256``.

    Two non-overlapping temporal convolutions (kernel = stride = 5, then 3)
    pool 75 frames down to 5 slots, which a linear layer maps to the
    embedding. The decoder mirrors the encoder and exists for training only.
    Inputs are standardised per feature with statistics of the training set.
    """

    K1, K2 = 5, 3

    def __init__(self, block: int, feature_dim: int, hidden: int = 64, rng: np.random.Generator | int = 0,
                 embed_dim: int = EMBED_DIM):
        rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
        self.block, self.feature_dim, self.hidden, self.embed_dim = block, feature_dim, hidden, embed_dim
        self.padded = math.ceil(block / (self.K1 * self.K2)) * self.K1 * self.K2
        self.slots = self.padded // (self.K1 * self.K2)
        h = hidden
        self.enc1 = Linear(self.K1 * feature_dim, h, rng)
        self.enc2 = Linear(self.K2 * h, h, rng)
        self.enc3 = Linear(self.slots * h, embed_dim, rng)
        self.dec1 = Linear(embed_dim, self.slots * h, rng)
        self.dec2 = Linear(h, self.K2 * h, rng)
        self.dec3 = Linear(h, self.K1 * feature_dim, rng)
        self.mean = np.zeros(feature_dim)
        self.std = np.ones(feature_dim)

    def fit_normalizer(self, frames: np.ndarray) -> None:
        flat = np.asarray(frames, dtype=np.float64).reshape(-1, self.feature_dim)
        self.mean = flat.mean(0)
        self.std = np.maximum(flat.std(0), 1e-3)

    def _prepare(self, frames) -> Tensor:
        x = (np.asarray(frames, dtype=np.float64) - self.mean) / self.std
        if x.shape[1:] != (self.block, self.feature_dim):
            raise ValueError(f"expected (n, {self.block}, {self.feature_dim}), got {x.shape}")
        if self.padded > self.block:
            x = np.concatenate([x, np.repeat(x[:, -1:], self.padded - self.block, axis=1)], axis=1)
        return Tensor(x)

    def encode(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        h = gelu(self.enc1(x.reshape(n, self.padded // self.K1, self.K1 * self.feature_dim)))
        h = gelu(self.enc2(h.reshape(n, self.slots, self.K2 * self.hidden)))
        return self.enc3(h.reshape(n, self.slots * self.hidden))

    def decode(self, z: Tensor) -> Tensor:
        n = z.shape[0]
        h = gelu(self.dec1(z)).reshape(n, self.slots, self.hidden)
        h = gelu(self.dec2(h)).reshape(n, self.slots * self.K2, self.hidden)
        return self.dec3(h).reshape(n, self.padded, self.feature_dim)

    def reconstruction_mse(self, frames) -> Tensor:
        x = self._prepare(frames)
        diff = self.decode(self.encode(x)) - x
        return (diff * diff).mean()


def train_extractor(
    frames: np.ndarray,
    steps: int = 2000,
    lr: float = 1e-3,
    batch_size: int = 32,
    hidden: int = 64,
    seed: int = 0,
) -> tuple[FeatureExtractor, float]:
    """Fit the autoencoder with plain reconstruction MSE; returns it with its final full-data MSE."""
    from .training import Adam

    frames = np.asarray(frames, dtype=np.float64)
    rng = np.random.default_rng(seed)
    ext = FeatureExtractor(frames.shape[1], frames.shape[2], hidden, rng)
    ext.fit_normalizer(frames)
    opt = Adam(ext.parameters(), lr)
    for _ in range(steps):
        idx = rng.choice(len(frames), size=min(batch_size, len(frames)), replace=False)
        ext.zero_grad()
        loss = ext.reconstruction_mse(frames[idx])
        loss.backward()
        opt.step([p.grad for p in ext.parameters()])
    with no_grad():
        final = float(ext.reconstruction_mse(frames).data)
    return ext, final


def extract_features(seqs, extractor: FeatureExtractor, batch_size: int = 256) -> np.ndarray:
    """Deterministic ``(n, 256)`` embeddings."""
    seqs = np.asarray(seqs)
    out = []
    with no_grad():
        for s in range(0, len(seqs), batch_size):
            out.append(extractor.encode(extractor._prepare(seqs[s : s + batch_size])).data.astype(np.float64))
    return np.concatenate(out) if out else np.zeros((0, extractor.embed_dim))


def save_extractor(path, ext: FeatureExtractor, meta: dict | None = None) -> None:
    blobs = [(k, v.data) for k, v in ext.named_parameters()] + [("norm.mean", ext.mean), ("norm.std", ext.std)]
    header = {
        "version": EXTRACTOR_VERSION,
        "block": ext.block,
        "feature_dim": ext.feature_dim,
        "hidden": ext.hidden,
        "embed_dim": ext.embed_dim,
        "meta": meta or {},
        "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in blobs],
    }
    text = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(EXTRACTOR_MAGIC + struct.pack("<I", len(text)) + text)
        for _, v in blobs:
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_extractor(path) -> FeatureExtractor:
    raw = Path(path).read_bytes()
    if raw[: len(EXTRACTOR_MAGIC)] != EXTRACTOR_MAGIC:
        raise ValueError(f"{path}: not a feature-extractor artifact")
    (n,) = struct.unpack_from("<I", raw, len(EXTRACTOR_MAGIC))
    start = len(EXTRACTOR_MAGIC) + 4
    header = json.loads(raw[start : start + n])
    if header["version"] != EXTRACTOR_VERSION:
        raise ValueError(f"{path}: unsupported extractor version {header['version']}")
    ext = FeatureExtractor(header["block"], header["feature_dim"], header["hidden"], 0, header["embed_dim"])
    params = dict(ext.named_parameters())
    offset = start + n
    for entry in header["tensors"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        value = np.frombuffer(raw[offset : offset + 8 * count], dtype="<f8").reshape(entry["shape"])
        offset += 8 * count
        if entry["name"] == "norm.mean":
            ext.mean = value.copy()
        elif entry["name"] == "norm.std":
            ext.std = value.copy()
        else:
            params[entry["name"]].data = value.astype(get_default_dtype())
    return ext.eval()


# -- statistics -----------------------------------------------------------

@dataclass
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray
    shrunk: bool = False  # True when n <= dim forced the diagonal-shrinkage estimate
    n: int = 0


def gaussian_stats(features) -> GaussianStats:
    """Mean and covariance (n - 1 denominator).

    With ``n <= dim`` the sample covariance is singular; it is then shrunk
    toward its diagonal with weight ``dim / (n + dim)`` and flagged.
    """
    x = np.asarray(features, dtype=np.float64)
    n, d = x.shape
    if n < 2:
        raise ValueError("need at least two samples for a covariance")
    cov = np.cov(x, rowvar=False).reshape(d, d)
    shrunk = n <= d
    if shrunk:
        lam = d / (n + d)
        cov = (1 - lam) * cov + lam * np.diag(np.diag(cov))
    cov = 0.5 * (cov + cov.T)
    return GaussianStats(x.mean(0), cov, shrunk, n)


def _sqrt_psd(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def fid(real: GaussianStats, gen: GaussianStats) -> float:
    """Frechet distance ``|mu1 - mu2|^2 + Tr(C1 + C2 - 2 (C1 C2)^(1/2))``.

    ``Tr((C1 C2)^(1/2))`` is evaluated as the sum of square roots of the
    (clamped) eigenvalues of the symmetric ``C1^(1/2) C2 C1^(1/2)``.
    """
    if real.mean.shape != gen.mean.shape or real.cov.shape != gen.cov.shape:
        raise ValueError("statistics have different dimensions")
    for s in (real, gen):
        if not (np.all(np.isfinite(s.mean)) and np.all(np.isfinite(s.cov))):
            raise ValueError("non-finite statistics")
    s1 = _sqrt_psd(real.cov)
    inner = s1 @ gen.cov @ s1
    w = np.linalg.eigvalsh(0.5 * (inner + inner.T))
    tr_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()
    diff = real.mean - gen.mean
    return float(diff @ diff + np.trace(real.cov) + np.trace(gen.cov) - 2.0 * tr_sqrt)


def fid_from_features(real, gen) -> float:
    return fid(gaussian_stats(real), gaussian_stats(gen))


def _mean_all_pairs(x: np.ndarray) -> float:
    d = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=-1)
    iu = np.triu_indices(len(x), 1)
    return float(d[iu].mean())


def diversity(features, pair_count: int | None = 300, rng: np.random.Generator | None = None) -> float:
    """Mean distance over random disjoint pairs (at most ``n // 2``); ``pair_count=None`` uses all pairs."""
    x = np.asarray(features, dtype=np.float64)
    if len(x) < 2:
        raise ValueError("diversity needs at least two samples")
    if pair_count is None:
        return _mean_all_pairs(x)
    rng = rng if rng is not None else np.random.default_rng(0)
    k = min(pair_count, len(x) // 2)
    perm = rng.permutation(len(x))[: 2 * k]
    return float(np.linalg.norm(x[perm[:k]] - x[perm[k:]], axis=-1).mean())


def multimodality(groups: Sequence, reps_per_condition: int = 10, rng: np.random.Generator | None = None) -> float:
    """Mean pairwise distance within each condition's samples, averaged over conditions.

    Groups larger than ``reps_per_condition`` are subsampled without replacement.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    if len(groups) == 0:
        raise ValueError("no groups")
    scores = []
    for g in groups:
        g = np.asarray(g, dtype=np.float64)
        if len(g) < 2:
            raise ValueError("each condition needs at least two samples")
        if len(g) > reps_per_condition >= 2:
            g = g[rng.choice(len(g), reps_per_condition, replace=False)]
        scores.append(_mean_all_pairs(g))
    return float(np.mean(scores))


def bootstrap_metric(
    metric: Callable,
    features,
    repeats: int = 10,
    rng: np.random.Generator | None = None,
) -> tuple[float, float]:
    """Mean and standard deviation of ``metric`` over resamples with replacement.

    ``features`` is an array or list (rows resampled), or a tuple of those
    (each resampled independently and passed as separate arguments).
    """
    if repeats < 2:
        raise ValueError("bootstrap needs at least two repeats")
    rng = rng if rng is not None else np.random.default_rng(0)
    parts = features if isinstance(features, tuple) else (features,)

    def resample(p):
        idx = rng.integers(0, len(p), len(p))
        return np.asarray(p)[idx] if isinstance(p, np.ndarray) else [p[i] for i in idx]

    values = np.array([metric(*[resample(p) for p in parts]) for _ in range(repeats)], dtype=np.float64)
    return float(values.mean()), float(values.std(ddof=1))


# -- report ---------------------------------------------------------------

def format_report(rows: list[dict]) -> str:
    """Plain-text table: Dataset, Method, FID, Diversity, Multimodality as ``mean ± std``."""

    def cell(v):
        return "-" if v is None else f"{v[0]:.3f} ± {v[1]:.3f}"

    header = ["Dataset", "Method", "FID (lower better)", "Diversity (higher better)", "Multimodality (higher better)"]
    body = [[r["dataset"], r["method"], cell(r.get("fid")) + ("*" if r.get("fid_shrunk") else ""),
             cell(r.get("diversity")), cell(r.get("multimodality"))] for r in rows]
    widths = [max(len(str(x)) for x in col) for col in zip(header, *body)]
    lines = ["  ".join(str(x).ljust(w) for x, w in zip(line, widths)).rstrip() for line in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    if any(r.get("fid_shrunk") for r in rows):
        lines.append("* FID covariances shrunk toward their diagonal: fewer samples than feature dimensions")
    return "\n".join(lines) + "\n"


# -- end-to-end evaluation -------------------------------------------------

def generate_groups(
    model,
    sched,
    frames: np.ndarray,
    context_length: int,
    reps: int,
    rng: np.random.Generator,
    batch_size: int = 64,
    mode: str = "direct",
) -> np.ndarray:
    """``reps`` samples for one random context per chunk of ``frames``; returns ``(n, reps, B, F)``."""
    from .data import renormalize_frames, sample_context
    from .denoiser import sample_batch

    contexts = [sample_context(f, context_length, rng) for f in np.asarray(frames, dtype=np.float64)]
    jobs = [c for c in contexts for _ in range(reps)]
    out = []
    for s in range(0, len(jobs), batch_size):
        raw = sample_batch(jobs[s : s + batch_size], model, sched, rng, mode)
        out.append(renormalize_frames(raw.astype(np.float64)))
    gen = np.concatenate(out)
    return gen.reshape((len(contexts), reps) + gen.shape[1:])


def evaluate_generation(
    model,
    sched,
    real_frames: np.ndarray,
    extractor: FeatureExtractor,
    context_lengths: Sequence[int] = (20, 10),
    reps: int = 10,
    repeats: int = 10,
    pair_count: int = 300,
    seed: int = 0,
    dataset: str = "dataset",
    mode: str = "direct",
) -> list[dict]:
    """Rows of the metrics table: one "Real" row and one row per context length."""
    rng = np.random.default_rng(seed)
    real = extract_features(real_frames, extractor)
    perm = rng.permutation(len(real))
    half_a, half_b = real[perm[: len(real) // 2]], real[perm[len(real) // 2 :]]

    def div(f):
        return diversity(f, pair_count, rng)

    rows = [{
        "dataset": dataset,
        "method": "Real",
        "fid": bootstrap_metric(fid_from_features, (half_a, half_b), repeats, rng),
        "fid_shrunk": len(half_a) <= real.shape[1],
        "diversity": bootstrap_metric(div, real, repeats, rng),
        "multimodality": None,
    }]
    for L in context_lengths:
        gen = generate_groups(model, sched, real_frames, L, reps, rng, mode=mode)
        n, r = gen.shape[:2]
        feats = extract_features(gen.reshape((n * r,) + gen.shape[2:]), extractor).reshape(n, r, -1)
        flat = feats.reshape(n * r, -1)
        rows.append({
            "dataset": dataset,
            "method": f"Ours_|c|={L}",
            "context_length": L,
            "fid": bootstrap_metric(fid_from_features, (real, flat), repeats, rng),
            "fid_shrunk": min(len(real), len(flat)) <= real.shape[1],
            "diversity": bootstrap_metric(div, flat, repeats, rng),
            "multimodality": bootstrap_metric(lambda g: multimodality(g, reps, rng), list(feats), repeats, rng),
        })
    return rows
