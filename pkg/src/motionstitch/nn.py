"""Layers for the transformer stacks, built on :mod:`motionstitch.tensor`."""
from __future__ import annotations

import math
from typing import Iterator

import numpy as np

from .tensor import Tensor, dropout, gelu, get_default_dtype, layer_norm, softmax


class Module:
    training: bool = True

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _param(values: np.ndarray) -> Tensor:
    return Tensor(values.astype(get_default_dtype()), requires_grad=True)


class Linear(Module):
    """``y = x @ W + b`` with fan-in scaled uniform initialisation."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float = 1.0):
        bound = scale / math.sqrt(n_in)
        self.weight = _param(rng.uniform(-bound, bound, size=(n_in, n_out)))
        self.bias = _param(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gain = _param(np.ones(dim))
        self.bias = _param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class MultiHeadSelfAttention(Module):
    """Scaled dot-product self-attention over the token axis, no causal mask."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, out_scale: float = 1.0, dropout: float = 0.0):
        if dim % heads:
            raise ValueError(f"model_dim {dim} not divisible by heads {heads}")
        self.dim, self.heads = dim, heads
        self.qkv = Linear(dim, 3 * dim, rng)
        self.out = Linear(dim, dim, rng, scale=out_scale)
        self.dropout = dropout

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        n, s, d = x.shape
        h = self.heads
        dh = d // h
        qkv = self.qkv(x).reshape(n, s, 3, h, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
        weights = dropout(softmax(scores, axis=-1), self.dropout, rng, self.training)
        ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(n, s, d)
        return self.out(ctx)


class EncoderLayer(Module):
    """Pre-norm transformer encoder block: attention then feed-forward, each residual."""

    def __init__(self, dim: int, heads: int, ff_dim: int, rng: np.random.Generator, dropout: float = 0.1, n_layers: int = 1):
        out_scale = 1.0 / math.sqrt(2 * n_layers)
        self.norm1 = LayerNorm(dim)
        self.attn = MultiHeadSelfAttention(dim, heads, rng, out_scale=out_scale, dropout=dropout)
        self.norm2 = LayerNorm(dim)
        self.ff1 = Linear(dim, ff_dim, rng)
        self.ff2 = Linear(ff_dim, dim, rng, scale=out_scale)
        self.dropout = dropout

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        drop = lambda t: dropout(t, self.dropout, rng, self.training)  # noqa: E731
        x = x + drop(self.attn(self.norm1(x), rng))
        return x + drop(self.ff2(drop(gelu(self.ff1(self.norm2(x))))))


class Encoder(Module):
    def __init__(self, n_layers: int, dim: int, heads: int, ff_dim: int, rng: np.random.Generator, dropout: float = 0.1):
        self.layers = [EncoderLayer(dim, heads, ff_dim, rng, dropout, n_layers) for _ in range(n_layers)]
        self.norm = LayerNorm(dim)

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        for layer in self.layers:
            x = layer(x, rng)
        return self.norm(x)


def encoder_parameter_count(n_layers: int, dim: int, ff_dim: int) -> int:
    """Closed-form size of :class:`Encoder` (per layer: qkv, out, two norms, two FF linears)."""
    per_layer = (dim * 3 * dim + 3 * dim) + (dim * dim + dim) + 4 * dim + (dim * ff_dim + ff_dim) + (ff_dim * dim + dim)
    return n_layers * per_layer + 2 * dim


def sinusoidal_encoding(positions: np.ndarray, dim: int) -> np.ndarray:
    """Fixed sine/cosine embedding of integer positions, shape ``(len(positions), dim)``."""
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / max(half, 1))
    angles = positions * freqs
    out = np.zeros((positions.shape[0], dim))
    out[:, 0 : 2 * half : 2] = np.sin(angles)
    out[:, 1 : 2 * half : 2] = np.cos(angles)
    return out
