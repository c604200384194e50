"""Composite training objective: five root-mean-square error terms and their sum.

Every function accepts a single motion ``(B, F)`` or a batch ``(N, B, F)``.
For a batch, each term is computed per sample and then averaged over samples.
Square roots are taken over the mean across frames and all trailing feature
dimensions, with a small epsilon so gradients stay finite at zero error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import Skeleton, forward_kinematics_t
from .rotation import sixd_to_matrix_t
from .tensor import Tensor, as_tensor

SQRT_EPS = 1e-12
COMPONENTS = ("l_g", "l_r", "l_c", "l_r_vel", "l_p_vel")


@dataclass
class LossBreakdown:
    l_g: Tensor
    l_r: Tensor
    l_c: Tensor
    l_r_vel: Tensor
    l_p_vel: Tensor
    total: Tensor

    def as_floats(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in COMPONENTS + ("total",)}


def _batched(x) -> Tensor:
    x = as_tensor(x)
    return x if x.ndim == 3 else x.reshape((1,) + x.shape)


def _rms(diff: Tensor, weights: np.ndarray | None = None) -> Tensor:
    """Per-sample root mean square over all axes but the first, then the mean over samples."""
    axes = tuple(range(1, diff.ndim))
    sq = diff * diff
    if weights is None:
        ms = sq.mean(axis=axes)
    else:
        ms = (sq * weights).sum(axis=axes)
    return (ms + SQRT_EPS).sqrt().mean()


def _check(a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def joint_positions_t(x: Tensor, skeleton: Skeleton) -> Tensor:
    """FK of frames ``(..., F)`` to joint positions ``(..., J, 3)``."""
    J = skeleton.num_joints
    if x.shape[-1] != 3 + 6 * J:
        raise ValueError(f"feature size {x.shape[-1]} does not match {J} joints")
    rot = sixd_to_matrix_t(x[..., 3:].reshape(x.shape[:-1] + (J, 6)))
    return forward_kinematics_t(skeleton, rot, x[..., 0:3])


def model_loss(x0_hat, x0) -> Tensor:
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    return _rms(a - b)


def reconstruction_loss(x0_hat, x0, skeleton: Skeleton) -> Tensor:
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    return _rms(joint_positions_t(a, skeleton) - joint_positions_t(b, skeleton))


def _context_weights(indices, n: int, B: int, J: int) -> np.ndarray:
    per_sample = [indices] * n if np.ndim(indices[0]) == 0 else list(indices)
    if len(per_sample) != n:
        raise ValueError("need one index set per sample")
    w = np.zeros((n, B, 1, 1))
    for k, idx in enumerate(per_sample):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise ValueError("context index set is empty")
        w[k, idx] = 1.0 / (len(np.unique(idx)) * J * 3)
    return w


def context_loss(x0_hat, x0, indices, skeleton: Skeleton) -> Tensor:
    """Position error restricted to the keyframe slots ``indices`` (one array, or one per sample)."""
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    if len(indices) == 0:
        raise ValueError("context index set is empty")
    diff = joint_positions_t(a, skeleton) - joint_positions_t(b, skeleton)
    return _rms(diff, _context_weights(indices, a.shape[0], a.shape[1], skeleton.num_joints))


def _frame_diff(x: Tensor) -> Tensor:
    return x[:, 1:] - x[:, :-1]


def rotation_velocity_loss(x0_hat, x0) -> Tensor:
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    if a.shape[1] < 2:
        raise ValueError("velocity terms need at least two frames")
    return _rms(_frame_diff(a) - _frame_diff(b))


def position_velocity_loss(x0_hat, x0, skeleton: Skeleton) -> Tensor:
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    if a.shape[1] < 2:
        raise ValueError("velocity terms need at least two frames")
    pa, pb = joint_positions_t(a, skeleton), joint_positions_t(b, skeleton)
    return _rms(_frame_diff(pa) - _frame_diff(pb))


def total_loss(x0_hat, x0, indices, skeleton: Skeleton, weights: dict[str, float] | None = None) -> LossBreakdown:
    """All five terms plus their (by default unweighted) sum; FK is evaluated once per input."""
    a, b = _batched(x0_hat), _batched(x0)
    _check(a, b)
    if a.shape[1] < 2:
        raise ValueError("velocity terms need at least two frames")
    pa, pb = joint_positions_t(a, skeleton), joint_positions_t(b, skeleton)
    dp = pa - pb
    terms = {
        "l_g": _rms(a - b),
        "l_r": _rms(dp),
        "l_c": _rms(dp, _context_weights(indices, a.shape[0], a.shape[1], skeleton.num_joints)),
        "l_r_vel": _rms(_frame_diff(a) - _frame_diff(b)),
        "l_p_vel": _rms(_frame_diff(pa) - _frame_diff(pb)),
    }
    total = None
    for name in COMPONENTS:
        term = terms[name]
        if weights is not None and weights.get(name, 1.0) != 1.0:
            term = term * weights[name]
        total = term if total is None else total + term
    return LossBreakdown(total=total, **terms)
