"""Smooth procedural motions for tests, demos and smoke runs when no capture data is at hand."""
from __future__ import annotations

import numpy as np

from .data import MotionSequence
from .kinematics import Skeleton, body22_skeleton
from .rotation import axis_angle_to_matrix


def synthetic_motion(
    n_frames: int,
    fps: float = 15.0,
    skeleton: Skeleton | None = None,
    rng: np.random.Generator | int = 0,
    amplitude: float = 0.5,
    speed: float = 1.0,
) -> MotionSequence:
    """Each joint swings about a fixed random axis with a random period and phase; the root walks along +X.

    Periods are drawn between 1 and 3 seconds so the motion is smooth at any
    frame rate. ``amplitude`` is the peak swing angle in radians.
    """
    rng = np.random.default_rng(rng)
    skeleton = skeleton or body22_skeleton()
    J = skeleton.num_joints
    t = np.arange(n_frames) / fps
    axes = rng.standard_normal((J, 3))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    period = rng.uniform(1.0, 3.0, size=J)
    phase = rng.uniform(0.0, 2 * np.pi, size=J)
    angle = amplitude * np.sin(2 * np.pi * t[:, None] / period + phase)  # (T, J)
    rotations = axis_angle_to_matrix(axes[None] * angle[..., None])
    root = np.zeros((n_frames, 3))
    root[:, 0] = speed * t
    root[:, 1] = 0.03 * np.sin(4 * np.pi * t)
    return MotionSequence.from_rotations(root, rotations, fps, skeleton)


def random_skeleton(num_joints: int, rng: np.random.Generator | int = 0, bone_scale: float = 0.2) -> Skeleton:
    """Random tree: each joint hangs off an earlier one with a random bone vector."""
    rng = np.random.default_rng(rng)
    parent = np.array([-1] + [int(rng.integers(0, j)) for j in range(1, num_joints)])
    rest = np.zeros((num_joints, 3))
    rest[0] = rng.normal(scale=bone_scale, size=3)
    for j in range(1, num_joints):
        rest[j] = rest[parent[j]] + rng.normal(scale=bone_scale, size=3)
    return Skeleton(parent, rest)
