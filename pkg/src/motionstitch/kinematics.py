"""Skeletons and forward kinematics.

Rest offsets are *absolute* rest-pose joint positions (metres). A bone's local
translation is ``rest_offsets[j] - rest_offsets[parent[j]]``, with the root's
parent position taken as the origin. Joint rotations are local, i.e. relative
to the parent frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, stack


@dataclass
class Skeleton:
    parent: np.ndarray
    rest_offsets: np.ndarray
    names: list[str] = field(default_factory=list)

    def __post_init__(self):
        parent = np.asarray(self.parent, dtype=np.int64).copy()
        offsets = np.asarray(self.rest_offsets, dtype=np.float64).reshape(-1, 3).copy()
        n = len(parent)
        if offsets.shape[0] != n:
            raise ValueError(f"{n} parents but {offsets.shape[0]} rest offsets")
        names = list(self.names) if self.names else [f"joint{i}" for i in range(n)]
        if len(names) != n:
            raise ValueError("names length does not match joint count")
        roots = np.flatnonzero(parent < 0)
        if len(roots) != 1:
            raise ValueError(f"skeleton needs exactly one root, found {len(roots)}")
        if np.any(parent >= n):
            raise ValueError("parent index out of range")
        order = _topological_order(parent, int(roots[0]))
        if order != list(range(n)):
            remap = np.empty(n, dtype=np.int64)
            remap[order] = np.arange(n)
            parent = np.array([-1 if parent[o] < 0 else remap[parent[o]] for o in order], dtype=np.int64)
            offsets = offsets[order]
            names = [names[o] for o in order]
        self.parent, self.rest_offsets, self.names = parent, offsets, names

    @property
    def num_joints(self) -> int:
        return len(self.parent)

    def bone_offsets(self) -> np.ndarray:
        """Local translation of every joint relative to its parent (root: its own rest position)."""
        out = self.rest_offsets.copy()
        out[1:] -= self.rest_offsets[self.parent[1:]]
        return out

    def children(self, i: int) -> list[int]:
        return [int(c) for c in np.flatnonzero(self.parent == i)]

    def edges(self) -> list[tuple[int, int]]:
        return [(int(p), c) for c, p in enumerate(self.parent) if p >= 0]

    def to_dict(self) -> dict:
        return {"parent": self.parent.tolist(), "rest_offsets": self.rest_offsets.tolist(), "names": self.names}

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        return cls(np.array(d["parent"]), np.array(d["rest_offsets"]), list(d["names"]))

    def __eq__(self, other):
        if not isinstance(other, Skeleton):
            return NotImplemented
        return (
            np.array_equal(self.parent, other.parent)
            and np.array_equal(self.rest_offsets, other.rest_offsets)
            and self.names == other.names
        )


def _topological_order(parent: np.ndarray, root: int) -> list[int]:
    """Identity if every parent precedes its child, else a depth-first order."""
    children: dict[int, list[int]] = {}
    for c, p in enumerate(parent):
        if p >= 0:
            children.setdefault(int(p), []).append(c)
    order, stack_ = [], [root]
    while stack_:
        j = stack_.pop()
        order.append(j)
        stack_.extend(reversed(children.get(j, [])))
        if len(order) > len(parent):
            break
    if len(order) != len(parent):
        raise ValueError("skeleton contains a cycle or disconnected joints")
    if root == 0 and all(parent[i] < i for i in range(1, len(parent))):
        return list(range(len(parent)))
    return order


def kinematic_chain(skeleton: Skeleton, i: int) -> list[int]:
    """Joints from the root down to ``i`` inclusive."""
    if not 0 <= i < skeleton.num_joints:
        raise IndexError(f"joint index {i} out of range for {skeleton.num_joints} joints")
    chain = []
    while i >= 0:
        chain.append(i)
        i = int(skeleton.parent[i])
    return chain[::-1]


def forward_kinematics(skeleton: Skeleton, rotations, root_position) -> np.ndarray:
    """Global joint positions ``(..., J, 3)`` from local rotations ``(..., J, 3, 3)``.

    Each joint position is read off the product of homogeneous bone transforms
    along its kinematic chain, root first. The blocks are written here in the
    column-vector layout ``[[R_j, t_j], [0, 1]]``; this is the transpose of the
    row-vector layout with the translation in the bottom row, and gives the same
    positions.
    """
    rotations = np.asarray(rotations, dtype=np.float64)
    root_position = np.asarray(root_position, dtype=np.float64)
    lead = rotations.shape[:-3]
    J = skeleton.num_joints
    if rotations.shape[-3:] != (J, 3, 3):
        raise ValueError(f"expected rotations (..., {J}, 3, 3), got {rotations.shape}")
    blocks = np.zeros(lead + (J, 4, 4))
    blocks[..., :3, :3] = rotations
    blocks[..., :3, 3] = skeleton.bone_offsets()
    blocks[..., 3, 3] = 1.0
    out = np.empty(lead + (J, 3))
    for i in range(J):
        T = np.broadcast_to(np.eye(4), lead + (4, 4))
        for j in kinematic_chain(skeleton, i):
            T = T @ blocks[..., j, :, :]
        out[..., i, :] = T[..., :3, 3]
    return out + root_position[..., None, :]


def global_rotations(skeleton: Skeleton, rotations) -> np.ndarray:
    rotations = np.asarray(rotations, dtype=np.float64)
    out = np.empty_like(rotations)
    for j in range(skeleton.num_joints):
        p = skeleton.parent[j]
        out[..., j, :, :] = rotations[..., j, :, :] if p < 0 else out[..., p, :, :] @ rotations[..., j, :, :]
    return out


def forward_kinematics_t(skeleton: Skeleton, rotations: Tensor, root_position: Tensor) -> Tensor:
    """Differentiable FK by parent-to-child propagation; same result as :func:`forward_kinematics`."""
    bones = skeleton.bone_offsets()
    rot_g: list[Tensor] = []
    pos: list[Tensor] = []
    for j in range(skeleton.num_joints):
        local = rotations[..., j, :, :]
        p = int(skeleton.parent[j])
        if p < 0:
            rot_g.append(local)
            pos.append(root_position + bones[j])
        else:
            offset = rot_g[p] @ Tensor(bones[j].reshape(3, 1))
            pos.append(pos[p] + offset[..., 0])
            rot_g.append(rot_g[p] @ local)
    return stack(pos, axis=-2)


_BODY22 = [
    ("pelvis", -1, (0.0, 0.93, 0.0)),
    ("left_hip", 0, (0.07, -0.09, 0.0)),
    ("right_hip", 0, (-0.07, -0.09, 0.0)),
    ("spine1", 0, (0.0, 0.11, -0.02)),
    ("left_knee", 1, (0.04, -0.38, 0.0)),
    ("right_knee", 2, (-0.04, -0.38, 0.0)),
    ("spine2", 3, (0.0, 0.14, 0.01)),
    ("left_ankle", 4, (-0.01, -0.40, -0.04)),
    ("right_ankle", 5, (0.01, -0.40, -0.04)),
    ("spine3", 6, (0.0, 0.05, 0.03)),
    ("left_foot", 7, (0.04, -0.06, 0.12)),
    ("right_foot", 8, (-0.04, -0.06, 0.12)),
    ("neck", 9, (0.0, 0.21, -0.03)),
    ("left_collar", 9, (0.08, 0.12, -0.02)),
    ("right_collar", 9, (-0.08, 0.12, -0.02)),
    ("head", 12, (0.0, 0.09, 0.05)),
    ("left_shoulder", 13, (0.10, 0.03, -0.01)),
    ("right_shoulder", 14, (-0.10, 0.03, -0.01)),
    ("left_elbow", 16, (0.26, -0.01, -0.02)),
    ("right_elbow", 17, (-0.26, -0.01, -0.02)),
    ("left_wrist", 18, (0.25, 0.01, 0.0)),
    ("right_wrist", 19, (-0.25, 0.01, 0.0)),
]


def body22_skeleton() -> Skeleton:
    """A 22-joint human body in metres, +Y up (SMPL-like joint layout)."""
    names = [n for n, _, _ in _BODY22]
    parent = np.array([p for _, p, _ in _BODY22])
    local = np.array([o for _, _, o in _BODY22])
    absolute = local.copy()
    for j in range(1, len(parent)):
        absolute[j] = absolute[parent[j]] + local[j]
    return Skeleton(parent, absolute, names)
