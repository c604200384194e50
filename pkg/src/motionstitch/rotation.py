"""Rotation conversions: 6D, matrices, quaternions, axis-angle and Euler angles.

The 6D encoding is the first two *columns* of the rotation matrix, stored as
``[m[:, 0], m[:, 1]]``. Decoding normalises the first column, Gram-Schmidt
orthogonalises the second against it and completes the frame with a cross
product. All numpy functions broadcast over leading axes.
"""
from __future__ import annotations

import numpy as np

from .tensor import Tensor, concat, cross, stack

DEGENERACY_EPS = 1e-8
_AXES = {"X": 0, "Y": 1, "Z": 2}


class DegenerateRotationError(ValueError):
    """A 6D vector whose columns are zero or parallel."""


def sixd_to_matrix(r, eps: float = DEGENERACY_EPS) -> np.ndarray:
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1] != 6:
        raise ValueError(f"expected trailing dimension 6, got {r.shape}")
    a1, a2 = r[..., :3], r[..., 3:]
    n1 = np.linalg.norm(a1, axis=-1, keepdims=True)
    if np.any(n1 < eps):
        raise DegenerateRotationError("first column has (near) zero length")
    b1 = a1 / n1
    u = a2 - (b1 * a2).sum(-1, keepdims=True) * b1
    n2 = np.linalg.norm(u, axis=-1, keepdims=True)
    if np.any(n2 < eps):
        raise DegenerateRotationError("second column is (near) parallel to the first")
    b2 = u / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=-1)


def matrix_to_sixd(m) -> np.ndarray:
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def sixd_to_matrix_t(r: Tensor, eps: float = DEGENERACY_EPS) -> Tensor:
    """Differentiable :func:`sixd_to_matrix` on a :class:`Tensor` of shape ``(..., 6)``."""
    a1, a2 = r[..., 0:3], r[..., 3:6]
    n1 = (a1 * a1).sum(axis=-1, keepdims=True).sqrt()
    if np.any(n1.data < eps):
        raise DegenerateRotationError("first column has (near) zero length")
    b1 = a1 / n1
    u = a2 - (b1 * a2).sum(axis=-1, keepdims=True) * b1
    n2 = (u * u).sum(axis=-1, keepdims=True).sqrt()
    if np.any(n2.data < eps):
        raise DegenerateRotationError("second column is (near) parallel to the first")
    b2 = u / n2
    return stack([b1, b2, cross(b1, b2)], axis=-1)


def matrix_to_sixd_t(m: Tensor) -> Tensor:
    return concat([m[..., :, 0], m[..., :, 1]], axis=-1)


def quat_to_matrix(q, tol: float = 1e-3) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` to matrix.

    Inputs whose norm is off by at most ``tol`` are renormalised; anything
    further away is rejected.
    """
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(np.abs(n - 1.0) > tol):
        raise ValueError("quaternion is not unit length")
    w, x, y, z = np.moveaxis(q / n, -1, 0)
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def axis_angle_to_matrix(v) -> np.ndarray:
    """Rodrigues' formula; the vector's length is the angle in radians."""
    v = np.asarray(v, dtype=np.float64)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    safe = np.where(theta > 0, theta, 1.0)
    k = np.where(theta > 0, v / safe, 0.0)
    kx, ky, kz = np.moveaxis(k, -1, 0)
    zero = np.zeros_like(kx)
    K = np.stack(
        [np.stack([zero, -kz, ky], -1), np.stack([kz, zero, -kx], -1), np.stack([-ky, kx, zero], -1)],
        axis=-2,
    )
    s = np.sin(theta)[..., None]
    c = np.cos(theta)[..., None]
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + s * K + (1 - c) * (K @ K)


def axis_rotation(axis: str, angle) -> np.ndarray:
    """Rotation by ``angle`` radians about a coordinate axis ``'X'``, ``'Y'`` or ``'Z'``."""
    angle = np.asarray(angle, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    one, zero = np.ones_like(c), np.zeros_like(c)
    i = _AXES[axis.upper()]
    rows = {
        0: [[one, zero, zero], [zero, c, -s], [zero, s, c]],
        1: [[c, zero, s], [zero, one, zero], [-s, zero, c]],
        2: [[c, -s, zero], [s, c, zero], [zero, zero, one]],
    }[i]
    return np.stack([np.stack(r, -1) for r in rows], -2)


def euler_to_matrix(angles, order: str, degrees: bool = True) -> np.ndarray:
    """Intrinsic Euler angles, ``R = R_order[0](a0) @ R_order[1](a1) @ R_order[2](a2)``.

    This is the BVH convention: channels listed left to right compose left to right.
    """
    angles = np.asarray(angles, dtype=np.float64)
    if degrees:
        angles = np.deg2rad(angles)
    out = axis_rotation(order[0], angles[..., 0])
    for n in range(1, len(order)):
        out = out @ axis_rotation(order[n], angles[..., n])
    return out


def matrix_to_euler(m, order: str, degrees: bool = True) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix` for the six Tait-Bryan orders."""
    order = order.upper()
    if len(order) != 3 or len(set(order)) != 3 or set(order) - set(_AXES):
        raise ValueError(f"unsupported Euler order {order!r}")
    i, j, k = (_AXES[a] for a in order)
    s = 1.0 if (j - i) % 3 == 1 else -1.0
    m = np.asarray(m, dtype=np.float64)
    sb = np.clip(s * m[..., i, k], -1.0, 1.0)
    b = np.arcsin(sb)
    cb = np.sqrt(np.maximum(0.0, 1.0 - sb * sb))
    locked = cb < 1e-9
    a = np.where(locked, np.arctan2(s * m[..., k, j], m[..., j, j]), np.arctan2(-s * m[..., j, k], m[..., k, k]))
    c = np.where(locked, 0.0, np.arctan2(-s * m[..., i, j], m[..., i, i]))
    out = np.stack([a, b, c], axis=-1)
    return np.rad2deg(out) if degrees else out


def random_rotation(rng: np.random.Generator, size=()) -> np.ndarray:
    """Uniformly distributed rotations via normalised Gaussian quaternions."""
    shape = (size,) if isinstance(size, int) else tuple(size)
    q = rng.standard_normal(shape + (4,))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    return quat_to_matrix(q)


def geodesic_distance(a, b) -> np.ndarray:
    """Angle in radians of the relative rotation ``a^T b``."""
    rel = np.swapaxes(np.asarray(a), -1, -2) @ np.asarray(b)
    cos = (np.trace(rel, axis1=-2, axis2=-1) - 1.0) / 2.0
    return np.arccos(np.clip(cos, -1.0, 1.0))


def is_rotation(m, tol: float = 1e-6) -> bool:
    m = np.asarray(m, dtype=np.float64)
    eye = np.eye(3)
    ortho = np.linalg.norm(np.swapaxes(m, -1, -2) @ m - eye, axis=(-2, -1))
    det = np.linalg.det(m)
    return bool(np.all(ortho < tol) and np.all(np.abs(det - 1.0) < tol))
