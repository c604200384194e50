import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial.transform import Rotation

from conftest import numeric_grad
from motionstitch.rotation import (
    DegenerateRotationError, axis_angle_to_matrix, euler_to_matrix, geodesic_distance, is_rotation,
    matrix_to_euler, matrix_to_sixd, matrix_to_sixd_t, quat_to_matrix, random_rotation, sixd_to_matrix,
    sixd_to_matrix_t,
)
from motionstitch.tensor import Tensor, default_dtype

ORDERS = ["".join(p) for p in itertools.permutations("XYZ")]
sixd_vectors = arrays(np.float64, (6,), elements=st.floats(-10, 10))


def test_sixd_is_first_two_columns(rng):
    m = random_rotation(rng)
    np.testing.assert_array_equal(matrix_to_sixd(m), np.concatenate([m[:, 0], m[:, 1]]))


def test_round_trip_batch(rng):
    m = random_rotation(rng, 500)
    back = sixd_to_matrix(matrix_to_sixd(m))
    assert np.abs(back - m).max() < 1e-12


def test_gram_schmidt_hand_example():
    # columns (2, 0, 0) and (1, 3, 0) span the xy-plane -> identity
    np.testing.assert_allclose(sixd_to_matrix([2, 0, 0, 1, 3, 0]), np.eye(3), atol=1e-15)
    # second column pointing down -y gives a 180 degree turn about x
    np.testing.assert_allclose(sixd_to_matrix([1, 0, 0, 0, -5, 0]), np.diag([1.0, -1.0, -1.0]), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(sixd_vectors)
def test_decoded_matrices_are_rotations(r):
    a1, a2 = r[:3], r[3:]
    n1 = np.linalg.norm(a1)
    if n1 < 1e-3 or np.linalg.norm(a2 - (a2 @ a1) / n1**2 * a1) < 1e-3:
        return
    m = sixd_to_matrix(r)
    assert is_rotation(m, 1e-10)
    # first column keeps the direction of the first input column
    np.testing.assert_allclose(m[:, 0], a1 / n1, atol=1e-12)


@pytest.mark.parametrize("r", [np.zeros(6), [1, 0, 0, 2, 0, 0], [0, 0, 0, 1, 0, 0], [1e-10, 0, 0, 0, 1, 0]])
def test_degenerate_inputs_raise(r):
    with pytest.raises(DegenerateRotationError):
        sixd_to_matrix(r)
    with pytest.raises(DegenerateRotationError):
        sixd_to_matrix_t(Tensor(np.asarray(r, dtype=float)))


def test_tensor_decode_matches_numpy_and_gradients(rng):
    r = rng.normal(size=(3, 6))
    w = rng.normal(size=(3, 3, 3))
    with default_dtype(np.float64):
        t = Tensor(r.copy(), requires_grad=True)
        out = sixd_to_matrix_t(t)
        np.testing.assert_allclose(out.data, sixd_to_matrix(r), atol=1e-14)
        (out * w).sum().backward()
        num = numeric_grad(lambda v: float((sixd_to_matrix(v) * w).sum()), r.copy())
        np.testing.assert_allclose(t.grad, num, atol=1e-7)
        np.testing.assert_allclose(matrix_to_sixd_t(out).data, matrix_to_sixd(out.data))


@pytest.mark.parametrize("order", ORDERS)
def test_euler_matches_scipy_intrinsic(order, rng):
    angles = rng.uniform(-180, 180, size=(20, 3))
    ours = euler_to_matrix(angles, order)
    ref = Rotation.from_euler(order, angles, degrees=True).as_matrix()
    np.testing.assert_allclose(ours, ref, atol=1e-12)


@pytest.mark.parametrize("order", ORDERS)
def test_euler_round_trip(order, rng):
    m = random_rotation(rng, 200)
    back = euler_to_matrix(matrix_to_euler(m, order), order)
    np.testing.assert_allclose(back, m, atol=1e-10)


@pytest.mark.parametrize("order", ORDERS)
def test_euler_round_trip_at_gimbal_lock(order):
    angles = np.array([[30.0, 90.0, 10.0], [-70.0, -90.0, 45.0]])
    m = euler_to_matrix(angles, order)
    np.testing.assert_allclose(euler_to_matrix(matrix_to_euler(m, order), order), m, atol=1e-10)


def test_single_axis_rotation_direction():
    # +90 degrees about Z takes x to y
    np.testing.assert_allclose(euler_to_matrix([90, 0, 0], "ZXY") @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_quaternion_matches_scipy(rng):
    q = rng.normal(size=(50, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ref = Rotation.from_quat(np.roll(q, -1, axis=1)).as_matrix()  # scipy stores (x, y, z, w)
    np.testing.assert_allclose(quat_to_matrix(q), ref, atol=1e-12)


def test_quaternion_norm_tolerance():
    np.testing.assert_allclose(quat_to_matrix([1.0005, 0, 0, 0]), np.eye(3))
    with pytest.raises(ValueError):
        quat_to_matrix([2.0, 0, 0, 0])


def test_axis_angle_matches_scipy(rng):
    v = rng.normal(size=(30, 3)) * 2
    np.testing.assert_allclose(axis_angle_to_matrix(v), Rotation.from_rotvec(v).as_matrix(), atol=1e-12)
    np.testing.assert_allclose(axis_angle_to_matrix(np.zeros(3)), np.eye(3))


def test_geodesic_distance(rng):
    a = random_rotation(rng, 10)
    theta = rng.uniform(0, np.pi, 10)
    axis = rng.normal(size=(10, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    b = a @ axis_angle_to_matrix(axis * theta[:, None])
    np.testing.assert_allclose(geodesic_distance(a, b), theta, atol=1e-7)


def test_random_rotations_are_uniform_enough(rng):
    # for Haar-uniform rotations E[trace] = 0 and E[R] = 0
    m = random_rotation(rng, 20000)
    assert is_rotation(m)
    assert abs(np.trace(m, axis1=1, axis2=2).mean()) < 4 * 1.0 / np.sqrt(20000)
    assert np.abs(m.mean(0)).max() < 4 * np.sqrt(1 / 3) / np.sqrt(20000)
