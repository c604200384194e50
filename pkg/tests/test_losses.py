import numpy as np
import pytest

from conftest import numeric_grad
from motionstitch.data import encode_frames
from motionstitch.losses import (
    COMPONENTS, context_loss, joint_positions_t, model_loss, position_velocity_loss, reconstruction_loss,
    rotation_velocity_loss, total_loss,
)
from motionstitch.kinematics import forward_kinematics
from motionstitch.rotation import random_rotation
from motionstitch.synthetic import random_skeleton
from motionstitch.tensor import Tensor, default_dtype


@pytest.fixture
def setup(rng):
    sk = random_skeleton(3, rng)
    B = 5
    x0 = encode_frames(rng.normal(size=(2, B, 3)), random_rotation(rng, (2, B, 3)))
    return sk, x0


def test_joint_positions_match_numpy_fk(setup, rng):
    sk, x0 = setup
    from motionstitch.data import decode_frames

    root, rot = decode_frames(x0)
    with default_dtype(np.float64):
        np.testing.assert_allclose(joint_positions_t(Tensor(x0), sk).data, forward_kinematics(sk, rot, root), atol=1e-12)


def test_zero_error_gives_near_zero_losses(setup, f64):
    sk, x0 = setup
    b = total_loss(x0, x0, [0, 2], sk)
    for v in b.as_floats().values():
        assert 0 <= v < 1e-5


def test_root_shift_closed_forms(setup, f64):
    sk, x0 = setup
    d = 0.3
    shifted = x0.copy()
    shifted[..., 0] += d  # every joint moves by d along x
    assert model_loss(shifted, x0).data == pytest.approx(np.sqrt(d * d / x0.shape[-1]), rel=1e-9)
    assert reconstruction_loss(shifted, x0, sk).data == pytest.approx(d / np.sqrt(3), rel=1e-9)
    assert context_loss(shifted, x0, [1, 3], sk).data == pytest.approx(d / np.sqrt(3), rel=1e-9)
    # a constant offset has no velocity
    assert rotation_velocity_loss(shifted, x0).data < 1e-5
    assert position_velocity_loss(shifted, x0, sk).data < 1e-5


def test_context_loss_ignores_other_frames(setup, f64):
    sk, x0 = setup
    y = x0.copy()
    y[:, [1, 2, 4], :3] += 5.0
    assert context_loss(y, x0, [0, 3], sk).data < 1e-5
    assert context_loss(y, x0, [0, 1], sk).data > 1.0


def test_context_loss_per_sample_indices(setup, f64):
    sk, x0 = setup
    y = x0.copy()
    y[0, 1, 0] += 0.6  # sample 0, frame 1
    per = context_loss(y, x0, [np.array([1]), np.array([0, 2])], sk).data
    assert per == pytest.approx(0.5 * 0.6 / np.sqrt(3), abs=1e-6)  # the zero-error sample contributes sqrt(eps)


def test_batch_mean_of_per_sample_rms(setup, f64):
    sk, x0 = setup
    y = x0.copy()
    y[0, ..., 0] += 0.3
    y[1, ..., 0] += 0.9
    expected = 0.5 * (0.3 + 0.9) / np.sqrt(x0.shape[-1])
    assert model_loss(y, x0).data == pytest.approx(expected, rel=1e-9)


def test_velocity_hand_example(f64):
    # single frame-to-frame jump of 1 in one feature out of F
    x0 = np.zeros((1, 3, 9))
    y = x0.copy()
    y[0, 2, 0] = 1.0
    # velocity diff is nonzero in 1 of 2 * 9 entries
    assert rotation_velocity_loss(y, x0).data == pytest.approx(np.sqrt(1 / 18), rel=1e-9)


def test_total_is_sum_and_weights(setup, rng, f64):
    sk, x0 = setup
    y = x0 + rng.normal(scale=0.1, size=x0.shape)
    b = total_loss(y, x0, [0, 4], sk).as_floats()
    assert b["total"] == pytest.approx(sum(b[k] for k in COMPONENTS), rel=1e-12)
    assert b["l_g"] == pytest.approx(float(model_loss(y, x0).data))
    assert b["l_r"] == pytest.approx(float(reconstruction_loss(y, x0, sk).data))
    assert b["l_c"] == pytest.approx(float(context_loss(y, x0, [0, 4], sk).data))
    assert b["l_r_vel"] == pytest.approx(float(rotation_velocity_loss(y, x0).data))
    assert b["l_p_vel"] == pytest.approx(float(position_velocity_loss(y, x0, sk).data))
    w = total_loss(y, x0, [0, 4], sk, {"l_g": 2.0, "l_c": 0.0}).as_floats()
    assert w["total"] == pytest.approx(b["total"] + b["l_g"] - b["l_c"], rel=1e-12)


def test_total_loss_gradient(setup, rng, f64):
    sk, x0 = setup
    y = x0 + rng.normal(scale=0.1, size=x0.shape)
    t = Tensor(y.copy(), requires_grad=True)
    total_loss(t, x0, [[1], [0, 3]], sk).total.backward()
    num = numeric_grad(lambda v: float(total_loss(v, x0, [[1], [0, 3]], sk).total.data), y.copy())
    np.testing.assert_allclose(t.grad, num, rtol=1e-5, atol=1e-7)


def test_errors(setup):
    sk, x0 = setup
    with pytest.raises(ValueError):
        model_loss(x0[:, :4], x0)
    with pytest.raises(ValueError):
        context_loss(x0, x0, [], sk)
    with pytest.raises(ValueError):
        rotation_velocity_loss(x0[:, :1], x0[:, :1])
    with pytest.raises(ValueError):
        reconstruction_loss(x0[..., :9], x0[..., :9], sk)


def test_single_sequence_input(setup, f64):
    sk, x0 = setup
    assert total_loss(x0[0] + 0.1, x0[0], [0], sk).total.data > 0
