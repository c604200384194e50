from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from motionstitch.bvh import BVHParseError, parse_bvh, read_bvh, sequence_to_bvh, serialize_bvh, write_bvh
from motionstitch.kinematics import forward_kinematics
from motionstitch.synthetic import synthetic_motion

FIXTURES = sorted((Path(__file__).parent / "fixtures" / "bvh").glob("*.bvh"))


def motion_close(a, b, tol=1e-6):
    assert a.skeleton.names == b.skeleton.names
    np.testing.assert_array_equal(a.skeleton.parent, b.skeleton.parent)
    np.testing.assert_allclose(a.skeleton.rest_offsets, b.skeleton.rest_offsets, atol=tol)
    np.testing.assert_allclose(a.root_positions, b.root_positions, atol=tol)
    np.testing.assert_allclose(a.rotations, b.rotations, atol=tol)
    assert a.channels == b.channels
    assert a.fps == pytest.approx(b.fps, rel=1e-9)
    assert sorted(a.end_sites) == sorted(b.end_sites)


def test_fixture_corpus_size():
    assert len(FIXTURES) >= 5


@pytest.mark.parametrize("path", FIXTURES, ids=lambda p: p.stem)
def test_round_trip(path):
    first = read_bvh(path)
    text = serialize_bvh(first)
    second = parse_bvh(text)
    motion_close(first, second)
    # a second pass reproduces the text exactly
    assert serialize_bvh(second) == text


def test_branching_fixture_hand_values():
    m = read_bvh(FIXTURES[[p.stem for p in FIXTURES].index("branching_xyz")])
    assert m.skeleton.names == ["root", "left", "right", "up"]
    assert m.fps == 120.0
    pos = forward_kinematics(m.skeleton, m.rotations, m.root_positions)
    np.testing.assert_allclose(pos[0], [[1, 2, 3], [6, 2, 3], [-4, 2, 3], [1, 8, 3]], atol=1e-12)
    # frame 1: root at OFFSET + channels, rotated intrinsically X then Y then Z
    R = Rotation.from_euler("XYZ", [10, 20, 30], degrees=True).as_matrix()
    np.testing.assert_allclose(pos[1, 0], [2, 4, 6], atol=1e-12)
    np.testing.assert_allclose(pos[1, 1], [2, 4, 6] + R @ [5, 0, 0], atol=1e-12)
    np.testing.assert_allclose(m.rotations[1, 3], Rotation.from_euler("XYZ", [7, 8, 9], degrees=True).as_matrix())


def test_mixed_orders_are_respected():
    m = read_bvh(FIXTURES[[p.stem for p in FIXTURES].index("mixed_orders")])
    assert m.channels[1] == ["Yrotation", "Zrotation", "Xrotation"]
    np.testing.assert_allclose(m.rotations[0, 1], Rotation.from_euler("YZX", [1, 2, 3], degrees=True).as_matrix())
    np.testing.assert_allclose(m.rotations[0, 0], Rotation.from_euler("ZYX", [5, -10, 15], degrees=True).as_matrix())
    np.testing.assert_allclose(m.root_positions[1], [0.2, 0.95, -0.1])


def test_channelless_joints_stay_identity():
    m = read_bvh(FIXTURES[[p.stem for p in FIXTURES].index("channelless_joints")])
    assert m.channels[1] == [] and m.channels[3] == []
    np.testing.assert_array_equal(m.rotations[:, 1], np.broadcast_to(np.eye(3), (3, 3, 3)))
    np.testing.assert_array_equal(m.root_positions, 0.0)


def test_scale_converts_units():
    path = FIXTURES[[p.stem for p in FIXTURES].index("chain_zxy")]
    cm, m = read_bvh(path), read_bvh(path, 0.01)
    np.testing.assert_allclose(m.skeleton.rest_offsets, cm.skeleton.rest_offsets * 0.01)
    np.testing.assert_allclose(m.root_positions, cm.root_positions * 0.01)
    np.testing.assert_allclose(parse_bvh(serialize_bvh(m, 0.01), 0.01).root_positions, m.root_positions, atol=1e-10)


def test_sequence_export_round_trip(tmp_path):
    seq = synthetic_motion(20, 15.0, rng=3)
    write_bvh(tmp_path / "a.bvh", sequence_to_bvh(seq), 0.01)
    back = read_bvh(tmp_path / "a.bvh", 0.01).to_sequence()
    assert back.fps == 15.0
    # BVH nests joints depth-first, so the joint order may change; match by name
    perm = [back.skeleton.names.index(n) for n in seq.skeleton.names]
    np.testing.assert_allclose(back.joint_positions()[:, perm], seq.joint_positions(), atol=1e-6)


BASE = """HIERARCHY
ROOT a
{
  OFFSET 0 0 0
  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation
  JOINT b
  {
    OFFSET 0 1 0
    CHANNELS 3 Zrotation Xrotation Yrotation
    End Site
    {
      OFFSET 0 1 0
    }
  }
}
MOTION
Frames: 2
Frame Time: 0.1
0 0 0 0 0 0 0 0 0
1 1 1 1 1 1 1 1 1
"""


@pytest.mark.parametrize(
    "edit,line",
    [
        (lambda s: s.replace("1 1 1 1 1 1 1 1 1", "1 1 1 1 1 1 1 1"), 20),
        (lambda s: s.replace("Frames: 2", "Frames: 3"), 20),
        (lambda s: s.replace("1 1 1 1 1 1 1 1 1", "1 1 1 1 x 1 1 1 1"), 20),
        (lambda s: s.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Xposition Xrotation Yrotation"), 9),
        (lambda s: s.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 2 Zrotation Xrotation"), 9),
        (lambda s: s.replace("CHANNELS 3 Zrotation Xrotation Yrotation", "CHANNELS 3 Zrotation Zrotation Yrotation"), 9),
        (lambda s: s.replace("Zrotation Xrotation Yrotation\n    End", "Zrotation Xrotation Wrotation\n    End"), 9),
        (lambda s: s.replace("Frame Time: 0.1", "Frame Time: 0"), 18),
        (lambda s: s.replace("OFFSET 0 1 0\n    CHANNELS", "OFFSET 0 one 0\n    CHANNELS"), 8),
    ],
)
def test_malformed_input_reports_line(edit, line):
    with pytest.raises(BVHParseError) as err:
        parse_bvh(edit(BASE))
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_missing_sections():
    with pytest.raises(BVHParseError):
        parse_bvh(BASE.split("MOTION")[0])
    with pytest.raises(BVHParseError):
        parse_bvh(BASE.replace("HIERARCHY", "HIERARCH"))
    with pytest.raises(BVHParseError):
        parse_bvh(BASE.replace("  }\n}\nMOTION", "  }\nMOTION"))


def test_base_parses():
    m = parse_bvh(BASE)
    assert m.num_frames == 2 and m.fps == 10.0
