import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skilltransfer.geometry import Pose, quaternion_to_rotation, rotation_to_quaternion, so3_exp, so3_log

from conftest import random_rotation

vec3 = st.lists(st.floats(-3, 3, allow_nan=False), min_size=3, max_size=3).map(np.array)
small_vec3 = st.lists(st.floats(-2.5, 2.5, allow_nan=False), min_size=3, max_size=3).map(np.array)


def test_so3_exp_quarter_turn():
    R = so3_exp([0, 0, np.pi / 2])
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


@given(small_vec3)
def test_exp_log_roundtrip(w):
    if np.linalg.norm(w) >= np.pi - 1e-3:
        return
    assert np.allclose(so3_log(so3_exp(w)), w, atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_quaternion_roundtrip(seed):
    R = random_rotation(np.random.default_rng(seed))
    q = rotation_to_quaternion(R)
    assert q[0] >= 0
    assert np.isclose(np.linalg.norm(q), 1.0)
    assert np.allclose(quaternion_to_rotation(q), R, atol=1e-12)


def test_pose_rejects_reflection_and_skew():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.eye(3) * 1.001, np.zeros(3))
    with pytest.raises(ValueError):
        Pose(np.eye(3), [np.nan, 0, 0])


@given(st.integers(0, 2**32 - 1), vec3, vec3)
def test_pose_inverse_and_compose(seed, t, p):
    pose = Pose(random_rotation(np.random.default_rng(seed)), t)
    assert np.allclose(pose.apply_inverse(pose.apply(p)), p, atol=1e-12)
    ident = pose.compose(pose.inverse())
    assert np.allclose(ident.rotation, np.eye(3), atol=1e-12)
    assert np.allclose(ident.translation, 0, atol=1e-12)


def test_retract_translates_in_body_frame_then_rotates():
    pose = Pose(so3_exp([0, 0, np.pi / 2]), [1.0, 0.0, 0.0])
    moved = pose.retract([1.0, 0, 0, 0, 0, 0.1])
    # body x is world y for this pose
    assert np.allclose(moved.translation, [1.0, 1.0, 0.0])
    assert np.allclose(moved.rotation, pose.rotation @ so3_exp([0, 0, 0.1]))


def test_pose_dict_roundtrip_and_immutability():
    pose = Pose(so3_exp([0.1, -0.2, 0.3]), [1, 2, 3])
    back = Pose.from_dict(pose.to_dict())
    assert np.allclose(back.rotation, pose.rotation, atol=1e-15)
    assert np.array_equal(back.translation, pose.translation)
    with pytest.raises(ValueError):
        pose.translation[0] = 5.0


def test_long_integration_stays_orthonormal():
    pose = Pose.identity()
    for _ in range(20000):
        pose = pose.retract([0.001, 0, 0, 0.013, -0.007, 0.011])
    R = pose.rotation
    assert np.abs(R.T @ R - np.eye(3)).max() < 1e-9
    assert np.linalg.det(R) > 0
