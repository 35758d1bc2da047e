import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skilltransfer.cloud import PointCloud
from skilltransfer.geometry import Pose, so3_exp
from skilltransfer.sqmodel import (
    Superparaboloid,
    Superquadric,
    grad_implicit,
    implicit_sp,
    implicit_sq,
    model_from_dict,
    model_to_dict,
    refine_rim,
    rim_superellipse,
)

SPHERE = Superquadric(1, 1, 1, 1, 1, Pose.identity())
BOWL = Superparaboloid(0.1, 0.1, 0.08, 1, 1, Pose.identity())


def test_implicit_sq_examples():
    assert implicit_sq(SPHERE, [1, 0, 0]) == pytest.approx(1.0)
    assert implicit_sq(SPHERE, [0, 0, 0]) == 0.0
    assert implicit_sq(Superquadric(1, 2, 3, 1, 1, Pose.identity()), [0, 2, 0]) == pytest.approx(1.0)


def test_implicit_sp_examples():
    assert implicit_sp(BOWL, [0.1, 0, 0.08]) == pytest.approx(0.0, abs=1e-12)
    assert implicit_sp(BOWL, [0, 0, 0]) == 0.0
    # (0.05/0.1)^2 - 0.08/0.08
    assert implicit_sp(BOWL, [0.05, 0, 0.08]) == pytest.approx(-0.75)


def test_gradient_examples():
    g = grad_implicit(SPHERE, [1, 0, 0])
    assert np.allclose(np.cross(g, [1, 0, 0]), 0) and g[0] > 0
    assert np.array_equal(grad_implicit(SPHERE, [0, 0, 0]), np.zeros(3))


def test_parameter_bounds_enforced():
    with pytest.raises(ValueError):
        Superquadric(0, 1, 1, 1, 1, Pose.identity())
    with pytest.raises(ValueError):
        Superquadric(1, 1, 1, 0.05, 1, Pose.identity())
    with pytest.raises(ValueError):
        Superparaboloid(1, 1, 20, 1, 1, Pose.identity())


shape = st.tuples(
    st.floats(0.02, 0.3), st.floats(0.02, 0.3), st.floats(0.02, 0.3), st.floats(0.2, 2.0), st.floats(0.2, 2.0)
)


def _fd_check(model, p, h=1e-6):
    g = grad_implicit(model, p)
    fd = np.array([(model.implicit(p + h * e) - model.implicit(p - h * e)) / (2 * h) for e in np.eye(3)])
    return g, fd


@given(shape, st.integers(0, 2**32 - 1))
def test_sq_gradient_matches_finite_difference(params, seed):
    rng = np.random.default_rng(seed)
    model = Superquadric(*params, Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3) * 0.1))
    # away from the coordinate planes of the model frame, where |.|^(2/eps) is smooth
    q = rng.uniform(0.3, 1.2, size=3) * rng.choice([-1, 1], size=3) * np.array(params[:3])
    g, fd = _fd_check(model, model.pose.apply(q))
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-12) + 1e-7


@given(shape, st.integers(0, 2**32 - 1))
def test_sp_gradient_matches_finite_difference(params, seed):
    rng = np.random.default_rng(seed)
    model = Superparaboloid(*params, Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3) * 0.1))
    q = rng.uniform(0.3, 1.2, size=3) * np.array(params[:3]) * [*rng.choice([-1, 1], size=2), 1]
    g, fd = _fd_check(model, model.pose.apply(q))
    assert np.linalg.norm(g - fd) <= 1e-5 * max(np.linalg.norm(g), 1e-12) + 1e-7


@given(shape, st.integers(0, 2**32 - 1))
def test_implicit_is_pose_invariant(params, seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=(10, 3)) * 0.1
    pose = Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3))
    for cls in (Superquadric, Superparaboloid):
        local = cls(*params, Pose.identity())
        moved = cls(*params, pose)
        assert np.allclose(moved.implicit(pose.apply(q)), local.implicit(q), rtol=1e-9, atol=1e-12)


def test_rim_circle_n4():
    pts = rim_superellipse(BOWL, 4)
    expected = [[0.1, 0, 0.08], [0, 0.1, 0.08], [-0.1, 0, 0.08], [0, -0.1, 0.08]]
    assert np.allclose(pts, expected, atol=1e-15)


def test_rim_elliptical_n8():
    m = Superparaboloid(0.2, 0.1, 0.08, 1, 1, Pose.identity())
    pts = rim_superellipse(m, 8)
    assert np.abs(pts[:, 1]).max() == pytest.approx(0.1)


@given(shape, st.integers(8, 200), st.integers(0, 2**32 - 1))
def test_rim_points_on_surface(params, n, seed):
    rng = np.random.default_rng(seed)
    m = Superparaboloid(*params, Pose(so3_exp(rng.normal(size=3)), rng.normal(size=3)))
    pts = rim_superellipse(m, n)
    assert len(pts) == n
    assert np.abs(implicit_sp(m, pts)).max() < 1e-9
    assert np.allclose(m.pose.apply_inverse(pts)[:, 2], m.a3, atol=1e-12)


def test_rim_rejects_tiny_n():
    with pytest.raises(ValueError):
        rim_superellipse(BOWL, 3)


def _bowl_cloud(a3):
    from skilltransfer.cloud import synth_cloud

    return synth_cloud(Superparaboloid(0.1, 0.1, a3, 1, 1, Pose.identity()), 1500)


def test_refine_rim_recovers_lowered_rim():
    cloud = _bowl_cloud(0.08)
    corrupted = Superparaboloid(0.1, 0.1, 0.072, 1, 1, Pose.identity())
    refined = refine_rim(corrupted, cloud)
    assert refined.a3 == pytest.approx(0.08, rel=0.02)
    assert refined.params[:2] == corrupted.params[:2] and refined.pose == corrupted.pose


def test_refine_rim_fixed_point_and_outlier():
    cloud = _bowl_cloud(0.08)
    p99 = float(np.percentile(cloud.points[:, 2], 99))
    m = Superparaboloid(0.1, 0.1, p99, 1, 1, Pose.identity())
    assert refine_rim(m, cloud).a3 == p99
    tall = PointCloud(np.vstack([cloud.points, [[0, 0, 5.0]]]))
    out = refine_rim(m, tall).a3
    assert out == pytest.approx(float(np.percentile(tall.points[:, 2], 99)))
    assert out < 0.1


def test_refine_rim_clamped_to_half():
    cloud = _bowl_cloud(0.08)
    m = Superparaboloid(0.1, 0.1, 0.5, 1, 1, Pose.identity())
    assert refine_rim(m, cloud).a3 == 0.25


def test_model_dict_roundtrip():
    m = Superparaboloid(0.1, 0.07, 0.05, 0.6, 1.3, Pose(so3_exp([0.1, 0.2, 0.3]), [1, 2, 3]))
    d = model_to_dict(m, 0.001)
    assert d["kind"] == "superparaboloid" and d["rms_residual"] == 0.001
    back = model_from_dict(d)
    assert back.params == m.params
    assert np.allclose(back.pose.rotation, m.pose.rotation, atol=1e-15)
