import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from skilltransfer.errors import BindError, DegenerateDirectionError, DSLError
from skilltransfer.geometry import Pose, so3_exp
from skilltransfer.skilldsl import (
    Scene,
    bind,
    eval_expr,
    parse_phase,
    parse_task,
    serialize,
)
from skilltransfer.skilldsl.parser import parse_expr

from dsl_gen import phase_text, task_text

APPROACH = (
    "phase approach\n"
    "soft dist(tool.heel, offset(target.edge, world.up, 0.20)) in [0, 0.01] weight 1.0\n"
    "stop velocity-below 0.005\n"
    "stop distance-below 0.01\n"
)


def test_parse_task_example():
    t = parse_task("task scrape\nphase orient\nphase approach\n")
    assert t.name == "scrape" and t.phases == ("orient", "approach")


def test_duplicate_phase_names_line_3():
    with pytest.raises(DSLError) as ei:
        parse_task("task scrape\nphase orient\nphase orient\n")
    assert ei.value.line == 3


def test_empty_task_file():
    with pytest.raises(DSLError, match="no task declaration"):
        parse_task("")
    with pytest.raises(DSLError):
        parse_task("task lonely\n")


def test_parse_phase_example_and_defaults():
    p = parse_phase(APPROACH)
    assert p.name == "approach" and len(p.soft_constraints) == 1
    c = p.soft_constraints[0]
    assert (c.lo, c.hi, c.weight) == (0.0, 0.01, 1.0)
    assert (p.stop.velocity_below, p.stop.distance_below, p.stop.dwell) == (0.005, 0.01, 0.2)
    assert (p.max_linear_speed, p.max_angular_speed) == (0.1, 0.5)


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("soft dist(tool.heel) in [0, 1]", "expects 2"),
        ("soft dist(tool.heel, tool.tip) in [0.5, 0.1]", "exceeds"),
        ("soft frob(tool.heel) in [0, 1]", "unknown function"),
        ("stop sometime 1", "unknown stop keyword"),
        ("hard max-linear-speed 0", "> 0"),
        ("soft dist(tool.heel, world.up, 1) in [0, 1]", "expects 2"),
        ("soft offset(tool.tip, world.up, 1) in [0, 1]", "must be dist"),
        ("soft height(0.5) in [0, 1]", "must be a point"),
        ("soft dist(tool.tip, tool.heel) in [0, 1] weight -1", "weight"),
    ],
)
def test_phase_errors_are_located(line, fragment):
    with pytest.raises(DSLError) as ei:
        parse_phase("phase p\n" + line + "\n")
    assert fragment in str(ei.value)
    assert ei.value.line == 2 and ei.value.col >= 1


def test_serialize_emits_defaults():
    text = serialize(parse_phase("phase p\nsoft height(tool.tip) in [0, 1]\n"))
    assert "weight 1.0" in text
    assert "hard max-linear-speed 0.1" in text
    assert "stop dwell 0.2" in text


def test_roundtrip_approach():
    p = parse_phase(APPROACH)
    assert parse_phase(serialize(p)) == p


@given(phase_text())
def test_phase_roundtrip(text):
    ast = parse_phase(text)
    again = serialize(ast)
    assert parse_phase(again) == ast
    assert serialize(parse_phase(again)) == again


@given(task_text())
def test_task_roundtrip(text):
    ast = parse_task(text)
    assert parse_task(serialize(ast)) == ast


@given(st.binary(max_size=300))
def test_arbitrary_bytes_parse_or_locate(data):
    for parse in (parse_task, parse_phase):
        try:
            parse(data)
        except DSLError as exc:
            assert exc.line >= 1 and exc.col >= 1


@given(st.text(alphabet="phasetoftd() ,.[]#0123456789-_\nineaglw", max_size=200))
def test_grammar_like_text_never_crashes(text):
    for parse in (parse_task, parse_phase):
        try:
            parse(text)
        except DSLError as exc:
            assert exc.line >= 1 and exc.col >= 1


def test_deep_nesting_is_diagnosed():
    inner = "tool.tip"
    for _ in range(200):
        inner = f"midpoint({inner}, tool.tip)"
    with pytest.raises(DSLError):
        parse_phase(f"phase p\nsoft height({inner}) in [0, 1]\n")


# --- binding and evaluation


def _scene(**extra):
    feats = {
        "tool.tip": np.array([0.3, 0.0, 0.0]),
        "tool.heel": np.array([0.1, 0.0, 0.0]),
        "tool.grasp": np.zeros(3),
        "tool.major_axis": np.array([1.0, 0.0, 0.0]),
        "tool.action_normal": np.array([0.0, 0.0, 1.0]),
        "target.edge": np.array([1.0, 0.0, 0.5]),
        "target.top_centre": np.array([0.0, 0.0, 0.5]),
        "target.rim_normal": np.array([0.0, 0.0, 1.0]),
        "world.table_height": 0.0,
    }
    feats.update(extra)
    return Scene(feats)


def test_eval_examples():
    s = _scene(**{"target.a": np.zeros(3), "target.b": np.array([3.0, 4.0, 0.0])})
    assert eval_expr(parse_expr("dist(target.a, target.b)"), s) == 5.0
    s = _scene(**{"target.u": np.array([0, 0, 1.0]), "target.v": np.array([1.0, 0, 0]), "target.w": np.array([0, 1.0, 0])})
    assert eval_expr(parse_expr("angle(target.u, target.u)"), s) == 0.0
    assert eval_expr(parse_expr("angle(target.v, target.w)"), s) == pytest.approx(math.pi / 2)
    assert eval_expr(parse_expr("height(offset(target.edge, world.up, 0.2))"), s) == pytest.approx(0.7)
    assert eval_expr(parse_expr("along(target.edge, target.v)"), s) == 1.0
    mid = "height(midpoint(target.edge, target.top_centre))"
    assert eval_expr(parse_expr(mid), s) == 0.5


def test_toward_coincident_points():
    with pytest.raises(DegenerateDirectionError):
        eval_expr(parse_expr("angle(toward(target.edge, target.edge), world.up)"), _scene())
    # vertical separation only: horizontal direction is degenerate too
    with pytest.raises(DegenerateDirectionError):
        eval_expr(parse_expr("angle(horizontal_toward(target.top_centre, offset(target.top_centre, world.up, 1.0)), world.up)"), _scene())


def test_bind_reports_missing_names():
    p = parse_phase("phase p\nsoft dist(tool.blade, target.edge) in [0, 0]\nsoft height(target.nowhere) in [0, 1]\n")
    with pytest.raises(BindError) as ei:
        bind(p, _scene())
    assert "tool.blade" in str(ei.value) and "target.nowhere" in str(ei.value)


def test_bound_constraints_follow_the_pose():
    p = parse_phase("phase p\nsoft dist(tool.tip, target.edge) in [0, 0]\n")
    c = bind(p, _scene()).constraints[0]
    assert c.value(Pose.identity()) == pytest.approx(np.linalg.norm([0.7, 0, 0.5]))
    moved = Pose(np.eye(3), [0.7, 0.0, 0.5])
    assert c.value(moved) == pytest.approx(0.0, abs=1e-15)
    rotated = Pose(so3_exp([0, 0, np.pi]), [1.3, 0.0, 0.5])
    assert c.value(rotated) == pytest.approx(0.0, abs=1e-12)


def test_constant_binding_is_idempotent():
    p = parse_phase("phase p\nsoft height(offset(target.edge, world.up, 0.2)) in [0, 1]\n")
    s = _scene()
    a = bind(p, s).constraints[0]
    b = bind(p, s).constraints[0]
    for pose in (Pose.identity(), Pose(so3_exp([1, 2, 3]), [4, 5, 6])):
        assert a.value(pose) == b.value(pose) == pytest.approx(0.7)


def test_scene_rejects_other_up():
    with pytest.raises(ValueError):
        Scene({"world.up": np.array([0, 1.0, 0])})


unit = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3)


@given(unit, unit)
def test_angle_is_symmetric(u, v):
    s = _scene(**{"target.u": np.array(u), "target.v": np.array(v)})
    a = eval_expr(parse_expr("angle(target.u, target.v)"), s)
    b = eval_expr(parse_expr("angle(target.v, target.u)"), s)
    assert a == b
    assert 0.0 <= a <= math.pi
