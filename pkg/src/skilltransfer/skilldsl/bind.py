"""Grounding of phase descriptions in perceived features.

Binding compiles each constraint expression into a closure of the tool pose.
``tool.*`` features are stored in the tool body frame and re-expressed in the
world on every call; ``target.*`` and ``world.*`` features are constants, and
any subtree built only from constants is folded at bind time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import BindError, DegenerateDirectionError
from ..geometry import Pose
from .ast import Call, Constraint, Feature, PhaseSpec, features_of

WORLD_UP = np.array([0.0, 0.0, 1.0])

# kinds of the standard feature names; a Scene may declare more
FEATURE_KINDS = {
    "tool.tip": "point",
    "tool.heel": "point",
    "tool.grasp": "point",
    "tool.blade": "point",
    "tool.centroid": "point",
    "tool.major_axis": "direction",
    "tool.action_normal": "direction",
    "target.edge": "point",
    "target.top_centre": "point",
    "target.rim_normal": "direction",
    "world.up": "direction",
    "world.table_height": "scalar",
}


@dataclass
class Scene:
    features: dict[str, object]
    tool_pose: Pose = field(default_factory=Pose.identity)
    kinds: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        feats = dict(self.features)
        feats.setdefault("world.up", WORLD_UP.copy())
        if not np.array_equal(np.asarray(feats["world.up"], dtype=float), WORLD_UP):
            raise ValueError("world.up must be (0, 0, 1)")
        self.features = feats

    def kind(self, name: str) -> str | None:
        if name in self.kinds:
            return self.kinds[name]
        return FEATURE_KINDS.get(name)


@dataclass(frozen=True)
class BoundConstraint:
    source: Constraint
    fn: Callable[[Pose], float]

    @property
    def lo(self) -> float:
        return self.source.lo

    @property
    def hi(self) -> float:
        return self.source.hi

    @property
    def weight(self) -> float:
        return self.source.weight

    def value(self, pose: Pose) -> float:
        return self.fn(pose)


@dataclass(frozen=True)
class BoundPhase:
    spec: PhaseSpec
    constraints: tuple[BoundConstraint, ...]

    @property
    def name(self) -> str:
        return self.spec.name


def _unit(v: np.ndarray, what: str) -> np.ndarray:
    n = math.sqrt(float(v @ v))
    if n < 1e-9:
        raise DegenerateDirectionError(f"{what}: points coincide (norm {n:.3g} < 1e-9)")
    return v / n


def _direction_between(p, q, horizontal: bool) -> np.ndarray:
    d = np.array(q, dtype=float) - p
    if horizontal:
        d[2] = 0.0
    return _unit(d, "horizontal_toward" if horizontal else "toward")


def _angle(u, v) -> float:
    u = _unit(u, "angle")
    v = _unit(v, "angle")
    c = u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
    return math.acos(min(1.0, max(-1.0, c)))


def _apply(fn: str, args: list):
    if fn == "dist":
        d = args[0] - args[1]
        return math.sqrt(float(d @ d))
    if fn == "angle":
        return _angle(args[0], args[1])
    if fn == "height":
        return float(args[0][2])
    if fn == "along":
        d = _unit(np.asarray(args[1], dtype=float), "along")
        return float(args[0] @ d)
    if fn == "offset":
        return args[0] + args[2] * _unit(np.asarray(args[1], dtype=float), "offset")
    if fn == "midpoint":
        return 0.5 * (args[0] + args[1])
    if fn == "toward":
        return _direction_between(args[0], args[1], horizontal=False)
    if fn == "horizontal_toward":
        return _direction_between(args[0], args[1], horizontal=True)
    raise ValueError(f"unknown function {fn}")


def _compile(expr, scene: Scene, want: str | None):
    """Returns (is_constant, value_or_closure)."""
    if isinstance(expr, float):
        return True, expr
    if isinstance(expr, Feature):
        kind = scene.kind(expr.name)
        if want is not None and kind is not None and kind != want:
            raise BindError([expr.name], f"feature is a {kind}, expected a {want}")
        value = np.array(scene.features[expr.name], dtype=float)
        if kind == "direction":
            value = _unit(value, expr.name)
        if expr.scope != "tool":
            return True, value
        if kind == "direction":
            return False, lambda pose, d=value: pose.rotation @ d
        return False, lambda pose, p=value: pose.rotation @ p + pose.translation

    _, kinds = _signature(expr.fn)
    parts = [_compile(a, scene, k if k != "number" else None) for a, k in zip(expr.args, kinds)]
    if all(c for c, _ in parts):
        return True, _apply(expr.fn, [v for _, v in parts])
    fns = [(v if not c else (lambda pose, v=v: v)) for c, v in parts]
    fn = expr.fn
    return False, lambda pose: _apply(fn, [f(pose) for f in fns])


def _signature(fn: str):
    from .ast import SIGNATURES

    return SIGNATURES[fn]


def compile_expr(expr: Call, scene: Scene) -> Callable[[Pose], float]:
    missing = []
    for f in features_of(expr):
        if f.name not in scene.features and f.name not in missing:
            missing.append(f.name)
    if missing:
        raise BindError(missing)
    const, v = _compile(expr, scene, None)
    if const:
        value = float(v)
        return lambda pose: value
    return lambda pose: float(v(pose))


def bind(phase: PhaseSpec, scene: Scene) -> BoundPhase:
    """Resolve every feature of ``phase`` against ``scene``; reports all missing names at once."""
    missing = []
    for c in phase.soft_constraints:
        for f in features_of(c.expr):
            if f.name not in scene.features and f.name not in missing:
                missing.append(f.name)
    if missing:
        raise BindError(missing)
    return BoundPhase(phase, tuple(BoundConstraint(c, compile_expr(c.expr, scene)) for c in phase.soft_constraints))


def eval_expr(expr: Call, scene: Scene, tool_pose: Pose | None = None) -> float:
    return compile_expr(expr, scene)(scene.tool_pose if tool_pose is None else tool_pose)
