"""Syntax tree for task and phase descriptions.

Source positions are carried for diagnostics but excluded from equality, so
two trees compare equal when they describe the same program.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

# function name -> (result kind, argument kinds)
SIGNATURES: dict[str, tuple[str, tuple[str, ...]]] = {
    "dist": ("scalar", ("point", "point")),
    "angle": ("scalar", ("direction", "direction")),
    "height": ("scalar", ("point",)),
    "along": ("scalar", ("point", "direction")),
    "offset": ("point", ("point", "direction", "number")),
    "midpoint": ("point", ("point", "point")),
    "toward": ("direction", ("point", "point")),
    "horizontal_toward": ("direction", ("point", "point")),
}

DEFAULT_WEIGHT = 1.0
DEFAULT_MAX_LINEAR_SPEED = 0.1
DEFAULT_MAX_ANGULAR_SPEED = 0.5
DEFAULT_DWELL = 0.2


@dataclass(frozen=True)
class Feature:
    name: str
    line: int = field(default=0, compare=False, repr=False)
    col: int = field(default=0, compare=False, repr=False)

    @property
    def scope(self) -> str:
        return self.name.split(".", 1)[0]


@dataclass(frozen=True)
class Call:
    fn: str
    args: tuple["Expr", ...]
    line: int = field(default=0, compare=False, repr=False)
    col: int = field(default=0, compare=False, repr=False)

    @property
    def kind(self) -> str:
        return SIGNATURES[self.fn][0]


Expr = Union[Feature, Call, float]


@dataclass(frozen=True)
class Constraint:
    expr: Call
    lo: float
    hi: float
    weight: float = DEFAULT_WEIGHT

    @property
    def band(self) -> tuple[float, float]:
        return (self.lo, self.hi)


@dataclass(frozen=True)
class StopCondition:
    velocity_below: float = 0.0
    distance_below: float = 0.0
    dwell: float = DEFAULT_DWELL


@dataclass(frozen=True)
class PhaseSpec:
    name: str
    soft_constraints: tuple[Constraint, ...]
    max_linear_speed: float = DEFAULT_MAX_LINEAR_SPEED
    max_angular_speed: float = DEFAULT_MAX_ANGULAR_SPEED
    stop: StopCondition = StopCondition()


@dataclass(frozen=True)
class TaskDescription:
    name: str
    phases: tuple[str, ...]


def features_of(expr: Expr) -> list[Feature]:
    """Feature references in left-to-right order."""
    if isinstance(expr, Feature):
        return [expr]
    if isinstance(expr, Call):
        out = []
        for a in expr.args:
            out.extend(features_of(a))
        return out
    return []


def numbers_of(expr: Expr) -> list[float]:
    if isinstance(expr, Call):
        out = []
        for a in expr.args:
            out.extend(numbers_of(a))
        return out
    if isinstance(expr, float):
        return [expr]
    return []
