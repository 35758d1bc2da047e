from .ast import (
    SIGNATURES,
    Call,
    Constraint,
    Feature,
    PhaseSpec,
    StopCondition,
    TaskDescription,
    features_of,
    numbers_of,
)
from .bind import FEATURE_KINDS, BoundConstraint, BoundPhase, Scene, bind, compile_expr, eval_expr
from .parser import parse_expr, parse_phase, parse_task
from .serialize import expr_to_text, serialize

__all__ = [
    "SIGNATURES",
    "FEATURE_KINDS",
    "BoundConstraint",
    "BoundPhase",
    "Call",
    "Constraint",
    "Feature",
    "PhaseSpec",
    "Scene",
    "StopCondition",
    "TaskDescription",
    "bind",
    "compile_expr",
    "eval_expr",
    "expr_to_text",
    "features_of",
    "numbers_of",
    "parse_expr",
    "parse_phase",
    "parse_task",
    "serialize",
]
