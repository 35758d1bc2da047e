"""Canonical text form. Defaults are always written out; floats use ``repr`` so they round-trip."""

from __future__ import annotations

from .ast import Call, Constraint, Feature, PhaseSpec, TaskDescription


def _num(v: float) -> str:
    return repr(float(v))


def expr_to_text(expr) -> str:
    if isinstance(expr, Feature):
        return expr.name
    if isinstance(expr, Call):
        return f"{expr.fn}({', '.join(expr_to_text(a) for a in expr.args)})"
    return _num(expr)


def constraint_to_text(c: Constraint) -> str:
    return f"soft {expr_to_text(c.expr)} in [{_num(c.lo)}, {_num(c.hi)}] weight {_num(c.weight)}"


def serialize(node: TaskDescription | PhaseSpec) -> str:
    if isinstance(node, TaskDescription):
        lines = [f"task {node.name}"] + [f"phase {p}" for p in node.phases]
    elif isinstance(node, PhaseSpec):
        lines = [f"phase {node.name}"]
        lines += [constraint_to_text(c) for c in node.soft_constraints]
        lines += [
            f"hard max-linear-speed {_num(node.max_linear_speed)}",
            f"hard max-angular-speed {_num(node.max_angular_speed)}",
            f"stop velocity-below {_num(node.stop.velocity_below)}",
            f"stop distance-below {_num(node.stop.distance_below)}",
            f"stop dwell {_num(node.stop.dwell)}",
        ]
    else:
        raise TypeError(f"cannot serialize {type(node).__name__}")
    return "\n".join(lines) + "\n"
