"""Band controller: bound soft constraints + hard speed limits -> body twist.

Each tick solves the damped weighted least-squares problem

    min_xi  sum_i w_i (J_i xi - ydot_i)^2 + lambda |xi|^2

in closed form, where ``ydot_i`` is a clamped proportional pull back into
constraint i's band, then scales the result uniformly so neither speed limit
is exceeded.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import SolverError
from .geometry import Pose
from .skilldsl.ast import StopCondition
from .skilldsl.bind import BoundConstraint


@dataclass(frozen=True)
class Twist:
    """Body-frame velocity of the tool: linear (m/s) then angular (rad/s)."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float).reshape(3)
        ang = np.array(self.angular, dtype=float).reshape(3)
        if not (np.all(np.isfinite(lin)) and np.all(np.isfinite(ang))):
            raise ValueError("twist has non-finite components")
        lin.setflags(write=False)
        ang.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "angular", ang)

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_vector(cls, xi) -> "Twist":
        xi = np.asarray(xi, dtype=float)
        return cls(xi[:3], xi[3:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.linear, self.angular])

    @property
    def linear_speed(self) -> float:
        return float(np.linalg.norm(self.linear))

    @property
    def angular_speed(self) -> float:
        return float(np.linalg.norm(self.angular))


@dataclass(frozen=True)
class ControllerConfig:
    k_p: float = 2.0
    ydot_max: float = 0.25
    lam: float = 1e-6
    fd_step: float = 1e-6

    def __post_init__(self):
        if not self.k_p > 0:
            raise ValueError("k_p must be > 0")
        if not self.ydot_max > 0:
            raise ValueError("ydot_max must be > 0")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not 0 < self.fd_step <= 1e-3:
            raise ValueError("fd_step must lie in (0, 1e-3]")

    def to_dict(self) -> dict:
        return {"k_p": self.k_p, "ydot_max": self.ydot_max, "lambda": self.lam, "fd_step": self.fd_step}

    @classmethod
    def from_dict(cls, d: dict) -> "ControllerConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


def constraint_values(constraints: Sequence[BoundConstraint], pose: Pose) -> np.ndarray:
    return np.array([c.value(pose) for c in constraints], dtype=float)


def band_error(y: np.ndarray, constraints: Sequence[BoundConstraint]) -> np.ndarray:
    lo = np.array([c.lo for c in constraints], dtype=float)
    hi = np.array([c.hi for c in constraints], dtype=float)
    return np.clip(y, lo, hi) - y


def constraint_error(constraints: Sequence[BoundConstraint], pose: Pose) -> np.ndarray:
    """``clamp(y, lo, hi) - y`` per constraint; zero exactly when inside the band."""
    if not constraints:
        return np.zeros(0)
    return band_error(constraint_values(constraints, pose), constraints)


def jacobian(constraints: Sequence[BoundConstraint], pose: Pose, fd_step: float = 1e-6) -> np.ndarray:
    """Central differences of each constraint value w.r.t. the six body-twist coordinates."""
    J = np.zeros((len(constraints), 6))
    if not constraints:
        return J
    for k in range(6):
        d = np.zeros(6)
        d[k] = fd_step
        yp = constraint_values(constraints, pose.retract(d))
        ym = constraint_values(constraints, pose.retract(-d))
        J[:, k] = (yp - ym) / (2.0 * fd_step)
    return J


def solve_wls(J: np.ndarray, w: np.ndarray, ydot: np.ndarray, lam: float) -> np.ndarray:
    A = J.T @ (w[:, None] * J) + lam * np.eye(6)
    b = J.T @ (w * ydot)
    if lam == 0.0 and np.linalg.matrix_rank(A) < 6:
        raise SolverError("normal matrix is singular; use lambda > 0")
    try:
        return np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SolverError(str(exc)) from exc


def scale_to_bounds(xi: np.ndarray, max_linear_speed: float, max_angular_speed: float) -> np.ndarray:
    s = 1.0
    vl = float(np.linalg.norm(xi[:3]))
    va = float(np.linalg.norm(xi[3:]))
    if vl > max_linear_speed:
        s = min(s, max_linear_speed / vl)
    if va > max_angular_speed:
        s = min(s, max_angular_speed / va)
    out = s * xi
    # rounding in s*xi can overshoot the bound by an ulp
    for sl, bound in ((slice(0, 3), max_linear_speed), (slice(3, 6), max_angular_speed)):
        n = float(np.linalg.norm(out[sl]))
        if n > bound:
            out[sl] *= bound / n * (1.0 - 1e-15)
    return out


def tick_detail(
    constraints: Sequence[BoundConstraint],
    pose: Pose,
    cfg: ControllerConfig,
    max_linear_speed: float,
    max_angular_speed: float,
) -> tuple[Twist, np.ndarray, np.ndarray]:
    """Like :func:`tick`, also returning the constraint values and band errors at ``pose``."""
    if not constraints:
        return Twist.zero(), np.zeros(0), np.zeros(0)
    y = constraint_values(constraints, pose)
    e = band_error(y, constraints)
    if not np.any(e):
        return Twist.zero(), y, e
    ydot = np.clip(cfg.k_p * e, -cfg.ydot_max, cfg.ydot_max)
    w = np.array([c.weight for c in constraints], dtype=float)
    J = jacobian(constraints, pose, cfg.fd_step)
    xi = solve_wls(J, w, ydot, cfg.lam)
    xi = scale_to_bounds(xi, max_linear_speed, max_angular_speed)
    return Twist.from_vector(xi), y, e


def tick(
    constraints: Sequence[BoundConstraint],
    pose: Pose,
    cfg: ControllerConfig = ControllerConfig(),
    hard_bounds: tuple[float, float] = (0.1, 0.5),
) -> Twist:
    return tick_detail(constraints, pose, cfg, *hard_bounds)[0]


def stop_check(elapsed: float, speed: float, max_violation: float, stop: StopCondition) -> bool:
    if elapsed < stop.dwell:
        return False
    return speed < stop.velocity_below or max_violation < stop.distance_below
