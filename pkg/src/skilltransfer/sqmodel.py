"""Superquadric and superparaboloid shape models.

Both models live in their own local frame and carry a ``pose`` mapping local
coordinates to the world. Everything here is vectorised over (N, 3) arrays.

Superquadric inside-outside function::

    F = (|x/a1|^(2/e2) + |y/a2|^(2/e2))^(e2/e1) + |z/a3|^(2/e1)

Superparaboloid (bowl, bottom at the origin, opening along +z)::

    s = (|x/a1|^(2/e2) + |y/a2|^(2/e2))^(e2/2)
    G = s^(2/e1) - z/a3

with the rim superellipse at z = a3, s = 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cloud import PointCloud
from .geometry import Pose

A_MIN, A_MAX = 1e-4, 10.0
EPS_MIN, EPS_MAX = 0.1, 2.0
SUBGRADIENT_TOL = 1e-12


def _check_params(a1, a2, a3, eps1, eps2):
    for name, v in (("a1", a1), ("a2", a2), ("a3", a3)):
        if not (A_MIN <= v <= A_MAX):
            raise ValueError(f"{name}={v} outside [{A_MIN}, {A_MAX}]")
    for name, v in (("eps1", eps1), ("eps2", eps2)):
        if not (EPS_MIN <= v <= EPS_MAX):
            raise ValueError(f"{name}={v} outside [{EPS_MIN}, {EPS_MAX}]")


def spow(c, e):
    """Signed power ``sign(c) * |c|^e``."""
    return np.sign(c) * np.abs(c) ** e


def _xy_term(q, a1, a2, e2):
    return np.abs(q[..., 0] / a1) ** (2.0 / e2) + np.abs(q[..., 1] / a2) ** (2.0 / e2)


def _xy_grad(q, a1, a2, e1, e2):
    """d/dx, d/dy of (|x/a1|^(2/e2) + |y/a2|^(2/e2))^(e2/e1)."""
    x, y = q[..., 0], q[..., 1]
    S = _xy_term(q, a1, a2, e2)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        outer = (e2 / e1) * S ** (e2 / e1 - 1.0) * (2.0 / e2)
        gx = outer * np.abs(x / a1) ** (2.0 / e2 - 1.0) * np.sign(x) / a1
        gy = outer * np.abs(y / a2) ** (2.0 / e2 - 1.0) * np.sign(y) / a2
    gx = np.where(np.abs(x) < SUBGRADIENT_TOL, 0.0, gx)
    gy = np.where(np.abs(y) < SUBGRADIENT_TOL, 0.0, gy)
    return gx, gy


def sq_local_F(q, a1, a2, a3, e1, e2):
    q = np.asarray(q, dtype=float)
    return _xy_term(q, a1, a2, e2) ** (e2 / e1) + np.abs(q[..., 2] / a3) ** (2.0 / e1)


def sq_local_grad(q, a1, a2, a3, e1, e2):
    q = np.asarray(q, dtype=float)
    gx, gy = _xy_grad(q, a1, a2, e1, e2)
    z = q[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        gz = (2.0 / e1) * np.abs(z / a3) ** (2.0 / e1 - 1.0) * np.sign(z) / a3
    gz = np.where(np.abs(z) < SUBGRADIENT_TOL, 0.0, gz)
    return np.stack([gx, gy, gz], axis=-1)


def sp_local_G(q, a1, a2, a3, e1, e2):
    q = np.asarray(q, dtype=float)
    return _xy_term(q, a1, a2, e2) ** (e2 / e1) - q[..., 2] / a3


def sp_local_grad(q, a1, a2, a3, e1, e2):
    q = np.asarray(q, dtype=float)
    gx, gy = _xy_grad(q, a1, a2, e1, e2)
    gz = np.full_like(gx, -1.0 / a3)
    return np.stack([gx, gy, gz], axis=-1)


def sp_radial(q, a1, a2, e2):
    """Radial superellipse coordinate s; s < 1 means inside the rim outline."""
    return _xy_term(np.asarray(q, dtype=float), a1, a2, e2) ** (e2 / 2.0)


def _grid_select(total: int, n: int) -> np.ndarray:
    # n indices spread evenly over a row-major grid of `total` cells
    return (np.arange(n) * total) // n


@dataclass(frozen=True)
class _ShapeModel:
    a1: float
    a2: float
    a3: float
    eps1: float
    eps2: float
    pose: Pose = field(default_factory=Pose)

    def __post_init__(self):
        for name in ("a1", "a2", "a3", "eps1", "eps2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        _check_params(self.a1, self.a2, self.a3, self.eps1, self.eps2)

    @property
    def params(self) -> tuple[float, float, float, float, float]:
        return (self.a1, self.a2, self.a3, self.eps1, self.eps2)

    def with_pose(self, pose: Pose):
        return replace(self, pose=pose)

    def implicit(self, p) -> np.ndarray:
        return self.local_implicit(self.pose.apply_inverse(p))

    def gradient(self, p) -> np.ndarray:
        """World-frame spatial gradient of the implicit function."""
        return self.pose.rotate(self.local_gradient(self.pose.apply_inverse(p)))


@dataclass(frozen=True)
class Superquadric(_ShapeModel):
    kind = "superquadric"

    def local_implicit(self, q):
        return sq_local_F(q, *self.params)

    def local_gradient(self, q):
        return sq_local_grad(q, *self.params)

    def local_surface_grid(self, n: int) -> np.ndarray:
        n_eta = max(2, int(round(math.sqrt(n / 2.0))))
        n_omega = max(3, math.ceil(n / n_eta))
        eta = -np.pi / 2 + np.pi * (np.arange(n_eta) + 0.5) / n_eta
        omega = -np.pi + 2 * np.pi * np.arange(n_omega) / n_omega
        E, W = np.meshgrid(eta, omega, indexing="ij")
        E, W = E.ravel(), W.ravel()
        sel = _grid_select(E.size, n)
        E, W = E[sel], W[sel]
        ce = spow(np.cos(E), self.eps1)
        x = self.a1 * ce * spow(np.cos(W), self.eps2)
        y = self.a2 * ce * spow(np.sin(W), self.eps2)
        z = self.a3 * spow(np.sin(E), self.eps1)
        return np.column_stack([x, y, z])

    def surface_residual(self, p) -> np.ndarray:
        """F^eps1 - 1, the quantity the fitter drives to zero."""
        return self.implicit(p) ** self.eps1 - 1.0


@dataclass(frozen=True)
class Superparaboloid(_ShapeModel):
    kind = "superparaboloid"

    def local_implicit(self, q):
        return sp_local_G(q, *self.params)

    def local_gradient(self, q):
        return sp_local_grad(q, *self.params)

    def local_surface_grid(self, n: int) -> np.ndarray:
        n_u = max(2, int(round(math.sqrt(n / 4.0))))
        n_theta = max(4, math.ceil(n / n_u))
        u = (np.arange(n_u) + 1.0) / n_u
        theta = 2 * np.pi * np.arange(n_theta) / n_theta
        U, T = np.meshgrid(u, theta, indexing="ij")
        U, T = U.ravel(), T.ravel()
        sel = _grid_select(U.size, n)
        U, T = U[sel], T[sel]
        x = self.a1 * U * spow(np.cos(T), self.eps2)
        y = self.a2 * U * spow(np.sin(T), self.eps2)
        z = self.a3 * U ** (2.0 / self.eps1)
        return np.column_stack([x, y, z])

    def surface_residual(self, p) -> np.ndarray:
        return self.implicit(p)

    def radial(self, p) -> np.ndarray:
        return sp_radial(self.pose.apply_inverse(p), self.a1, self.a2, self.eps2)

    @property
    def top_centre(self) -> np.ndarray:
        return self.pose.apply(np.array([0.0, 0.0, self.a3]))

    @property
    def axis(self) -> np.ndarray:
        return self.pose.rotation[:, 2].copy()


ShapeModel = Superquadric | Superparaboloid


def implicit_sq(model: Superquadric, p) -> np.ndarray | float:
    out = model.implicit(p)
    return float(out) if np.ndim(out) == 0 else out


def implicit_sp(model: Superparaboloid, p) -> np.ndarray | float:
    out = model.implicit(p)
    return float(out) if np.ndim(out) == 0 else out


def grad_implicit(model: ShapeModel, p) -> np.ndarray:
    return model.gradient(p)


def rim_superellipse(model: Superparaboloid, n: int) -> np.ndarray:
    """``n`` world points on the rim, at angles 2*pi*k/n of the superellipse map."""
    if n < 4:
        raise ValueError("rim sampling needs n >= 4")
    theta = 2 * np.pi * np.arange(n) / n
    local = np.column_stack(
        [
            model.a1 * spow(np.cos(theta), model.eps2),
            model.a2 * spow(np.sin(theta), model.eps2),
            np.full(n, model.a3),
        ]
    )
    return model.pose.apply(local)


def refine_rim(model: Superparaboloid, cloud: PointCloud) -> Superparaboloid:
    """Move the rim up (or down) to the 99th percentile of the cloud's local height."""
    z = model.pose.apply_inverse(cloud.points)[:, 2]
    top = float(np.percentile(z, 99))
    a3 = min(max(top, 0.5 * model.a3, A_MIN), A_MAX)
    return replace(model, a3=a3)


def model_to_dict(model: ShapeModel, rms_residual: float | None = None) -> dict:
    d = {
        "kind": model.kind,
        "a1": model.a1,
        "a2": model.a2,
        "a3": model.a3,
        "eps1": model.eps1,
        "eps2": model.eps2,
        "pose": model.pose.to_dict(),
    }
    if rms_residual is not None:
        d["rms_residual"] = float(rms_residual)
    return d


def model_from_dict(d: dict) -> ShapeModel:
    cls = {"superquadric": Superquadric, "superparaboloid": Superparaboloid}.get(d.get("kind"))
    if cls is None:
        raise ValueError(f"unknown model kind {d.get('kind')!r}")
    return cls(d["a1"], d["a2"], d["a3"], d["eps1"], d["eps2"], Pose.from_dict(d["pose"]))
