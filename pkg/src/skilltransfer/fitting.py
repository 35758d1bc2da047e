"""Multi-start Levenberg-Marquardt recovery of superquadrics and superparaboloids.

Parameters are the five shape values plus the pose. Pose updates are taken
as a world translation and a body-frame rotation vector; the pose columns of
the Jacobian come from the analytic spatial gradient, the shape columns from
central differences.

Restart k starts from one of three axis assignments of the PCA frame
(k mod 3); restarts k >= 3 additionally perturb that start with noise drawn
from ``default_rng([seed, k])``, so every restart is independent of the
others and of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import MIN_FIT_POINTS, PointCloud, pca_frame
from .errors import CloudSizeError, FitFailure
from .geometry import Pose, orthonormalize, so3_exp
from .sqmodel import (
    A_MAX,
    A_MIN,
    EPS_MAX,
    EPS_MIN,
    Superparaboloid,
    Superquadric,
    sp_local_G,
    sp_local_grad,
    sq_local_F,
    sq_local_grad,
)

LO = np.array([A_MIN] * 3 + [EPS_MIN] * 2)
HI = np.array([A_MAX] * 3 + [EPS_MAX] * 2)

# cyclic relabelings of the PCA axes (right-handed)
_PERMUTATIONS = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


@dataclass(frozen=True)
class LMConfig:
    lambda0: float = 1e-3
    lambda_up: float = 10.0
    lambda_down: float = 10.0
    lambda_max: float = 1e12
    max_iterations: int = 200
    rel_tol: float = 1e-9
    # superparaboloid: weight of the rim-height anchor relative to the data term
    rim_anchor_weight: float = 1.0
    rim_percentile: float = 95.0


@dataclass(frozen=True)
class FitResult:
    model: Superquadric | Superparaboloid
    rms_residual: float
    restarts_used: int
    seed: int
    cost: float = 0.0
    restart_index: int = 0


@dataclass
class _State:
    shape: np.ndarray  # a1, a2, a3, e1, e2
    R: np.ndarray
    t: np.ndarray

    def local(self, pts: np.ndarray) -> np.ndarray:
        return (pts - self.t) @ self.R


class _Problem:
    """Residuals and Jacobian for one model family over a fixed cloud."""

    def __init__(self, pts: np.ndarray, kind: str, cfg: LMConfig):
        self.pts = pts
        self.kind = kind
        self.cfg = cfg
        self.n = pts.shape[0]

    # raw per-point residual (without volume weight) and its spatial gradient
    def _surface(self, q, s):
        if self.kind == "sq":
            F = sq_local_F(q, *s)
            return F ** s[3] - 1.0
        return sp_local_G(q, *s)

    def _surface_grad(self, q, s):
        if self.kind == "sq":
            F = np.maximum(sq_local_F(q, *s), 1e-300)
            scale = s[3] * F ** (s[3] - 1.0)
            return sq_local_grad(q, *s) * scale[:, None]
        return sp_local_grad(q, *s)

    def _top(self, z):
        """Linear-interpolated percentile of local heights: (value, (i, j), frac)."""
        pos = self.cfg.rim_percentile / 100.0 * (self.n - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, self.n - 1)
        frac = pos - lo
        part = np.argpartition(z, (lo, hi))
        i, j = part[lo], part[hi]
        return (1 - frac) * z[i] + frac * z[j], (i, j), frac

    def _anchor(self, q, s):
        zt = self._top(q[:, 2])[0]
        return (s[2] - zt) / s[2]

    def residuals(self, st: _State) -> np.ndarray:
        s = st.shape
        q = st.local(self.pts)
        w = np.sqrt(s[0] * s[1] * s[2])
        with np.errstate(all="ignore"):
            r = w * self._surface(q, s)
            if self.kind == "sp":
                anchor = self.cfg.rim_anchor_weight * np.sqrt(self.n) * w * self._anchor(q, s)
                r = np.append(r, anchor)
        return r

    def jacobian(self, st: _State) -> np.ndarray:
        s = st.shape
        q = st.local(self.pts)
        w = np.sqrt(s[0] * s[1] * s[2])
        m = self.n + (1 if self.kind == "sp" else 0)
        J = np.empty((m, 11))
        with np.errstate(all="ignore"):
            for k in range(5):
                h = 1e-6 * max(abs(s[k]), 1e-3)
                sp_, sm_ = s.copy(), s.copy()
                sp_[k] += h
                sm_[k] -= h
                J[:, k] = (self.residuals(_State(sp_, st.R, st.t)) - self.residuals(_State(sm_, st.R, st.t))) / (2 * h)
            g = w * self._surface_grad(q, s)
            J[: self.n, 5:8] = -g @ st.R.T
            J[: self.n, 8:11] = np.cross(g, q)
            if self.kind == "sp":
                # the percentile moves with its two bracketing points
                _, (i, j), frac = self._top(q[:, 2])
                dz = np.zeros(6)
                for idx, wgt in ((i, 1 - frac), (j, frac)):
                    qi = q[idx]
                    dz[:3] += wgt * -st.R[:, 2]
                    dz[3:] += wgt * np.array([-qi[1], qi[0], 0.0])
                J[-1, 5:] = -self.cfg.rim_anchor_weight * np.sqrt(self.n) * w / s[2] * dz
        return J

    def rms(self, st: _State) -> float:
        q = st.local(self.pts)
        with np.errstate(all="ignore"):
            return float(np.sqrt(np.mean(self._surface(q, st.shape) ** 2)))


def _step(st: _State, delta: np.ndarray) -> _State:
    shape = np.clip(st.shape + delta[:5], LO, HI)
    R = st.R @ so3_exp(delta[8:11])
    return _State(shape, R, st.t + delta[5:8])


def levenberg_marquardt(problem: _Problem, st: _State, cfg: LMConfig, trace: list | None = None):
    """Damped Gauss-Newton with Marquardt diagonal scaling. Returns (state, cost)."""
    r = problem.residuals(st)
    cost = float(r @ r)
    if not np.isfinite(cost):
        return st, float("inf")
    if trace is not None:
        trace.append(cost)
    lam = cfg.lambda0
    J = problem.jacobian(st)
    it = 0
    while it < cfg.max_iterations and cost > 0.0:
        if not np.all(np.isfinite(J)):
            break
        A = J.T @ J
        g = J.T @ r
        D = np.maximum(np.diag(A), 1e-12 * max(float(np.diag(A).max()), 1e-300))
        accepted = False
        while it < cfg.max_iterations:
            it += 1
            try:
                delta = np.linalg.solve(A + lam * np.diag(D), -g)
            except np.linalg.LinAlgError:
                lam *= cfg.lambda_up
                if lam > cfg.lambda_max:
                    break
                continue
            cand = _step(st, delta)
            r_new = problem.residuals(cand)
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new < cost:
                accepted = True
                lam = max(lam / cfg.lambda_down, 1e-15)
                break
            lam *= cfg.lambda_up
            if lam > cfg.lambda_max:
                break
        if not accepted:
            break
        rel = (cost - c_new) / cost
        cand.R = orthonormalize(cand.R)
        st, r, cost = cand, r_new, c_new
        if trace is not None:
            trace.append(cost)
        if rel < cfg.rel_tol:
            break
        J = problem.jacobian(st)
    return st, cost


# ---------------------------------------------------------------- initializers


def _perturb(st: _State, rng: np.random.Generator) -> _State:
    shape = st.shape.copy()
    shape[:3] *= rng.uniform(0.8, 1.2, size=3)
    shape[3:] += rng.uniform(-0.3, 0.3, size=2)
    shape = np.clip(shape, LO, HI)
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(rng.uniform(-10.0, 10.0))
    return _State(shape, st.R @ so3_exp(axis * angle), st.t.copy())


def sq_initializer(pts: np.ndarray, perm: int = 0) -> _State:
    frame = pca_frame(pts)
    R = frame.rotation[:, list(_PERMUTATIONS[perm])]
    local = (pts - frame.translation) @ R
    half = (local.max(axis=0) - local.min(axis=0)) / 2.0
    shape = np.clip(np.concatenate([half, [1.0, 1.0]]), LO, HI)
    return _State(shape, R.copy(), frame.translation.copy())


def _opening_sign(pts: np.ndarray, c: np.ndarray, axis: np.ndarray) -> float:
    """+1 if the cloud is wider at the +axis end (the open top of a bowl)."""
    h = (pts - c) @ axis
    radial = np.linalg.norm((pts - c) - np.outer(h, axis), axis=1)
    lo, hi = h.min(), h.max()
    span = hi - lo
    if span <= 0:
        return 1.0
    top = radial[h >= hi - 0.25 * span].mean()
    bottom = radial[h <= lo + 0.25 * span].mean()
    return 1.0 if top >= bottom else -1.0


def sp_initializer(pts: np.ndarray, choice: int = 0) -> _State:
    frame = pca_frame(pts)
    c = frame.translation
    V = frame.rotation
    # choice 0: minor axis as the opening direction; 1: middle; 2: major
    zi = (2, 1, 0)[choice]
    others = [i for i in range(3) if i != zi]
    z = V[:, zi] * _opening_sign(pts, c, V[:, zi])
    x = V[:, others[0]]
    y = np.cross(z, x)
    R = np.column_stack([x, y, z])
    local = (pts - c) @ R
    bottom = np.percentile(local[:, 2], 1)
    top = np.percentile(local[:, 2], 99)
    t = c + R @ np.array([0.0, 0.0, bottom])
    half = (local[:, :2].max(axis=0) - local[:, :2].min(axis=0)) / 2.0
    shape = np.clip(np.array([half[0], half[1], top - bottom, 1.0, 1.0]), LO, HI)
    return _State(shape, R, t)


# ---------------------------------------------------------------- public API


def _fit(cloud: PointCloud, restarts: int, seed: int, kind: str, cfg: LMConfig) -> FitResult:
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if pts.shape[0] < MIN_FIT_POINTS:
        raise CloudSizeError(f"fitting needs at least {MIN_FIT_POINTS} points, got {pts.shape[0]}")
    restarts = max(1, int(restarts))
    problem = _Problem(pts, kind, cfg)
    init = sq_initializer if kind == "sq" else sp_initializer

    best = None
    for k in range(restarts):
        st0 = init(pts, k % 3)
        if k >= 3:
            st0 = _perturb(st0, np.random.default_rng([seed, k]))
        st, cost = levenberg_marquardt(problem, st0, cfg)
        if not np.isfinite(cost):
            continue
        # strict '<' keeps the lowest restart index on ties
        if best is None or cost < best[1]:
            best = (st, cost, k)
    if best is None:
        raise FitFailure(f"{kind} fit produced a non-finite cost at every restart")
    st, cost, k = best
    cls = Superquadric if kind == "sq" else Superparaboloid
    model = cls(*st.shape, Pose(orthonormalize(st.R), st.t))
    return FitResult(model, problem.rms(st), restarts, seed, cost, k)


def fit_superquadric(cloud: PointCloud, restarts: int = 6, seed: int = 0, cfg: LMConfig = LMConfig()) -> FitResult:
    return _fit(cloud, restarts, seed, "sq", cfg)


def fit_superparaboloid(cloud: PointCloud, restarts: int = 6, seed: int = 0, cfg: LMConfig = LMConfig()) -> FitResult:
    return _fit(cloud, restarts, seed, "sp", cfg)


__all__ = [
    "FitResult",
    "LMConfig",
    "fit_superparaboloid",
    "fit_superquadric",
    "levenberg_marquardt",
]
