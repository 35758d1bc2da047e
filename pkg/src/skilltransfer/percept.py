"""Turn fitted tool parts and container clouds into named geometric features."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud
from .errors import NoAffordanceError
from .fitting import FitResult, LMConfig, fit_superparaboloid, fit_superquadric
from .sqmodel import Superparaboloid, model_to_dict, refine_rim, rim_superellipse


class TaskKind(str, enum.Enum):
    scrape = "scrape"
    scoop = "scoop"
    cut = "cut"


@dataclass(frozen=True)
class PerceptConfig:
    scoop_min_depth_ratio: float = 0.2
    # a part only counts as concave if its bowl fit is at least this good
    scoop_max_rms: float = 0.01
    # a part only counts as flat if min/median semi-axis is at most this
    scrape_max_flatness: float = 0.5
    cut_min_elongation: float = 4.0
    blade_fraction: float = 0.05
    n_rim: int = 64


@dataclass(frozen=True)
class ToolPart:
    cloud: PointCloud
    sq: FitResult
    sp: FitResult | None = None

    @property
    def semi_axes(self) -> np.ndarray:
        m = self.sq.model
        return np.array([m.a1, m.a2, m.a3])

    @property
    def elongation(self) -> float:
        a = self.semi_axes
        return float(a.max() / a.min())

    @property
    def flatness(self) -> float:
        a = self.semi_axes
        return float(a.min() / np.median(a))


@dataclass(frozen=True)
class ToolFeatures:
    """Tool features in the tool cloud's own frame."""

    grasp: np.ndarray
    tip: np.ndarray
    heel: np.ndarray
    major_axis: np.ndarray
    action_normal: np.ndarray
    action_part: int
    action_centroid: np.ndarray
    blade: np.ndarray | None = None
    handle_part: int | None = None

    def to_dict(self) -> dict:
        d = {
            "grasp": _vec(self.grasp),
            "tip": _vec(self.tip),
            "heel": _vec(self.heel),
            "major_axis": _vec(self.major_axis),
            "action_normal": _vec(self.action_normal),
            "action_part": int(self.action_part),
        }
        if self.blade is not None:
            d["blade"] = _vec(self.blade)
        return d


@dataclass(frozen=True)
class ContainerFeatures:
    top_centre: np.ndarray
    edge: np.ndarray
    rim_normal: np.ndarray
    rim_samples: np.ndarray
    model: Superparaboloid
    edge_index: int = 0
    rms_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "top_centre": _vec(self.top_centre),
            "edge": _vec(self.edge),
            "rim_normal": _vec(self.rim_normal),
            "model": model_to_dict(self.model, self.rms_residual),
        }


def _vec(v) -> list[float]:
    return [float(x) for x in v]


def fit_tool_parts(
    clouds: list[PointCloud], task: TaskKind | str, seed: int = 0, restarts: int = 6, lm: LMConfig = LMConfig()
) -> list[ToolPart]:
    """Fit every part with a superquadric, and with a superparaboloid too when scooping."""
    task = TaskKind(task)
    parts = []
    for i, c in enumerate(clouds):
        sq = fit_superquadric(c, restarts, seed + i, lm)
        sp = fit_superparaboloid(c, restarts, seed + i, lm) if task is TaskKind.scoop else None
        parts.append(ToolPart(c, sq, sp))
    return parts


def choose_action_part(parts: list[ToolPart], task: TaskKind | str, cfg: PerceptConfig = PerceptConfig()) -> int:
    task = TaskKind(task)
    if not parts:
        raise NoAffordanceError(task.value, "tool has no fitted parts")
    best, best_key = None, None
    for i, part in enumerate(parts):
        if task is TaskKind.scoop:
            if part.sp is None:
                continue
            m = part.sp.model
            if m.a3 / max(m.a1, m.a2) < cfg.scoop_min_depth_ratio or part.sp.rms_residual > cfg.scoop_max_rms:
                continue
            key = part.sp.rms_residual
        elif task is TaskKind.scrape:
            if part.flatness > cfg.scrape_max_flatness:
                continue
            key = part.flatness
        else:
            if part.elongation < cfg.cut_min_elongation:
                continue
            key = float(part.semi_axes.min())
        # strict '<' keeps the lower index on ties
        if best_key is None or key < best_key:
            best, best_key = i, key
    if best is None:
        rule = {
            TaskKind.scoop: f"no concave part (depth ratio >= {cfg.scoop_min_depth_ratio}, bowl rms <= {cfg.scoop_max_rms})",
            TaskKind.scrape: f"no flat part (min/median semi-axis <= {cfg.scrape_max_flatness})",
            TaskKind.cut: f"no thin elongated part (max/min semi-axis >= {cfg.cut_min_elongation})",
        }[task]
        raise NoAffordanceError(task.value, rule)
    return best


def handle_part(parts: list[ToolPart], action: int) -> int | None:
    best, best_e = None, -1.0
    for i, part in enumerate(parts):
        if i != action and part.elongation > best_e:
            best, best_e = i, part.elongation
    return best


def _upward(v: np.ndarray) -> np.ndarray:
    if abs(v[2]) > 1e-12:
        return v if v[2] > 0 else -v
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def tool_info(parts: list[ToolPart], task: TaskKind | str, cfg: PerceptConfig = PerceptConfig()) -> ToolFeatures:
    task = TaskKind(task)
    action = choose_action_part(parts, task, cfg)
    handle = handle_part(parts, action)
    act_pts = parts[action].cloud.points
    grasp = (parts[handle] if handle is not None else parts[action]).cloud.centroid()

    # tip comes from the raw cloud, never from a fitted model
    all_pts = np.vstack([p.cloud.points for p in parts])
    tip = all_pts[int(np.argmax(np.linalg.norm(all_pts - grasp, axis=1)))]
    major = tip - grasp
    major = major / np.linalg.norm(major)
    heel = act_pts[int(np.argmin(act_pts @ major))]

    if task is TaskKind.scoop:
        normal = parts[action].sp.model.axis
    else:
        m = parts[action].sq.model
        normal = _upward(m.pose.rotation[:, int(np.argmin(parts[action].semi_axes))].copy())
    normal = normal / np.linalg.norm(normal)

    blade = None
    if task is TaskKind.cut:
        k = max(1, math.ceil(cfg.blade_fraction * len(act_pts)))
        order = np.argsort(act_pts @ normal, kind="stable")
        blade = act_pts[order[:k]].mean(axis=0)

    return ToolFeatures(
        grasp=grasp,
        tip=tip.copy(),
        heel=heel.copy(),
        major_axis=major,
        action_normal=normal,
        action_part=action,
        action_centroid=act_pts.mean(axis=0),
        blade=blade,
        handle_part=handle,
    )


def container_from_fit(fit: FitResult, cloud: PointCloud, query, n_rim: int = 64) -> ContainerFeatures:
    if n_rim < 32:
        raise ValueError("n_rim must be >= 32")
    model = refine_rim(fit.model, cloud)
    rim = rim_superellipse(model, n_rim)
    d = np.linalg.norm(rim - np.asarray(query, dtype=float), axis=1)
    k = int(np.argmin(d))
    return ContainerFeatures(
        top_centre=model.top_centre,
        edge=rim[k].copy(),
        rim_normal=model.axis,
        rim_samples=rim,
        model=model,
        edge_index=k,
        rms_residual=fit.rms_residual,
    )


def container_info(
    cloud: PointCloud,
    query,
    n_rim: int = 64,
    seed: int = 0,
    restarts: int = 6,
    lm: LMConfig = LMConfig(),
) -> ContainerFeatures:
    """Fit the container, lift its rim to the cloud's top, and pick the rim sample nearest ``query``."""
    fit = fit_superparaboloid(cloud, restarts, seed, lm)
    return container_from_fit(fit, cloud, query, n_rim)


def feature_report(tool: ToolFeatures, container: ContainerFeatures) -> dict:
    return {"tool": tool.to_dict(), "container": container.to_dict()}
