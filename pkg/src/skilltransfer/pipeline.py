"""Clouds + descriptions -> features -> bound phases -> simulated run, and the evaluation matrix."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cloud import PointCloud, SegmentConfig, load_cloud, segment_tool
from .config import RunConfig, SimSettings, run_config_from_dict
from .control import ControllerConfig
from .errors import CloudParseError, SkillTransferError
from .fitting import FitResult, LMConfig, fit_superparaboloid
from .geometry import Pose
from .percept import (
    ContainerFeatures,
    PerceptConfig,
    TaskKind,
    ToolFeatures,
    ToolPart,
    container_from_fit,
    feature_report,
    fit_tool_parts,
    tool_info,
)
from .sim import RunReport, SimWorld, Trajectory, run_task
from .skilldsl import PhaseSpec, Scene, TaskDescription, bind, parse_phase, parse_task

PHASE_SUFFIX = ".phase"


def read_text(path: Path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise CloudParseError(f"cannot read file: {exc.strerror or exc}", None, str(path)) from exc


def load_skill(task_file: Path, phase_dir: Path | None = None) -> tuple[TaskDescription, list[PhaseSpec]]:
    task_file = Path(task_file)
    phase_dir = Path(phase_dir) if phase_dir is not None else task_file.parent
    task = _located(task_file, lambda: parse_task(read_text(task_file)))
    phases = []
    for name in task.phases:
        p = phase_dir / f"{name}{PHASE_SUFFIX}"
        spec = _located(p, lambda p=p: parse_phase(read_text(p)))
        if spec.name != name:
            raise SkillTransferError(f"{p}: declares phase '{spec.name}', expected '{name}'")
        phases.append(spec)
    return task, phases


def _located(path: Path, fn):
    from .errors import DSLError

    try:
        return fn()
    except DSLError as exc:
        raise DSLError(exc.message, exc.line, exc.col, str(path)) from None


def body_frame(features: ToolFeatures) -> ToolFeatures:
    """Re-express cloud-frame tool features relative to the grasp point."""
    g = features.grasp
    return replace(
        features,
        grasp=np.zeros(3),
        tip=features.tip - g,
        heel=features.heel - g,
        action_centroid=features.action_centroid - g,
        blade=None if features.blade is None else features.blade - g,
    )


@dataclass
class FitCache:
    """Fits shared across the cells of one matrix run."""

    tools: dict = field(default_factory=dict)
    containers: dict = field(default_factory=dict)


def tool_parts(
    cloud: PointCloud,
    task: TaskKind,
    seed: int,
    restarts: int,
    lm: LMConfig = LMConfig(),
    segment: SegmentConfig = SegmentConfig(),
) -> list[ToolPart]:
    return fit_tool_parts(segment_tool(cloud, segment), task, seed, restarts, lm)


@dataclass
class Perception:
    tool: ToolFeatures  # cloud frame
    container: ContainerFeatures
    query: np.ndarray

    def report(self) -> dict:
        return feature_report(self.tool, self.container)


def perceive(
    tool_cloud: PointCloud,
    container_cloud: PointCloud,
    task: TaskKind,
    initial_pose: Pose,
    seed: int = 0,
    restarts: int = 6,
    lm: LMConfig = LMConfig(),
    segment: SegmentConfig = SegmentConfig(),
    percept: PerceptConfig = PerceptConfig(),
    cache: FitCache | None = None,
    cache_key: tuple = (),
) -> Perception:
    """Both queries: tool information, then target information with the tool tip as query point."""
    task = TaskKind(task)
    # only scooping needs bowl fits of the tool parts, so the task is part of the key
    tkey = (cache_key[0], task is TaskKind.scoop) if cache_key else None
    if cache is not None and tkey in cache.tools:
        parts = cache.tools[tkey]
    else:
        parts = tool_parts(tool_cloud, task, seed, restarts, lm, segment)
        if cache is not None and tkey is not None:
            cache.tools[tkey] = parts
    tool = tool_info(parts, task, percept)
    query = initial_pose.apply(tool.tip - tool.grasp)

    ckey = cache_key[1] if cache_key else None
    if cache is not None and ckey in cache.containers:
        fit: FitResult = cache.containers[ckey]
    else:
        fit = fit_superparaboloid(container_cloud, restarts, seed, lm)
        if cache is not None and ckey is not None:
            cache.containers[ckey] = fit
    container = container_from_fit(fit, container_cloud, query, percept.n_rim)
    return Perception(tool, container, query)


def make_world(p: Perception, sim: SimSettings = SimSettings(), controller: ControllerConfig = ControllerConfig()) -> SimWorld:
    return SimWorld(
        tool=body_frame(p.tool),
        container=p.container,
        initial_pose=sim.initial_pose,
        table_height=sim.table_height,
        dt=sim.dt,
        max_phase_time=sim.max_phase_time,
        contact_eps=sim.contact_eps,
        controller=controller,
    )


def execute(world: SimWorld, task: TaskDescription, phases: list[PhaseSpec], kind: TaskKind) -> tuple[Trajectory, RunReport]:
    scene = Scene(world.scene_features(), world.initial_pose)
    bound = [bind(p, scene) for p in phases]
    return run_task(world, task, bound, kind)


@dataclass
class RunResult:
    perception: Perception
    world: SimWorld
    trajectory: Trajectory
    report: RunReport


def run_pipeline(cfg: RunConfig, cache: FitCache | None = None, cache_key: tuple = ()) -> RunResult:
    task, phases = load_skill(cfg.task_file, cfg.phase_dir)
    tool_cloud = load_cloud(cfg.tool_cloud)
    container_cloud = load_cloud(cfg.container_cloud)
    p = perceive(
        tool_cloud,
        container_cloud,
        cfg.task,
        cfg.sim.initial_pose,
        cfg.fit.seed,
        cfg.fit.restarts,
        cfg.fit.lm,
        cfg.segment,
        cfg.percept,
        cache,
        cache_key,
    )
    world = make_world(p, cfg.sim, cfg.controller)
    traj, report = execute(world, task, phases, cfg.task)
    return RunResult(p, world, traj, report)


def write_run(result: RunResult, out_dir: Path, stem: str = "run") -> dict[str, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out_dir / f"{stem}_trajectory.csv",
        "events": out_dir / f"{stem}_events.json",
        "report": out_dir / f"{stem}_report.json",
        "features": out_dir / f"{stem}_features.json",
    }
    paths["trajectory"].write_text(result.trajectory.to_csv(), encoding="utf-8")
    paths["events"].write_text(result.trajectory.events_json(), encoding="utf-8")
    paths["report"].write_text(result.report.to_json(), encoding="utf-8")
    paths["features"].write_text(json.dumps(result.perception.report(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# --- matrix ---------------------------------------------------------------


@dataclass
class CellResult:
    tool: str
    container: str
    task: TaskKind
    success: bool
    report: dict | None
    error: str | None = None

    @property
    def test_id(self) -> str:
        return f"{self.task.value}/{self.tool}/{self.container}"


def run_matrix(spec, out_dir: Path | None = None, on_result=None) -> dict:
    """Every (task, tool, container) cell; failures are recorded, never raised.

    ``on_result(cell, result)`` is called for every cell that produced a run.
    """
    cache = FitCache()
    cells: list[CellResult] = []
    for tool, container, kind in spec.cells():
        doc = dict(spec.template)
        doc.update(
            tool_cloud=str(spec.tools[tool]),
            container_cloud=str(spec.containers[container]),
            task_file=str(spec.skills_dir / kind.value / "task.skill"),
            task=kind.value,
        )
        doc.pop("out_dir", None)
        try:
            cfg = run_config_from_dict(doc, spec.base)
            result = run_pipeline(cfg, cache, (str(cfg.tool_cloud), str(cfg.container_cloud)))
            cell = CellResult(tool, container, kind, result.report.success, result.report.to_dict())
            if out_dir is not None:
                write_run(result, Path(out_dir) / kind.value, f"{tool}__{container}")
            if on_result is not None:
                on_result(cell, result)
        except SkillTransferError as exc:
            cell = CellResult(tool, container, kind, False, None, f"{type(exc).__name__}: {exc}")
        cells.append(cell)
    return aggregate(spec, cells)


def aggregate(spec, cells: list[CellResult]) -> dict:
    cells = sorted(cells, key=lambda c: c.test_id)
    tables = {}
    for kind in spec.tasks:
        rows = {t: {c: None for c in spec.containers} for t in spec.tools}
        for cell in cells:
            if cell.task is kind:
                rows[cell.tool][cell.container] = cell.success
        tables[kind.value] = rows
    n_ok = sum(1 for c in cells if c.success)
    return {
        "tasks": [k.value for k in spec.tasks],
        "tools": list(spec.tools),
        "containers": list(spec.containers),
        "cells": {
            c.test_id: {
                "success": c.success,
                "error": c.error,
                "reasons": None if c.report is None else {p["name"]: p["reason"] for p in c.report["phases"]},
            }
            for c in cells
        },
        "tables": tables,
        "success_count": n_ok,
        "total": len(cells),
        "success_rate": n_ok / len(cells) if cells else 0.0,
    }


def format_table(agg: dict) -> str:
    lines = []
    for task, rows in agg["tables"].items():
        cols = agg["containers"]
        w0 = max(len("tool"), *(len(t) for t in rows))
        widths = [max(4, len(c)) for c in cols]
        lines.append(f"task: {task}")
        lines.append("  ".join(["tool".ljust(w0)] + [c.ljust(w) for c, w in zip(cols, widths)]).rstrip())
        for tool, row in rows.items():
            cells = ["pass" if row[c] else "FAIL" for c in cols]
            lines.append("  ".join([tool.ljust(w0)] + [s.ljust(w) for s, w in zip(cells, widths)]).rstrip())
        lines.append("")
    lines.append(f"success: {agg['success_count']}/{agg['total']}")
    return "\n".join(lines) + "\n"
