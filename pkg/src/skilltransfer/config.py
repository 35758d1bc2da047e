"""Run and matrix configuration: one JSON document, paths relative to the file that names them."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .cloud import SegmentConfig
from .control import ControllerConfig
from .errors import SkillTransferError
from .fitting import LMConfig
from .geometry import Pose
from .percept import PerceptConfig, TaskKind
from .sim import CONTACT_EPS
from .suite import TOOL_START


class ConfigError(SkillTransferError):
    exit_code = 1


@dataclass(frozen=True)
class FitSettings:
    seed: int = 0
    restarts: int = 6
    lm: LMConfig = LMConfig()


@dataclass(frozen=True)
class SimSettings:
    dt: float = 0.01
    max_phase_time: float = 30.0
    table_height: float = 0.0
    contact_eps: float = CONTACT_EPS
    initial_pose: Pose = TOOL_START


@dataclass(frozen=True)
class RunConfig:
    tool_cloud: Path
    container_cloud: Path
    task_file: Path
    phase_dir: Path
    task: TaskKind
    out_dir: Path = Path("out")
    fit: FitSettings = FitSettings()
    segment: SegmentConfig = SegmentConfig()
    percept: PerceptConfig = PerceptConfig()
    controller: ControllerConfig = ControllerConfig()
    sim: SimSettings = SimSettings()

    def required_files(self) -> list[Path]:
        return [self.tool_cloud, self.container_cloud, self.task_file]


def _block(cls, d: dict | None, where: str):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigError(f"{where}: expected an object")
    if cls is ControllerConfig:
        try:
            return ControllerConfig.from_dict(d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}: {exc}") from exc
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _fit_block(d: dict | None) -> FitSettings:
    d = dict(d or {})
    lm = _block(LMConfig, d.pop("lm", None), "fit.lm")
    base = _block(FitSettings, d, "fit")
    return replace(base, lm=lm)


def _sim_block(d: dict | None) -> SimSettings:
    d = dict(d or {})
    pose = d.pop("initial_pose", None)
    base = _block(SimSettings, d, "sim")
    if pose is not None:
        try:
            base = replace(base, initial_pose=Pose.from_dict(pose))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"sim.initial_pose: {exc}") from exc
    return base


def read_json(path: Path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return doc


def _path(base: Path, value, key: str) -> Path:
    if not isinstance(value, str):
        raise ConfigError(f"'{key}' must be a path string")
    p = Path(value)
    return p if p.is_absolute() else base / p


def run_config_from_dict(doc: dict, base: Path) -> RunConfig:
    for key in ("tool_cloud", "container_cloud", "task_file", "task"):
        if key not in doc:
            raise ConfigError(f"missing required key '{key}'")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) {', '.join(unknown)}")
    task_file = _path(base, doc["task_file"], "task_file")
    try:
        task = TaskKind(doc["task"])
    except ValueError:
        raise ConfigError(f"unknown task '{doc['task']}' (expected scrape, scoop or cut)") from None
    return RunConfig(
        tool_cloud=_path(base, doc["tool_cloud"], "tool_cloud"),
        container_cloud=_path(base, doc["container_cloud"], "container_cloud"),
        task_file=task_file,
        phase_dir=_path(base, doc["phase_dir"], "phase_dir") if "phase_dir" in doc else task_file.parent,
        task=task,
        out_dir=_path(base, doc.get("out_dir", "out"), "out_dir"),
        fit=_fit_block(doc.get("fit")),
        segment=_block(SegmentConfig, doc.get("segment"), "segment"),
        percept=_block(PerceptConfig, doc.get("percept"), "percept"),
        controller=_block(ControllerConfig, doc.get("controller"), "controller"),
        sim=_sim_block(doc.get("sim")),
    )


def load_run_config(path) -> RunConfig:
    path = Path(path)
    return run_config_from_dict(read_json(path), path.parent)


def config_to_dict(cfg: RunConfig) -> dict:
    """Full document with every tunable at its effective value."""
    sim = {k: v for k, v in asdict(cfg.sim).items() if k != "initial_pose"}
    sim["initial_pose"] = cfg.sim.initial_pose.to_dict()
    return {
        "tool_cloud": str(cfg.tool_cloud),
        "container_cloud": str(cfg.container_cloud),
        "task_file": str(cfg.task_file),
        "phase_dir": str(cfg.phase_dir),
        "task": cfg.task.value,
        "out_dir": str(cfg.out_dir),
        "fit": {"seed": cfg.fit.seed, "restarts": cfg.fit.restarts, "lm": asdict(cfg.fit.lm)},
        "segment": asdict(cfg.segment),
        "percept": asdict(cfg.percept),
        "controller": cfg.controller.to_dict(),
        "sim": sim,
    }


@dataclass(frozen=True)
class MatrixSpec:
    tools: dict[str, Path]
    containers: dict[str, Path]
    tasks: tuple[TaskKind, ...]
    skills_dir: Path
    template: dict = field(default_factory=dict)
    base: Path = Path(".")

    def cells(self) -> list[tuple[str, str, TaskKind]]:
        return [(t, c, k) for k in self.tasks for t in self.tools for c in self.containers]


def load_matrix_spec(path) -> MatrixSpec:
    path = Path(path)
    doc = read_json(path)
    base = path.parent
    for key in ("tools", "containers", "tasks"):
        if not doc.get(key):
            raise ConfigError(f"matrix spec: '{key}' must be a non-empty object/list")
    if not isinstance(doc["tools"], dict) or not isinstance(doc["containers"], dict):
        raise ConfigError("matrix spec: 'tools' and 'containers' map ids to cloud paths")
    try:
        tasks = tuple(TaskKind(t) for t in doc["tasks"])
    except ValueError as exc:
        raise ConfigError(f"matrix spec: {exc}") from None
    template = doc.get("run", {})
    if not isinstance(template, dict):
        raise ConfigError("matrix spec: 'run' must be an object")
    return MatrixSpec(
        tools={k: _path(base, v, f"tools.{k}") for k, v in doc["tools"].items()},
        containers={k: _path(base, v, f"containers.{k}") for k, v in doc["containers"].items()},
        tasks=tasks,
        skills_dir=_path(base, doc.get("skills_dir", "skills"), "skills_dir"),
        template=template,
        base=base,
    )
