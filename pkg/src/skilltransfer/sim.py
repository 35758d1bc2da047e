"""Kinematic tool world: twist integration, analytic contacts, phase sequencing, judging.

The tool is a rigid free-flying frame whose origin is the grasp point. Three
monitored tool points (heel, tip and, for cutting tools, blade) can touch two
analytic surfaces: the table plane and the container rim curve. Contact only
removes the approaching component of the commanded translation; there is no
dynamics and no friction.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .control import ControllerConfig, Twist, stop_check, tick_detail
from .errors import SkillTransferError
from .geometry import Pose
from .percept import ContainerFeatures, TaskKind, ToolFeatures
from .skilldsl.ast import TaskDescription
from .skilldsl.bind import BoundPhase

CONTACT_EPS = 0.005
REASONS = ("velocity", "distance", "timeout")
RELEASE_FACTOR = 2.0


@dataclass
class SimWorld:
    """Everything the simulator needs. Tool features are in the tool body frame (grasp at the origin)."""

    tool: ToolFeatures
    container: ContainerFeatures
    initial_pose: Pose
    table_height: float = 0.0
    dt: float = 0.01
    max_phase_time: float = 30.0
    contact_eps: float = CONTACT_EPS
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    def __post_init__(self):
        if not 0 < self.dt <= 0.05:
            raise ValueError("dt must lie in (0, 0.05]")
        if not self.max_phase_time > 0:
            raise ValueError("max_phase_time must be > 0")
        names = ["heel", "tip"] + (["blade"] if self.tool.blade is not None else [])
        self.monitored_names = tuple(names)
        self.monitored = np.array([getattr(self.tool, n) for n in names], dtype=float)

    def scene_features(self) -> dict[str, object]:
        t = self.tool
        feats = {
            "tool.tip": t.tip,
            "tool.heel": t.heel,
            "tool.grasp": t.grasp,
            "tool.major_axis": t.major_axis,
            "tool.action_normal": t.action_normal,
            "tool.centroid": t.action_centroid,
            "target.edge": self.container.edge,
            "target.top_centre": self.container.top_centre,
            "target.rim_normal": self.container.rim_normal,
            "world.up": np.array([0.0, 0.0, 1.0]),
            "world.table_height": self.table_height,
        }
        if t.blade is not None:
            feats["tool.blade"] = t.blade
        return feats


@dataclass(frozen=True)
class ContactEvent:
    time: float
    surface: str
    point: np.ndarray
    normal: np.ndarray
    tool_point: str = ""
    phase: str = ""

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "kind": "contact",
            "point": [float(v) for v in self.point],
            "detail": {
                "surface": self.surface,
                "normal": [float(v) for v in self.normal],
                "tool_point": self.tool_point,
                "phase": self.phase,
            },
        }


@dataclass(frozen=True)
class Sample:
    t: float
    pose: Pose
    values: tuple[float, ...]
    phase: str
    max_violation: float
    linear_speed: float = 0.0
    angular_speed: float = 0.0


@dataclass
class Trajectory:
    samples: list[Sample] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    contacts: list[ContactEvent] = field(default_factory=list)

    def extend(self, other: "Trajectory") -> None:
        self.samples.extend(other.samples)
        self.events.extend(other.events)
        self.contacts.extend(other.contacts)

    def phase_names(self) -> list[str]:
        out = []
        for s in self.samples:
            if not out or out[-1] != s.phase:
                out.append(s.phase)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "x", "y", "z", "qw", "qx", "qy", "qz", "phase", "max_violation"])
        for s in self.samples:
            q = s.pose.quaternion
            w.writerow([repr(s.t), *(repr(float(v)) for v in s.pose.translation), *(repr(float(v)) for v in q), s.phase, repr(s.max_violation)])
        return buf.getvalue()

    def events_json(self) -> str:
        return json.dumps(self.events, indent=2) + "\n"


@dataclass
class PhaseResult:
    name: str
    reason: str
    start_time: float
    duration: float
    final_values: tuple[float, ...]
    final_max_violation: float
    path_length: float
    start_pose: Pose
    end_pose: Pose

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "reason": self.reason,
            "start_time": self.start_time,
            "duration": self.duration,
            "final_values": list(self.final_values),
            "final_max_violation": self.final_max_violation,
            "path_length": self.path_length,
        }


@dataclass
class RunReport:
    task: TaskKind
    success: bool
    phases: list[PhaseResult]
    contact_count: int
    path_length: float
    error: str | None = None
    error_stage: str | None = None

    @property
    def reasons(self) -> dict[str, str]:
        return {p.name: p.reason for p in self.phases}

    def to_dict(self) -> dict:
        return {
            "task": TaskKind(self.task).value,
            "success": bool(self.success),
            "phases": [p.to_dict() for p in self.phases],
            "metrics": {
                "final_violations": {p.name: p.final_max_violation for p in self.phases},
                "path_length": self.path_length,
                "contact_count": self.contact_count,
            },
            "error": self.error,
            "error_stage": self.error_stage,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


# --- integration and contact ----------------------------------------------


def _rim_nearest(world: SimWorld, p: np.ndarray) -> tuple[int, float]:
    d = np.linalg.norm(world.container.rim_samples - p, axis=1)
    k = int(np.argmin(d))
    return k, float(d[k])


def _contacts_at(world: SimWorld, pose: Pose, xi: np.ndarray):
    """Rim contacts of ``pose`` that the twist ``xi`` is approaching."""
    R = pose.rotation
    v, w = xi[:3], xi[3:]
    pts = pose.apply(world.monitored)
    out = []
    for i, (pb, pw) in enumerate(zip(world.monitored, pts)):
        u = R @ (v + np.cross(w, pb))
        k, d = _rim_nearest(world, pw)
        if 1e-12 < d < world.contact_eps:
            n = (pw - world.container.rim_samples[k]) / d
            if u @ n < 0:
                out.append((i, "rim", n, u @ n, k))
    return out


def _resolve(world: SimWorld, pose: Pose, xi: np.ndarray):
    """Remove rim-approaching normal components from the linear part, then clamp to the table.

    Returns the resolved pose and the contacts that blocked motion, keyed by
    (monitored point index, surface) with the rim sample index as value.
    """
    xi = xi.copy()
    R = pose.rotation
    touched: dict = {}
    for _ in range(4):
        cand = pose.retract(xi * world.dt)
        hits = _contacts_at(world, cand, xi)
        if not hits:
            break
        for i, surface, n, un, k in hits:
            # u.n < 0: cancel that component in the world, expressed back in the body
            xi[:3] -= un * (R.T @ n)
            touched.setdefault((i, surface), k)
    cand = pose.retract(xi * world.dt)
    # the table clamps: whatever would pass below it is lifted back onto the plane
    z = cand.apply(world.monitored)[:, 2]
    pen = world.table_height - float(z.min())
    if pen > 0:
        cand = Pose(cand.rotation, cand.translation + np.array([0.0, 0.0, pen]))
        touched.setdefault((int(np.argmin(z)), "table"), None)
    return cand, touched


def _still_touching(world: SimWorld, pose: Pose, key, k) -> bool:
    # release needs a clear separation, so a point resting at the contact
    # boundary does not flicker on and off
    i, surface = key
    pw = pose.apply(world.monitored[i])
    if surface == "table":
        return pw[2] <= world.table_height + world.contact_eps
    d = float(np.linalg.norm(world.container.rim_samples - pw, axis=1).min())
    return d < RELEASE_FACTOR * world.contact_eps


def _event(world: SimWorld, pose: Pose, key, k, t: float, phase: str) -> ContactEvent:
    i, surface = key
    pw = pose.apply(world.monitored[i])
    if surface == "table":
        point = np.array([pw[0], pw[1], world.table_height])
        normal = np.array([0.0, 0.0, 1.0])
    else:
        point = world.container.rim_samples[k].copy()
        d = pw - point
        nd = np.linalg.norm(d)
        normal = d / nd if nd > 1e-12 else world.container.rim_normal.copy()
    return ContactEvent(t, surface, point, normal, world.monitored_names[i], phase)


def step_detail(world: SimWorld, pose: Pose, twist: Twist, active: dict | None = None, t: float = 0.0, phase: str = ""):
    """Advance one ``dt``. Returns (pose, newly active contact events, active contact map).

    A contact is active while it blocks motion or while its point stays on the
    surface (table) or within ``contact_eps`` of its rim sample.
    """
    before = active or {}
    xi = twist.as_vector()
    if np.any(xi):
        new_pose, touched = _resolve(world, pose, xi)
    else:
        new_pose, touched = pose, {}
    now = {key: k for key, k in before.items() if _still_touching(world, new_pose, key, k)}
    events = []
    for key, k in touched.items():
        if key not in now:
            events.append(_event(world, new_pose, key, k, t, phase))
        now[key] = k
    return new_pose, events, now


def step(world: SimWorld, pose: Pose, twist: Twist, active: dict | None = None) -> tuple[Pose, ContactEvent | None]:
    new_pose, events, _ = step_detail(world, pose, twist, active, world.dt)
    return new_pose, (events[0] if events else None)


# --- phases and tasks -------------------------------------------------------


@dataclass
class _RunState:
    pose: Pose
    k: int = 0
    active: dict = field(default_factory=dict)


def _violation(e: np.ndarray) -> float:
    return float(np.abs(e).max()) if e.size else 0.0


def _phase_loop(world: SimWorld, phase: BoundPhase, st: _RunState, traj: Trajectory) -> PhaseResult:
    spec = phase.spec
    bounds = (spec.max_linear_speed, spec.max_angular_speed)
    cons = phase.constraints
    start_pose, start_k = st.pose, st.k
    max_ticks = int(math.ceil(world.max_phase_time / world.dt - 1e-9))
    twist, y, e = tick_detail(cons, st.pose, world.controller, *bounds)
    if st.k == 0:
        traj.samples.append(Sample(0.0, st.pose, tuple(map(float, y)), spec.name, _violation(e)))
    traj.events.append({"time": st.k * world.dt, "kind": "phase_start", "point": [float(v) for v in st.pose.translation], "detail": {"phase": spec.name}})
    reason = "timeout"
    path = 0.0
    for n in range(1, max_ticks + 1):
        prev = st.pose
        t_next = (st.k + 1) * world.dt
        st.pose, events, st.active = step_detail(world, st.pose, twist, st.active, t_next, spec.name)
        st.k += 1
        for ev in events:
            traj.contacts.append(ev)
            traj.events.append(ev.to_dict())
        moved = float(np.linalg.norm(st.pose.translation - prev.translation))
        path += moved
        speed = moved / world.dt
        lin, ang = twist.linear_speed, twist.angular_speed
        twist, y, e = tick_detail(cons, st.pose, world.controller, *bounds)
        viol = _violation(e)
        traj.samples.append(Sample(st.k * world.dt, st.pose, tuple(map(float, y)), spec.name, viol, lin, ang))
        if stop_check(n * world.dt, speed, viol, spec.stop):
            reason = "distance" if viol < spec.stop.distance_below else "velocity"
            break
    res = PhaseResult(
        name=spec.name,
        reason=reason,
        start_time=start_k * world.dt,
        duration=(st.k - start_k) * world.dt,
        final_values=tuple(map(float, y)),
        final_max_violation=_violation(e),
        path_length=path,
        start_pose=start_pose,
        end_pose=st.pose,
    )
    traj.events.append({"time": st.k * world.dt, "kind": "phase_end", "point": [float(v) for v in st.pose.translation], "detail": {"phase": spec.name, "reason": reason}})
    return res


def run_phase(world: SimWorld, phase: BoundPhase, pose: Pose) -> tuple[Pose, Trajectory, str]:
    traj = Trajectory()
    st = _RunState(pose)
    res = _phase_loop(world, phase, st, traj)
    return st.pose, traj, res.reason


def run_task(
    world: SimWorld, task: TaskDescription, phases: Sequence[BoundPhase], kind: TaskKind | str | None = None
) -> tuple[Trajectory, RunReport]:
    """Run the phases in task order; a timeout ends the run. Success comes from :func:`judge`."""
    kind = TaskKind(kind if kind is not None else task.name)
    by_name = {p.name: p for p in phases}
    traj = Trajectory()
    st = _RunState(world.initial_pose)
    results: list[PhaseResult] = []
    error = stage = None
    try:
        missing = [n for n in task.phases if n not in by_name]
        if missing:
            raise SkillTransferError(f"no phase description for: {', '.join(missing)}")
        for name in task.phases:
            res = _phase_loop(world, by_name[name], st, traj)
            results.append(res)
            if res.reason == "timeout":
                break
    except SkillTransferError as exc:
        error, stage = str(exc), "run"
    timed_out = any(r.reason == "timeout" for r in results)
    complete = error is None and not timed_out and len(results) == len(task.phases)
    success = complete and judge(kind, traj, world, results)
    report = RunReport(
        task=kind,
        success=success,
        phases=results,
        contact_count=len(traj.contacts),
        path_length=float(sum(r.path_length for r in results)),
        error=error,
        error_stage=stage,
    )
    return traj, report


# --- success predicates -----------------------------------------------------

SCRAPE_MIN_RETRACT = 0.03
SCOOP_MIN_DEPTH = 0.06
SCOOP_MIN_FINAL_HEIGHT = 0.15
SCOOP_MAX_TILT = 0.52
CUT_TABLE_TOL = 0.005
CUT_MIN_DRAW = 0.05


def _phase_index_at(results: Sequence[PhaseResult], t: float) -> int:
    for i, r in enumerate(results):
        if r.start_time <= t <= r.start_time + r.duration + 1e-12:
            return i
    return len(results) - 1


def _judge_scrape(traj: Trajectory, world: SimWorld, results: Sequence[PhaseResult]) -> bool:
    model = world.container.model
    by_t = {round(s.t / world.dt): s for s in traj.samples}
    for ev in traj.contacts:
        if ev.surface != "rim":
            continue
        s = by_t.get(round(ev.time / world.dt))
        if s is None:
            continue
        centroid = s.pose.apply(world.tool.action_centroid)
        if float(model.radial(centroid)) >= 1.0:
            continue
        i = _phase_index_at(results, ev.time)
        for r in results[i + 1 :]:
            back = -r.start_pose.rotate(world.tool.major_axis)
            if float((r.end_pose.translation - r.start_pose.translation) @ back) >= SCRAPE_MIN_RETRACT:
                return True
    return False


def _judge_scoop(traj: Trajectory, world: SimWorld) -> bool:
    top_z = float(world.container.top_centre[2])
    tip_z = np.array([s.pose.apply(world.tool.tip)[2] for s in traj.samples])
    deepest = int(np.argmin(tip_z))
    if tip_z[deepest] > top_z - SCOOP_MIN_DEPTH:
        return False
    if tip_z[-1] < top_z + SCOOP_MIN_FINAL_HEIGHT:
        return False
    for s in traj.samples[deepest:]:
        n = s.pose.rotate(world.tool.action_normal)
        if math.acos(min(1.0, max(-1.0, float(n[2])))) >= SCOOP_MAX_TILT:
            return False
    return True


def _judge_cut(traj: Trajectory, world: SimWorld) -> bool:
    if world.tool.blade is None:
        return False
    for i, s in enumerate(traj.samples):
        if s.pose.apply(world.tool.blade)[2] - world.table_height <= CUT_TABLE_TOL:
            back = -s.pose.rotate(world.tool.major_axis)
            best = max(float((later.pose.translation - s.pose.translation) @ back) for later in traj.samples[i:])
            return best >= CUT_MIN_DRAW
    return False


def judge(task: TaskKind | str, trajectory: Trajectory, world: SimWorld, results: Sequence[PhaseResult] | None = None) -> bool:
    task = TaskKind(task)
    if not trajectory.samples:
        return False
    if task is TaskKind.scrape:
        if results is None:
            results = _results_from_samples(trajectory)
        return _judge_scrape(trajectory, world, results)
    if task is TaskKind.scoop:
        return _judge_scoop(trajectory, world)
    return _judge_cut(trajectory, world)


def _results_from_samples(traj: Trajectory) -> list[PhaseResult]:
    out: list[PhaseResult] = []
    start = 0
    samples = traj.samples
    for j in range(1, len(samples) + 1):
        if j == len(samples) or samples[j].phase != samples[start].phase:
            a = samples[max(start - 1, 0)]
            b = samples[j - 1]
            out.append(PhaseResult(b.phase, "", a.t, b.t - a.t, b.values, b.max_violation, 0.0, a.pose, b.pose))
            start = j
    return out
