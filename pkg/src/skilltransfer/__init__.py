"""Geometric tool-use skill transfer: shape fitting, affordance features, constraint-based motion."""

from .cloud import PointCloud, load_cloud, pca_frame, segment_tool, synth_cloud
from .control import ControllerConfig, Twist, constraint_error, jacobian, stop_check, tick
from .errors import (
    BindError,
    CloudParseError,
    CloudSizeError,
    DegeneracyError,
    DegenerateDirectionError,
    DSLError,
    FitFailure,
    NoAffordanceError,
    SkillTransferError,
    SolverError,
)
from .fitting import FitResult, LMConfig, fit_superparaboloid, fit_superquadric
from .geometry import Pose
from .percept import ContainerFeatures, TaskKind, ToolFeatures, choose_action_part, container_info, tool_info
from .sim import ContactEvent, RunReport, SimWorld, Trajectory, judge, run_phase, run_task, step
from .sqmodel import Superparaboloid, Superquadric, grad_implicit, implicit_sp, implicit_sq, refine_rim, rim_superellipse

__version__ = "0.1.0"
