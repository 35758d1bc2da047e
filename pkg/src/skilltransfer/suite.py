"""Synthetic tools and containers with known generating shapes.

Tools are assembled from superquadric (and, for spoon bowls, superparaboloid)
parts laid out along +x: the handle (label 0) occupies x < 0 and the head
(label 1) starts at x = 0. Containers are superparaboloids standing on the
table (z = 0) and centred on the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import PointCloud, synth_cloud
from .geometry import Pose, so3_exp
from .sqmodel import Superparaboloid, Superquadric

ShapeParams = tuple[float, float, float, float, float]


@dataclass(frozen=True)
class ToolPartSpec:
    kind: str  # "sq" | "sp"
    params: ShapeParams
    centre: tuple[float, float, float]
    n: int = 400


def _handle(length: float, r_y: float, r_z: float, eps=(0.5, 1.0), n: int = 400) -> ToolPartSpec:
    return ToolPartSpec("sq", (length / 2, r_y, r_z, *eps), (-length / 2, 0.0, 0.0), n)


def _head(length: float, half_width: float, half_thickness: float, eps=(0.2, 0.3), n: int = 500) -> ToolPartSpec:
    return ToolPartSpec("sq", (length / 2, half_width, half_thickness, *eps), (length / 2, 0.0, 0.0), n)


TOOLS: dict[str, tuple[ToolPartSpec, ...]] = {
    "spatula": (_handle(0.14, 0.012, 0.010), _head(0.10, 0.035, 0.003)),
    "butter_knife": (_handle(0.10, 0.009, 0.007), _head(0.11, 0.011, 0.0025)),
    "paint_scraper": (_handle(0.10, 0.016, 0.013), _head(0.06, 0.040, 0.0025)),
    "serving_spoon": (
        _handle(0.16, 0.008, 0.006),
        ToolPartSpec("sp", (0.045, 0.03, 0.02, 1.0, 1.0), (0.045, 0.0, -0.02), 600),
    ),
    "kitchen_knife": (_handle(0.11, 0.011, 0.009), _head(0.18, 0.02, 0.0015, eps=(0.2, 0.5))),
    "pie_server": (_handle(0.12, 0.010, 0.008), _head(0.09, 0.032, 0.002, eps=(0.2, 0.7))),
    # no concave part: scooping must be refused
    "fork": (_handle(0.13, 0.008, 0.005), _head(0.08, 0.013, 0.0025)),
}

# id -> (a1, a2, a3, eps1, eps2)
CONTAINERS: dict[str, ShapeParams] = {
    "bowl": (0.10, 0.10, 0.08, 1.0, 1.0),
    "pan": (0.14, 0.14, 0.05, 0.4, 1.0),
    "jar": (0.06, 0.06, 0.12, 0.3, 1.0),
    "pot": (0.12, 0.09, 0.10, 0.5, 0.8),
    "dish": (0.15, 0.10, 0.03, 0.5, 0.5),
    # too shallow for a 6.5 cm insertion
    "saucer": (0.08, 0.08, 0.04, 1.0, 1.0),
}

# the scraping suite; the spoon's bowl is an open shell with no flat part, so
# it is exercised by the scooping runs instead
CLEAN_TOOLS = ("spatula", "butter_knife", "paint_scraper", "pie_server", "kitchen_knife")
CLEAN_CONTAINERS = ("bowl", "pan", "jar", "pot")

TOOL_START = Pose(so3_exp([0.0, 0.08, 0.15]), [-0.40, 0.02, 0.30])


def _part_model(spec: ToolPartSpec):
    pose = Pose(np.eye(3), spec.centre)
    if spec.kind == "sq":
        return Superquadric(*spec.params, pose)
    return Superparaboloid(*spec.params, pose)


def tool_cloud(name: str, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """Labelled surface samples of a named synthetic tool."""
    parts = TOOLS[name]
    pts, labels = [], []
    for label, spec in enumerate(parts):
        c = synth_cloud(_part_model(spec), spec.n, noise_sigma, seed + label)
        pts.append(c.points)
        labels.append(np.full(len(c), label))
    return PointCloud(np.vstack(pts), np.concatenate(labels))


def hammer_cloud(n_handle: int = 500, n_head: int = 500) -> PointCloud:
    """Unlabelled T-shaped tool, for exercising geometric segmentation."""
    handle = Superquadric(0.12, 0.012, 0.012, 0.5, 1.0, Pose(np.eye(3), [0.0, 0.0, 0.0]))
    head = Superquadric(0.03, 0.055, 0.02, 0.3, 0.3, Pose(np.eye(3), [0.15, 0.0, 0.0]))
    pts = np.vstack([synth_cloud(handle, n_handle).points, synth_cloud(head, n_head).points])
    return PointCloud(pts)


def container_model(name: str, pose: Pose | None = None) -> Superparaboloid:
    return Superparaboloid(*CONTAINERS[name], pose if pose is not None else Pose.identity())


def container_cloud(name: str, n: int = 1500, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    return synth_cloud(container_model(name), n, noise_sigma, seed)


# --- shipped assets ---------------------------------------------------------

PUBLISHED_SEED = 0


def _demo_config(tool: str, container: str, task: str) -> dict:
    return {
        "tool_cloud": f"../clouds/tools/{tool}.ply",
        "container_cloud": f"../clouds/containers/{container}.ply",
        "task_file": f"../skills/{task}/task.skill",
        "task": task,
        "out_dir": f"out/{task}_{tool}_{container}",
        "fit": {"seed": PUBLISHED_SEED, "restarts": 6},
    }


DEMOS = {
    "scrape_demo": ("spatula", "bowl", "scrape"),
    "scoop_demo": ("serving_spoon", "bowl", "scoop"),
    "cut_demo": ("kitchen_knife", "dish", "cut"),
    "scoop_too_small": ("serving_spoon", "saucer", "scoop"),
}


def build_assets(root) -> list:
    """(Re)generate the shipped clouds and configs under ``root``. Deterministic."""
    import json
    from pathlib import Path

    from .cloud import save_ply

    root = Path(root)
    written = []
    tools_dir = root / "clouds" / "tools"
    cont_dir = root / "clouds" / "containers"
    cfg_dir = root / "configs"
    for d in (tools_dir, cont_dir, cfg_dir):
        d.mkdir(parents=True, exist_ok=True)
    for name in TOOLS:
        path = tools_dir / f"{name}.ply"
        save_ply(tool_cloud(name), path)
        written.append(path)
    path = tools_dir / "hammer.ply"
    save_ply(hammer_cloud(), path)
    written.append(path)
    for name in CONTAINERS:
        path = cont_dir / f"{name}.ply"
        save_ply(container_cloud(name), path)
        written.append(path)

    def dump(path, doc):
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        written.append(path)

    for stem, (tool, container, task) in DEMOS.items():
        dump(cfg_dir / f"{stem}.json", _demo_config(tool, container, task))
    dump(
        cfg_dir / "matrix_scrape.json",
        {
            "tools": {t: f"../clouds/tools/{t}.ply" for t in CLEAN_TOOLS},
            "containers": {c: f"../clouds/containers/{c}.ply" for c in CLEAN_CONTAINERS},
            "tasks": ["scrape"],
            "skills_dir": "../skills",
            "run": {"fit": {"seed": PUBLISHED_SEED, "restarts": 6}},
        },
    )
    return written


def assets_root():
    from pathlib import Path

    return Path(__file__).resolve().parent / "assets"


if __name__ == "__main__":
    import sys

    for p in build_assets(sys.argv[1] if len(sys.argv) > 1 else assets_root()):
        print(p)
