"""Point-cloud ingestion, canonical PCA framing, tool segmentation and synthetic clouds."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CloudParseError, CloudSizeError, DegeneracyError
from .geometry import Pose

MIN_FIT_POINTS = 10
MIN_SEGMENT_POINTS = 20


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=int).reshape(-1)
            if lab.shape[0] != pts.shape[0]:
                raise ValueError(f"{lab.shape[0]} labels for {pts.shape[0]} points")
            if lab.size and lab.min() < 0:
                raise ValueError("part labels must be >= 0")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return self.points.shape[0]

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.apply(self.points), self.labels)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        if not np.array_equal(self.points, other.points):
            return False
        if self.labels is None or other.labels is None:
            return self.labels is None and other.labels is None
        return bool(np.array_equal(self.labels, other.labels))


# ---------------------------------------------------------------- file I/O


def load_cloud(path) -> PointCloud:
    """Read an ASCII PLY (vertex x/y/z, optional int ``part``) or XYZ text file."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise CloudParseError(f"cannot read file: {exc.strerror or exc}", path=str(path)) from exc
    if text.startswith(b"ply"):
        return _parse_ply(text, str(path))
    try:
        decoded = text.decode("ascii")
    except UnicodeDecodeError as exc:
        line = text[: exc.start].count(b"\n") + 1
        raise CloudParseError("non-ASCII content", line, str(path)) from exc
    return _parse_xyz(decoded, str(path))


def _parse_xyz(text: str, path: str) -> PointCloud:
    pts = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise CloudParseError(f"expected 3 fields, found {len(fields)}", lineno, path)
        pts.append([_number(f, lineno, path) for f in fields])
    if not pts:
        raise CloudParseError("empty file: no points", None, path)
    return PointCloud(np.array(pts))


def _number(field: str, lineno: int, path: str) -> float:
    try:
        v = float(field)
    except ValueError:
        raise CloudParseError(f"non-numeric field {field!r}", lineno, path) from None
    if not np.isfinite(v):
        raise CloudParseError(f"non-finite value {field!r}", lineno, path)
    return v


def _parse_ply(data: bytes, path: str) -> PointCloud:
    try:
        text = data.decode("ascii")
    except UnicodeDecodeError as exc:
        line = data[: exc.start].count(b"\n") + 1
        head = data[: data.find(b"end_header")] if b"end_header" in data else data
        if b"binary" in head:
            raise CloudParseError("binary PLY is not supported", 2, path) from exc
        raise CloudParseError("non-ASCII content", line, path) from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise CloudParseError("missing 'ply' magic", 1, path)
    n_vertex = None
    props: list[str] = []
    in_vertex = False
    header_end = None
    for i, raw in enumerate(lines[1:], start=2):
        toks = raw.split()
        if not toks or toks[0] in ("comment", "obj_info"):
            continue
        if toks[0] == "format":
            if len(toks) < 2 or toks[1] != "ascii":
                raise CloudParseError("binary PLY is not supported", i, path)
            if len(toks) != 3 or toks[2] != "1.0":
                raise CloudParseError("unsupported PLY format version", i, path)
        elif toks[0] == "element":
            if len(toks) != 3:
                raise CloudParseError("malformed element line", i, path)
            in_vertex = toks[1] == "vertex"
            if in_vertex:
                if n_vertex is not None:
                    raise CloudParseError("duplicate vertex element", i, path)
                try:
                    n_vertex = int(toks[2])
                except ValueError:
                    raise CloudParseError(f"bad vertex count {toks[2]!r}", i, path) from None
                if n_vertex < 0:
                    raise CloudParseError("negative vertex count", i, path)
            else:
                raise CloudParseError(f"unsupported element {toks[1]!r}", i, path)
        elif toks[0] == "property":
            if not in_vertex:
                raise CloudParseError("property outside the vertex element", i, path)
            if len(toks) != 3 or toks[1] == "list":
                raise CloudParseError("malformed property line", i, path)
            props.append(toks[2])
        elif toks[0] == "end_header":
            header_end = i
            break
        else:
            raise CloudParseError(f"unexpected header keyword {toks[0]!r}", i, path)
    if header_end is None:
        raise CloudParseError("missing end_header", len(lines), path)
    if n_vertex is None:
        raise CloudParseError("no vertex element", header_end, path)
    for axis in "xyz":
        if axis not in props:
            raise CloudParseError(f"vertex property {axis!r} missing", header_end, path)
    if n_vertex == 0:
        raise CloudParseError("empty file: no points", header_end, path)
    ix, iy, iz = (props.index(a) for a in "xyz")
    ipart = props.index("part") if "part" in props else None

    pts = np.empty((n_vertex, 3))
    labels = np.empty(n_vertex, dtype=int) if ipart is not None else None
    row = 0
    lineno = header_end
    for raw in lines[header_end:]:
        lineno += 1
        toks = raw.split()
        if not toks:
            continue
        if row >= n_vertex:
            raise CloudParseError("more vertex rows than declared", lineno, path)
        if len(toks) != len(props):
            raise CloudParseError(f"expected {len(props)} fields, found {len(toks)}", lineno, path)
        pts[row] = [_number(toks[k], lineno, path) for k in (ix, iy, iz)]
        if ipart is not None:
            try:
                lab = int(toks[ipart])
            except ValueError:
                raise CloudParseError(f"non-integer part label {toks[ipart]!r}", lineno, path) from None
            if lab < 0:
                raise CloudParseError("negative part label", lineno, path)
            labels[row] = lab
        row += 1
    if row < n_vertex:
        raise CloudParseError(f"declared {n_vertex} vertices, found {row}", lineno, path)
    return PointCloud(pts, labels)


def save_xyz(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        for p in cloud.points.tolist():
            fh.write(f"{p[0]!r} {p[1]!r} {p[2]!r}\n")


def save_ply(cloud: PointCloud, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(cloud)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if cloud.labels is not None:
            fh.write("property int part\n")
        fh.write("end_header\n")
        for i, p in enumerate(cloud.points.tolist()):
            row = f"{p[0]!r} {p[1]!r} {p[2]!r}"
            if cloud.labels is not None:
                row += f" {int(cloud.labels[i])}"
            fh.write(row + "\n")


# ---------------------------------------------------------------- PCA frame


def _resolve_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def pca_frame(cloud: PointCloud | np.ndarray) -> Pose:
    """Centroid plus principal axes, sorted by descending variance.

    Each of the first two axes is flipped so its largest-magnitude component is
    positive; the third is their cross product. A rank-1 (collinear) cloud gets
    its second axis from the world axis least aligned with the first.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
    if pts.shape[0] < 3:
        raise DegeneracyError(f"need at least 3 points for a frame, got {pts.shape[0]}")
    c = pts.mean(axis=0)
    X = pts - c
    cov = X.T @ X / pts.shape[0]
    w, V = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    scale = float(np.abs(X).max())
    if scale == 0.0 or w[0] <= (1e-12 * scale) ** 2:
        raise DegeneracyError("degenerate covariance: all points coincide")
    e1 = _resolve_sign(V[:, 0])
    if w[1] <= 1e-20 * w[0]:
        helper = np.eye(3)[int(np.argmin(np.abs(e1)))]
        e2 = helper - (helper @ e1) * e1
        e2 /= np.linalg.norm(e2)
    else:
        e2 = V[:, 1] - (V[:, 1] @ e1) * e1
        e2 /= np.linalg.norm(e2)
    e2 = _resolve_sign(e2)
    e3 = np.cross(e1, e2)
    R = np.column_stack([e1, e2, e3])
    return Pose(R, c)


# ---------------------------------------------------------------- segmentation


@dataclass(frozen=True)
class SegmentConfig:
    bins: int = 32
    jump_ratio: float = 1.5
    # persistent jump must also exceed this fraction of the largest bin radius
    min_relative_jump: float = 0.25
    # bins per side used to measure the persistent radius level
    level_window: int = 3
    min_part_points: int = MIN_FIT_POINTS


def _radius_profile(pts: np.ndarray, frame: Pose, bins: int):
    local = frame.apply_inverse(pts)
    s = local[:, 0]
    r = np.hypot(local[:, 1], local[:, 2])
    edges = np.linspace(s.min(), s.max(), bins + 1)
    idx = np.clip(np.searchsorted(edges, s, side="right") - 1, 0, bins - 1)
    radius = np.zeros(bins)
    np.maximum.at(radius, idx, r)
    # empty bins inherit their neighbour so they don't fake a jump
    counts = np.bincount(idx, minlength=bins)
    for b in range(bins):
        if counts[b] == 0:
            radius[b] = radius[b - 1] if b > 0 else 0.0
    padded = np.concatenate([radius[:1], radius, radius[-1:]])
    smooth = (padded[:-2] + padded[1:-1] + padded[2:]) / 3.0
    return s, edges, smooth


def segment_tool(cloud: PointCloud, cfg: SegmentConfig = SegmentConfig()) -> list[PointCloud]:
    """Split a tool cloud into parts.

    Labelled clouds are split by label. Otherwise the radius profile along the
    first principal axis is scanned for its largest step; a split is made
    there if the step is persistent, giving exactly two parts ordered along
    the axis. Weak or lopsided splits fall back to a single part.
    """
    n = len(cloud)
    if n < MIN_SEGMENT_POINTS:
        raise CloudSizeError(f"segmentation needs at least {MIN_SEGMENT_POINTS} points, got {n}")
    if cloud.labels is not None:
        return [PointCloud(cloud.points[cloud.labels == lab]) for lab in np.unique(cloud.labels)]

    pts = cloud.points
    frame = pca_frame(cloud)
    s, edges, smooth = _radius_profile(pts, frame, cfg.bins)
    diffs = np.diff(smooth)
    b = int(np.argmax(np.abs(diffs))) + 1  # boundary between bins b-1 and b
    k = cfg.level_window
    left = smooth[max(0, b - k) : b]
    right = smooth[b : b + k]
    persistent = abs(float(np.median(right)) - float(np.median(left)))
    threshold = max(cfg.jump_ratio * float(np.median(np.abs(diffs))), cfg.min_relative_jump * float(smooth.max()))
    if persistent <= threshold:
        return [PointCloud(pts)]
    cut = edges[b]
    lower = s < cut
    if lower.sum() < cfg.min_part_points or (~lower).sum() < cfg.min_part_points:
        return [PointCloud(pts)]
    return [PointCloud(pts[lower]), PointCloud(pts[~lower])]


def split_boundary(cloud: PointCloud, cfg: SegmentConfig = SegmentConfig()) -> float | None:
    """Axis coordinate (in the PCA frame) where ``segment_tool`` would cut, or None."""
    parts = segment_tool(PointCloud(cloud.points), cfg)
    if len(parts) == 1:
        return None
    frame = pca_frame(cloud)
    return float(frame.apply_inverse(parts[1].points)[:, 0].min())


# ---------------------------------------------------------------- synthesis


def synth_cloud(model, n: int, noise_sigma: float = 0.0, seed: int = 0) -> PointCloud:
    """Sample ``n`` surface points of a shape model on its angular grid, plus Gaussian noise."""
    if n < MIN_FIT_POINTS:
        raise CloudSizeError(f"n must be >= {MIN_FIT_POINTS}")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    pts = model.pose.apply(model.local_surface_grid(n))
    if noise_sigma > 0:
        rng = np.random.default_rng(seed)
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    return PointCloud(pts)
