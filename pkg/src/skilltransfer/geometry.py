"""Rigid-body helpers: poses, SO(3) exponential map, quaternions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9


def hat(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def so3_exp(w) -> np.ndarray:
    """Rodrigues' formula for the rotation matrix of rotation vector ``w``."""
    w = np.asarray(w, dtype=float)
    theta = float(np.sqrt(w @ w))
    K = hat(w)
    if theta < 1e-8:
        # second-order Taylor expansion; exact to machine precision here
        return np.eye(3) + K + 0.5 * (K @ K)
    return np.eye(3) + (np.sin(theta) / theta) * K + ((1.0 - np.cos(theta)) / theta**2) * (K @ K)


def so3_log(R: np.ndarray) -> np.ndarray:
    c = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = float(np.arccos(c))
    if theta < 1e-8:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) / 2.0
    if np.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / np.sqrt(B[k, k])
        return axis * theta
    v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return v * (theta / (2.0 * np.sin(theta)))


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) with w >= 0."""
    m = R
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quaternion_to_rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def orthonormalize(R: np.ndarray) -> np.ndarray:
    """Closest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(R)
    M = U @ Vt
    if np.linalg.det(M) < 0:
        U[:, -1] *= -1
        M = U @ Vt
    return M


@dataclass(frozen=True)
class Pose:
    """Rigid transform mapping body-frame coordinates into the world: ``p_w = R p_b + t``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("pose has non-finite entries")
        if np.abs(R.T @ R - np.eye(3)).max() > ORTHO_TOL or np.linalg.det(R) < 0:
            raise ValueError("rotation is not a proper orthonormal frame")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_quaternion(cls, q, translation) -> "Pose":
        return cls(quaternion_to_rotation(q), translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation) -> "Pose":
        return cls(so3_exp(rotvec), translation)

    @property
    def quaternion(self) -> np.ndarray:
        return rotation_to_quaternion(self.rotation)

    def apply(self, p) -> np.ndarray:
        """Map body point(s) of shape (3,) or (N, 3) into the world."""
        p = np.asarray(p, dtype=float)
        return p @ self.rotation.T + self.translation

    def apply_inverse(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return (p - self.translation) @ self.rotation

    def rotate(self, d) -> np.ndarray:
        return np.asarray(d, dtype=float) @ self.rotation.T

    def compose(self, other: "Pose") -> "Pose":
        return Pose(orthonormalize(self.rotation @ other.rotation), self.apply(other.translation))

    def inverse(self) -> "Pose":
        return Pose(self.rotation.T, -self.rotation.T @ self.translation)

    def retract(self, xi) -> "Pose":
        """Advance by body-frame increment ``xi = (dv, dw)``: translate first, then rotate."""
        xi = np.asarray(xi, dtype=float)
        R = self.rotation
        return _unchecked_pose(R @ so3_exp(xi[3:]), self.translation + R @ xi[:3])

    def to_dict(self) -> dict:
        return {
            "quaternion": [float(v) for v in self.quaternion],
            "translation": [float(v) for v in self.translation],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Pose":
        return cls.from_quaternion(d["quaternion"], d["translation"])

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(
            np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def _unchecked_pose(R: np.ndarray, t: np.ndarray) -> Pose:
    # Hot path for integration and finite differences. Products of rotation
    # matrices drift by ~1e-16 per step; re-project once the drift gets visible.
    if abs(R[:, 0] @ R[:, 0] - 1.0) > 1e-12 or abs(R[:, 0] @ R[:, 1]) > 1e-12:
        R = orthonormalize(R)
    pose = object.__new__(Pose)
    R = np.array(R, dtype=float)
    t = np.array(t, dtype=float)
    R.setflags(write=False)
    t.setflags(write=False)
    object.__setattr__(pose, "rotation", R)
    object.__setattr__(pose, "translation", t)
    return pose


def normalize(v, eps: float = 1e-12) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = float(np.linalg.norm(v))
    if n < eps:
        raise ValueError("cannot normalize a zero vector")
    return v / n
