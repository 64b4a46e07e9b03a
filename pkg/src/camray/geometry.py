"""Rigid-motion primitives: rotations, poses, rays, Plucker coordinates.

Conventions used throughout the toolkit:

  * Right-handed camera frame with x right, y down, z forward
    (image convention). World up is therefore ``[0, -1, 0]``.
  * Rotations are 3x3 orthonormal matrices with determinant +1.
  * Poses are camera-to-world transforms ``T_wc = [R | t]`` unless a
    name explicitly says otherwise.
  * All math is float64. Angles are radians unless a name carries a
    ``_deg`` suffix.

Validation tolerances: rotation orthonormality 1e-9, unit vectors 1e-9,
Rodrigues axis unit-norm rejection 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

WORLD_UP = np.array([0.0, -1.0, 0.0])

_ORTHO_TOL = 1e-9
_UNIT_TOL = 1e-9


def _vec3(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.shape != (3,):
        raise GeometryError(f"{name} must be a 3-vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Rotation3:
    """A 3D rotation stored as an orthonormal matrix with det +1."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise GeometryError(f"rotation matrix must be 3x3, got {m.shape}")
        if not np.allclose(m @ m.T, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise GeometryError("rotation matrix is not orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > 1e-8:
            raise GeometryError("rotation matrix determinant is not +1")
        object.__setattr__(self, "m", m)

    @staticmethod
    def identity() -> "Rotation3":
        return Rotation3(np.eye(3))

    @staticmethod
    def rot_x(angle: float) -> "Rotation3":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation3(np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64))

    @staticmethod
    def rot_y(angle: float) -> "Rotation3":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation3(np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64))

    @staticmethod
    def rot_z(angle: float) -> "Rotation3":
        c, s = np.cos(angle), np.sin(angle)
        return Rotation3(np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64))

    @staticmethod
    def from_axis_angle(axis, angle: float) -> "Rotation3":
        """Rotation about a unit axis. The axis norm must be 1 within 1e-6."""
        k = _vec3(axis, "axis")
        if abs(np.linalg.norm(k) - 1.0) > 1e-6:
            raise GeometryError("rotation axis must be unit length within 1e-6")
        kx = np.array(
            [[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]], dtype=np.float64
        )
        m = np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)
        return Rotation3(m)

    @staticmethod
    def random(rng: np.random.Generator) -> "Rotation3":
        """Uniform random rotation from a normalized random quaternion."""
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        w, x, y, z = q
        m = np.array(
            [
                [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
            ]
        )
        return Rotation3(m)

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Rotate vectors of shape (..., 3)."""
        return np.asarray(v, dtype=np.float64) @ self.m.T

    def compose(self, other: "Rotation3") -> "Rotation3":
        return Rotation3(self.m @ other.m)

    def __matmul__(self, other: "Rotation3") -> "Rotation3":
        return self.compose(other)

    def inverse(self) -> "Rotation3":
        return Rotation3(self.m.T)


@dataclass(frozen=True)
class Pose:
    """Camera-to-world rigid transform ``p_world = R p_cam + t``."""

    rotation: Rotation3
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "translation", _vec3(self.translation, "translation"))

    @staticmethod
    def identity() -> "Pose":
        return Pose(Rotation3.identity(), np.zeros(3))

    @staticmethod
    def from_matrix(T) -> "Pose":
        T = np.asarray(T, dtype=np.float64)
        if T.shape != (4, 4):
            raise GeometryError(f"pose matrix must be 4x4, got {T.shape}")
        if not np.allclose(T[3], [0, 0, 0, 1], atol=1e-9):
            raise GeometryError("pose matrix bottom row must be [0, 0, 0, 1]")
        return Pose(Rotation3(T[:3, :3]), T[:3, 3])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation.m
        T[:3, 3] = self.translation
        return T

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation.apply(p) + self.translation

    def inverse(self) -> "Pose":
        rinv = self.rotation.inverse()
        return Pose(rinv, -rinv.apply(self.translation))

    # Camera axes expressed in the world frame. With y down, the camera's
    # down direction is its +y axis.
    def right_axis(self) -> np.ndarray:
        return self.rotation.m[:, 0].copy()

    def down_axis(self) -> np.ndarray:
        return self.rotation.m[:, 1].copy()

    def forward_axis(self) -> np.ndarray:
        return self.rotation.m[:, 2].copy()


@dataclass(frozen=True)
class Ray:
    """World-space ray with a unit direction (checked within 1e-9)."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", _vec3(self.origin, "origin"))
        d = _vec3(self.direction, "direction")
        if abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise GeometryError("ray direction must be unit length within 1e-9")
        object.__setattr__(self, "direction", d)

    @staticmethod
    def unit(origin, direction) -> "Ray":
        """Build a ray, normalizing the direction first."""
        d = _vec3(direction, "direction")
        n = np.linalg.norm(d)
        if n == 0.0:
            raise GeometryError("ray direction must be nonzero")
        return Ray(origin, d / n)


@dataclass(frozen=True)
class PluckerCoords:
    """Plucker line coordinates (direction d, moment m = o x d), d . m = 0."""

    direction: np.ndarray
    moment: np.ndarray

    def __post_init__(self):
        d = _vec3(self.direction, "direction")
        m = _vec3(self.moment, "moment")
        if abs(float(d @ m)) > _UNIT_TOL:
            raise GeometryError("Plucker coordinates must satisfy d . m = 0 within 1e-9")
        object.__setattr__(self, "direction", d)
        object.__setattr__(self, "moment", m)


@dataclass(frozen=True)
class Trajectory:
    """Ordered sequence of (frame index, camera-to-world pose)."""

    frames: tuple

    def __post_init__(self):
        entries = []
        for item in self.frames:
            idx, pose = item
            if not isinstance(pose, Pose):
                raise GeometryError("trajectory entries must be (index, Pose)")
            entries.append((int(idx), pose))
        if len(entries) == 0:
            raise GeometryError("trajectory must contain at least one frame")
        indices = [i for i, _ in entries]
        if sorted(indices) != indices:
            raise GeometryError("trajectory frame indices must be non-decreasing")
        object.__setattr__(self, "frames", tuple(entries))

    def __len__(self) -> int:
        return len(self.frames)

    def poses(self) -> list:
        return [p for _, p in self.frames]

    def indices(self) -> list:
        return [i for i, _ in self.frames]


def compose(a: Pose, b: Pose) -> Pose:
    """Compose rigid transforms: (a o b).apply(p) == a.apply(b.apply(p))."""
    return Pose(a.rotation @ b.rotation, a.rotation.apply(b.translation) + a.translation)


def rodrigues(axis, angle: float, v) -> np.ndarray:
    """Rotate vectors v of shape (..., 3) about a unit axis by angle.

    Uses v cos(a) + (k x v) sin(a) + k (k . v)(1 - cos(a)). Rejects axes
    whose norm deviates from 1 by more than 1e-6.
    """
    k = _vec3(axis, "axis")
    if abs(np.linalg.norm(k) - 1.0) > 1e-6:
        raise GeometryError("rotation axis must be unit length within 1e-6")
    v = np.asarray(v, dtype=np.float64)
    c, s = np.cos(angle), np.sin(angle)
    kxv = np.cross(np.broadcast_to(k, v.shape), v)
    kdv = np.sum(k * v, axis=-1, keepdims=True)
    return v * c + kxv * s + k * kdv * (1.0 - c)


def plucker(ray: Ray) -> PluckerCoords:
    """Plucker coordinates of a ray: (d, o x d)."""
    return PluckerCoords(ray.direction, np.cross(ray.origin, ray.direction))


def rotation_angle(a: Rotation3, b: Rotation3) -> float:
    """Geodesic angle in radians between two rotations.

    Uses atan2 of the skew-symmetric part's norm against the trace term
    instead of plain arccos: arccos((tr - 1) / 2) loses half the floating
    point precision near 0 and pi, which matters when callers assert that
    identical rotations score exactly zero.
    """
    m = a.m.T @ b.m
    sin_term = 0.5 * float(
        np.linalg.norm(
            [m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]
        )
    )
    cos_term = 0.5 * (float(np.trace(m)) - 1.0)
    return float(np.arctan2(sin_term, cos_term))
