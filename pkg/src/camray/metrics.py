"""Trajectory and calibration metrics, alignment, rectified evaluation prep.

All trajectory metrics are computed on relative poses, T_i relative to
the first frame: T_i' = T_0^-1 T_i, which removes the arbitrary world
frame. Sequences are subsampled to a fixed number of uniformly spaced
indices before comparison (inclusive endpoints), each trajectory by its
own length, so clips of different frame counts compare consistently.

Reported quantities:

    RotErr  sum over samples of the geodesic angle (degrees) between
            relative rotations
    TransErr  sum of L2 distances between relative translations
    CamMC   sum of L2 distances between the flattened top 3x4 of the
            relative pose matrices

The yaw-constrained alignment solves min ||dst - (s R_yaw(theta) src + t)||^2
in closed form: only the rotation about the vertical axis is estimated,
which is the right gauge freedom for gravity-aligned reconstructions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import CameraModel, RectifyMap, rectify_map
from .errors import GeometryError, InputError
from .geometry import Pose, Rotation3, Trajectory, WORLD_UP, compose, rotation_angle
from .synthesis import bilinear_sample

DEFAULT_SAMPLES = 16


def subsample_indices(n_frames: int, n_samples: int = DEFAULT_SAMPLES) -> list:
    """Uniform inclusive-endpoint indices: round(i (N-1) / (n-1)).

    Rounding is half-up so the choice is deterministic; with n = 16 the
    ratio (N-1)/15 can never land exactly on .5. Clips shorter than
    n_samples yield repeated indices, which keeps the sample count fixed
    across clips of different lengths.
    """
    if n_frames < 1:
        raise InputError("trajectory must contain at least one frame")
    if n_samples < 2:
        raise InputError("need at least two samples")
    span = n_frames - 1
    return [int(np.floor(i * span / (n_samples - 1) + 0.5)) for i in range(n_samples)]


def relative_trajectory(traj: Trajectory) -> Trajectory:
    """Re-express every pose relative to the first: T_i' = T_0^-1 T_i."""
    inv0 = traj.frames[0][1].inverse()
    return Trajectory(tuple((idx, compose(inv0, p)) for idx, p in traj.frames))


def _subsampled_relative(traj: Trajectory, n_samples: int) -> list:
    poses = traj.poses()
    picked = [poses[i] for i in subsample_indices(len(poses), n_samples)]
    inv0 = picked[0].inverse()
    return [compose(inv0, p) for p in picked]


@dataclass(frozen=True)
class PoseMetrics:
    rot_err_deg: float
    trans_err: float
    cam_mc: float


def pose_metrics(
    gt: Trajectory, pred: Trajectory, n_samples: int = DEFAULT_SAMPLES
) -> PoseMetrics:
    """Summed relative-pose errors over subsampled, relativized frames."""
    g = _subsampled_relative(gt, n_samples)
    p = _subsampled_relative(pred, n_samples)
    rot = 0.0
    trans = 0.0
    mc = 0.0
    for pg, pp in zip(g, p):
        rot += np.degrees(rotation_angle(pg.rotation, pp.rotation))
        trans += float(np.linalg.norm(pg.translation - pp.translation))
        mc += float(np.linalg.norm(pg.matrix()[:3].ravel() - pp.matrix()[:3].ravel()))
    return PoseMetrics(rot, trans, mc)


def rotation_score(traj: Trajectory) -> float:
    """Largest rotation (degrees) of any frame away from the first frame."""
    poses = traj.poses()
    if len(poses) < 2:
        raise InputError("rotation score needs at least two frames")
    first = poses[0].rotation
    return max(np.degrees(rotation_angle(first, p.rotation)) for p in poses[1:])


@dataclass(frozen=True)
class YawAlignment:
    """Similarity restricted to yaw: dst ~ scale R_yaw(yaw_rad) src + t."""

    scale: float
    yaw_rad: float
    translation: np.ndarray
    rmse: float

    def rotation(self) -> Rotation3:
        return Rotation3.rot_y(self.yaw_rad)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.scale * self.rotation().apply(points) + self.translation


def align_yaw_umeyama(src, dst) -> YawAlignment:
    """Closed-form least-squares similarity with a yaw-only rotation.

    src and dst are (N, 3) point sets (per-frame camera centers). With
    centered points X, Y the objective separates: the vertical axis is
    untouched by a yaw, so vertical offsets land in t, and

        theta* = atan2(sum(Xz Yx - Xx Yz), sum(Xx Yx + Xz Yz))
        s*     = (hypot(A, B) + sum(Xy Yy)) / sum(||X||^2)

    Degenerate when all source points coincide (scale undefined) or the
    optimal scale is non-positive.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.shape != dst.shape or src.ndim != 2 or src.shape[1] != 3:
        raise InputError("point sets must both have shape (N, 3)")
    if src.shape[0] < 2:
        raise InputError("alignment needs at least two points")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    x = src - mu_s
    y = dst - mu_d
    a = float(np.sum(x[:, 0] * y[:, 0] + x[:, 2] * y[:, 2]))
    b = float(np.sum(x[:, 2] * y[:, 0] - x[:, 0] * y[:, 2]))
    c = float(np.sum(x[:, 1] * y[:, 1]))
    denom = float(np.sum(x * x))
    if denom <= 1e-24:
        raise GeometryError("all source points coincide; scale is undefined")
    theta = float(np.arctan2(b, a))
    scale = (float(np.hypot(a, b)) + c) / denom
    if scale <= 0.0:
        raise GeometryError("optimal scale is non-positive; alignment is degenerate")
    rot = Rotation3.rot_y(theta)
    t = mu_d - scale * rot.apply(mu_s)
    res = dst - (scale * src @ rot.m.T + t)
    rmse = float(np.sqrt(np.mean(np.sum(res * res, axis=-1))))
    return YawAlignment(scale, theta, t, rmse)


def wrap_angle_deg(x):
    """Wrap angles to [-180, 180)."""
    return (np.asarray(x, dtype=np.float64) + 180.0) % 360.0 - 180.0


def pitch_roll_from_rotation(rot: Rotation3) -> tuple[float, float]:
    """Gravity-referenced pitch and roll (degrees) of a camera rotation.

    pitch = asin of the forward axis's component toward world up,
    roll = angle of the camera x-axis against the horizon. Exact for
    rotations composed as intrinsic yaw -> pitch -> roll.
    """
    m = rot.m
    fwd_up = float(np.dot(m[:, 2], WORLD_UP))
    pitch = np.degrees(np.arcsin(np.clip(fwd_up, -1.0, 1.0)))
    roll = np.degrees(np.arctan2(m[1, 0], m[1, 1]))
    return float(pitch), float(roll)


@dataclass(frozen=True)
class CalibEstimate:
    """Per-clip calibration: per-frame pitch/roll plus scalar intrinsics."""

    pitch_deg: np.ndarray
    roll_deg: np.ndarray
    fov_deg: float
    k1: float = 0.0
    k2: float = 0.0

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.pitch_deg, dtype=np.float64))
        r = np.atleast_1d(np.asarray(self.roll_deg, dtype=np.float64))
        if p.shape != r.shape or p.ndim != 1:
            raise InputError("pitch and roll must be 1-D and equally long")
        object.__setattr__(self, "pitch_deg", p)
        object.__setattr__(self, "roll_deg", r)

    @staticmethod
    def from_trajectory(traj: Trajectory, fov_deg: float, k1: float = 0.0, k2: float = 0.0):
        pr = [pitch_roll_from_rotation(p.rotation) for p in traj.poses()]
        return CalibEstimate(
            np.array([x[0] for x in pr]), np.array([x[1] for x in pr]), fov_deg, k1, k2
        )


@dataclass(frozen=True)
class CalibErrors:
    pitch_deg: float
    roll_deg: float
    fov_deg: float
    k1: float
    k2: float


def calib_errors(gt: CalibEstimate, pred: CalibEstimate, reduce: str = "mean") -> CalibErrors:
    """Absolute calibration errors; angles wrapped to [-180, 180) first.

    Per-frame pitch/roll differences are reduced by mean (default) or
    sum; FoV and distortion errors are scalar absolute differences.
    """
    if reduce not in ("mean", "sum"):
        raise InputError("reduce must be 'mean' or 'sum'")
    if gt.pitch_deg.shape != pred.pitch_deg.shape:
        raise InputError("calibration estimates cover different frame counts")
    op = np.mean if reduce == "mean" else np.sum
    pitch = float(op(np.abs(wrap_angle_deg(pred.pitch_deg - gt.pitch_deg))))
    roll = float(op(np.abs(wrap_angle_deg(pred.roll_deg - gt.roll_deg))))
    return CalibErrors(
        pitch,
        roll,
        float(np.abs(wrap_angle_deg(pred.fov_deg - gt.fov_deg))),
        float(abs(pred.k1 - gt.k1)),
        float(abs(pred.k2 - gt.k2)),
    )


def prep_rectified(
    frames: list, cam: CameraModel, cap_deg: float = 100.0
) -> tuple[list, RectifyMap]:
    """Warp frames into the rectified pinhole view of :func:`rectify_map`.

    Returns (rectified float32 frames, the map). Pixels whose source ray
    leaves the model are zeroed; the map carries the shared mask and the
    destination camera for downstream scoring.
    """
    rmap = rectify_map(cam, cap_deg)
    out = []
    for frame in frames:
        src = np.asarray(frame)
        if src.ndim not in (2, 3) or src.shape[:2] != (cam.height, cam.width):
            raise InputError(
                "frame shape does not match the camera's height and width"
            )
        if src.dtype == np.uint8:
            src = src.astype(np.float64) / 255.0
        img = bilinear_sample(src, rmap.source_uv, wrap_x=False)
        img = np.where(rmap.valid[..., None], img, 0.0).astype(np.float32)
        out.append(img)
    return out, rmap


def psnr(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB over an optional pixel mask."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if mask is not None:
        a = a[mask]
        b = b[mask]
    if a.size == 0:
        raise InputError("psnr mask selects no pixels")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(peak * peak / mse))


def erode_mask(mask: np.ndarray, pixels: int) -> np.ndarray:
    """Shrink a boolean mask by a given number of 8-connected pixels."""
    out = np.asarray(mask, dtype=bool)
    for _ in range(pixels):
        padded = np.pad(out, 1, mode="constant", constant_values=False)
        out = (
            padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
            & padded[:-2, :-2] & padded[:-2, 2:] & padded[2:, :-2] & padded[2:, 2:]
            & out
        )
    return out
