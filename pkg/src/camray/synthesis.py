"""Panoramic training-view synthesis: sampling, augmentation, rendering.

Virtual cameras are drawn from four lens categories (horizontal FoV in
degrees, UCM xi):

    pinhole  [ 90, 110] x [0, 0]
    wide     [110, 140] x [0.50, 0.95]
    fisheye  [140, 180] x [1.05, 2.00]
    extreme  [160, 200] x [1.50, 2.30]

Rotation augmentation modes, composed onto a base rotation sequence in
the world frame (yaw about world up, then pitch, then roll, intrinsic
order):

    yaw        one yaw offset in [-180, 180] for the whole clip
    yaw_pitch  yaw in [-180, 180] plus pitch in [-80, 80], whole clip
    pan        per-frame smoothstep interpolation between start and end
               offsets, yaw [-90, 90], pitch [-40, 40], roll [-30, 30]

Rendering lifts every virtual-camera pixel, rotates the ray by the
frame's augmentation rotation into the panorama frame, and samples the
equirectangular image bilinearly (horizontal wrap, vertical clamp).

All randomness flows through a Philox 4x64-10 counter-based generator
(numpy's ``np.random.Philox``) seeded per run, with a fixed draw order
documented on each sampler, so outputs are reproducible bit for bit.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .cameras import CameraModel, pixel_grid, project_many, unproject_many
from .errors import InputError
from .geometry import WORLD_UP, Pose, Rotation3, Trajectory

THREADS_ENV_VAR = "CAMRAY_THREADS"


@dataclass(frozen=True)
class LensCategory:
    name: str
    xfov_range_deg: tuple
    xi_range: tuple


LENS_CATEGORIES = {
    "pinhole": LensCategory("pinhole", (90.0, 110.0), (0.0, 0.0)),
    "wide": LensCategory("wide", (110.0, 140.0), (0.5, 0.95)),
    "fisheye": LensCategory("fisheye", (140.0, 180.0), (1.05, 2.0)),
    "extreme": LensCategory("extreme", (160.0, 200.0), (1.5, 2.3)),
}


def make_rng(seed: int) -> np.random.Generator:
    """The toolkit's deterministic generator (Philox 4x64-10)."""
    return np.random.Generator(np.random.Philox(seed))


def resolve_threads(threads: int | None = None) -> int:
    """Thread count from the argument, then CAMRAY_THREADS, then 1."""
    if threads is None:
        env = os.environ.get(THREADS_ENV_VAR, "").strip()
        try:
            threads = int(env) if env else 1
        except ValueError:
            raise InputError(f"{THREADS_ENV_VAR} must be an integer, got {env!r}")
    if threads < 1:
        raise InputError("thread count must be at least 1")
    return threads


def sample_camera(
    category: str,
    rng: np.random.Generator,
    width: int = 832,
    height: int = 480,
) -> CameraModel:
    """Draw a camera from a lens category. Draw order: xfov, then xi."""
    if category not in LENS_CATEGORIES:
        raise InputError(f"unknown lens category {category!r}")
    cat = LENS_CATEGORIES[category]
    xfov = float(rng.uniform(*cat.xfov_range_deg))
    xi = float(rng.uniform(*cat.xi_range))
    model = "pinhole" if cat.name == "pinhole" else "ucm"
    return CameraModel(model, width, height, xfov_deg=xfov, xi=xi)


@dataclass(frozen=True)
class AugmentationMode:
    """Augmentation mode plus its (overridable) sampling ranges in degrees."""

    mode: str
    yaw_range_deg: tuple = None
    pitch_range_deg: tuple = None
    roll_range_deg: tuple = None

    _DEFAULTS = {
        "none": ((0.0, 0.0), (0.0, 0.0), (0.0, 0.0)),
        "yaw": ((-180.0, 180.0), (0.0, 0.0), (0.0, 0.0)),
        "yaw_pitch": ((-180.0, 180.0), (-80.0, 80.0), (0.0, 0.0)),
        "pan": ((-90.0, 90.0), (-40.0, 40.0), (-30.0, 30.0)),
    }

    def __post_init__(self):
        if self.mode not in self._DEFAULTS:
            raise InputError(f"unknown augmentation mode {self.mode!r}")
        defaults = self._DEFAULTS[self.mode]
        for name, default in zip(
            ("yaw_range_deg", "pitch_range_deg", "roll_range_deg"), defaults
        ):
            value = getattr(self, name)
            value = default if value is None else (float(value[0]), float(value[1]))
            if value[0] > value[1]:
                raise InputError(f"{name} must be (lo, hi) with lo <= hi")
            object.__setattr__(self, name, value)


def _offset_rotation(yaw_deg: float, pitch_deg: float, roll_deg: float) -> Rotation3:
    # Intrinsic yaw -> pitch -> roll: yaw about world up, pitch about the
    # camera x-axis (positive looks up), roll about the camera z-axis.
    r = Rotation3.from_axis_angle(WORLD_UP, np.radians(yaw_deg))
    r = r @ Rotation3.rot_x(np.radians(pitch_deg))
    return r @ Rotation3.rot_z(np.radians(roll_deg))


def smoothstep(t: np.ndarray) -> np.ndarray:
    """3t^2 - 2t^3 on [0, 1]: C1 ease between endpoints."""
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def augment_rotations(
    base: list, mode: AugmentationMode, rng: np.random.Generator
) -> list:
    """Compose sampled offset rotations onto a base rotation sequence.

    Offsets act in the world frame (left-composed). Draw order: yaw for
    all modes; then pitch for yaw_pitch; pan draws (start, end) pairs
    for yaw, pitch, roll in that order. Frame 0 of a pan carries the
    start offsets exactly and the last frame the end offsets. Mode
    "none" consumes no draws and returns the base unchanged.
    """
    n = len(base)
    if n == 0:
        raise InputError("augmentation requires at least one frame")
    if mode.mode == "none":
        return list(base)
    if mode.mode == "yaw":
        r_off = _offset_rotation(float(rng.uniform(*mode.yaw_range_deg)), 0.0, 0.0)
        return [r_off @ b for b in base]
    if mode.mode == "yaw_pitch":
        yaw = float(rng.uniform(*mode.yaw_range_deg))
        pitch = float(rng.uniform(*mode.pitch_range_deg))
        r_off = _offset_rotation(yaw, pitch, 0.0)
        return [r_off @ b for b in base]
    y0, y1 = rng.uniform(*mode.yaw_range_deg, size=2)
    p0, p1 = rng.uniform(*mode.pitch_range_deg, size=2)
    r0, r1 = rng.uniform(*mode.roll_range_deg, size=2)
    t = np.zeros(n) if n == 1 else np.arange(n) / (n - 1)
    w = smoothstep(t)
    out = []
    for i, b in enumerate(base):
        r_off = _offset_rotation(
            y0 + (y1 - y0) * w[i], p0 + (p1 - p0) * w[i], r0 + (r1 - r0) * w[i]
        )
        out.append(r_off @ b)
    return out


def compose_virtual_pose(erp_pose: Pose, r_aug: Rotation3) -> Pose:
    """Virtual camera pose: rotation composed, translation inherited."""
    return Pose(erp_pose.rotation @ r_aug, erp_pose.translation)


def bilinear_sample(
    image: np.ndarray, uv: np.ndarray, wrap_x: bool = False
) -> np.ndarray:
    """Sample an (H, W, C) image at continuous pixel coordinates (..., 2).

    Pixel centers sit at integer + 0.5. Horizontal indices wrap when
    wrap_x is set (panoramas), otherwise clamp; vertical always clamps.
    """
    img = np.asarray(image, dtype=np.float64)
    squeeze = img.ndim == 2
    if squeeze:
        img = img[..., None]
    h, w = img.shape[:2]
    x = np.asarray(uv[..., 0], dtype=np.float64) - 0.5
    y = np.asarray(uv[..., 1], dtype=np.float64) - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    fx = (x - x0)[..., None]
    fy = (y - y0)[..., None]
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1
    if wrap_x:
        x0 %= w
        x1 %= w
    else:
        x0 = np.clip(x0, 0, w - 1)
        x1 = np.clip(x1, 0, w - 1)
    y0 = np.clip(y0, 0, h - 1)
    y1 = np.clip(y1, 0, h - 1)
    top = img[y0, x0] * (1.0 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1.0 - fx) + img[y1, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out[..., 0] if squeeze else out


def _row_bands(height: int, threads: int) -> list:
    bounds = np.linspace(0, height, threads + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def render_view(
    erp_image: np.ndarray,
    cam: CameraModel,
    r_aug: Rotation3,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Render a virtual-camera view out of one equirectangular frame.

    Returns (image, valid): float32 image in the panorama's value range,
    zeros outside the camera model's validity region. The row bands
    rendered per thread are disjoint and every pixel is independent, so
    output is identical for any thread count.
    """
    src = np.asarray(erp_image)
    if src.dtype == np.uint8:
        src = src.astype(np.float64) / 255.0
    else:
        src = src.astype(np.float64)
    if src.ndim == 2:
        src = src[..., None]
    erp_cam = CameraModel("erp", src.shape[1], src.shape[0])
    threads = resolve_threads(threads)
    out = np.zeros((cam.height, cam.width, src.shape[2]), dtype=np.float32)
    valid = np.zeros((cam.height, cam.width), dtype=bool)
    grid = pixel_grid(cam.width, cam.height)

    def run_band(r0: int, r1: int):
        d_cam, ok = unproject_many(cam, grid[r0:r1])
        d_erp = r_aug.apply(d_cam)
        uv, _ = project_many(erp_cam, d_erp)
        band = bilinear_sample(src, uv, wrap_x=True)
        out[r0:r1] = np.where(ok[..., None], band, 0.0).astype(np.float32)
        valid[r0:r1] = ok

    bands = _row_bands(cam.height, threads)
    if threads == 1 or len(bands) == 1:
        for r0, r1 in bands:
            run_band(r0, r1)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run_band(*b), bands))
    return out, valid


@dataclass(frozen=True)
class RenderJob:
    """One clip's worth of rendering inputs, counts validated."""

    erp_frames: list
    trajectory: Trajectory
    camera: CameraModel
    aug_rotations: list

    def __post_init__(self):
        n = len(self.erp_frames)
        if not (len(self.trajectory) == len(self.aug_rotations) == n):
            raise InputError(
                f"frame counts differ: {n} images, {len(self.trajectory)} poses, "
                f"{len(self.aug_rotations)} augmentation rotations"
            )
        if n == 0:
            raise InputError("render job requires at least one frame")


def iter_render_job(job: RenderJob, threads: int | None = None):
    """Yield (index, image, valid, virtual_pose) per frame of a job."""
    for (idx, erp_pose), frame, r_aug in zip(
        job.trajectory.frames, job.erp_frames, job.aug_rotations
    ):
        image, valid = render_view(frame, job.camera, r_aug, threads)
        yield idx, image, valid, compose_virtual_pose(erp_pose, r_aug)


def normalize_scale(traj: Trajectory, depths: list) -> tuple[Trajectory, float]:
    """Divide trajectory translations by a robust scene-depth scale.

    The scale is the median over frames of each frame's 25th percentile
    of valid depths (finite and positive); percentiles interpolate
    linearly between order statistics. Raises when any frame has no
    valid depth or when counts differ.
    """
    if len(depths) != len(traj):
        raise InputError(
            f"depth count {len(depths)} does not match trajectory length {len(traj)}"
        )
    quartiles = []
    for i, depth in enumerate(depths):
        d = np.asarray(depth, dtype=np.float64).ravel()
        vals = d[np.isfinite(d) & (d > 0.0)]
        if vals.size == 0:
            raise InputError(f"frame {traj.frames[i][0]} has no valid depths")
        quartiles.append(np.percentile(vals, 25.0))
    scale = float(np.median(quartiles))
    if scale <= 0.0:
        raise InputError("depth scale must be positive")
    frames = [(idx, Pose(p.rotation, p.translation / scale)) for idx, p in traj.frames]
    return Trajectory(tuple(frames)), scale


# ---------------------------------------------------------------------------
# Analytic panoramas. These give a closed-form value for any direction,
# which is what makes dual-route render checks possible: rasterize once,
# render through a camera, and compare against direct evaluation.


def erp_normalized_coords(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Normalized ERP coordinates (u', v') in [0, 1) x [0, 1] for unit d."""
    un = np.mod((np.arctan2(d[..., 0], d[..., 2]) + np.pi) / (2.0 * np.pi), 1.0)
    vn = (np.arcsin(np.clip(d[..., 1], -1.0, 1.0)) + np.pi / 2.0) / np.pi
    return un, vn


def checker_direction_value(d: np.ndarray, cells_u: int = 16, cells_v: int = 8) -> np.ndarray:
    """Spherical checkerboard: cell parity in normalized ERP coordinates."""
    un, vn = erp_normalized_coords(d)
    iu = np.floor(un * cells_u).astype(np.int64)
    iv = np.minimum(np.floor(vn * cells_v), cells_v - 1).astype(np.int64)
    return ((iu + iv) % 2).astype(np.float64)


def checkerboard_panorama(
    width: int = 2048, height: int = 1024, cells_u: int = 16, cells_v: int = 8
) -> np.ndarray:
    """Rasterized spherical checkerboard, (H, W, 1) float32 in {0, 1}."""
    grid = pixel_grid(width, height)
    cam = CameraModel("erp", width, height)
    d, _ = unproject_many(cam, grid)
    return checker_direction_value(d, cells_u, cells_v)[..., None].astype(np.float32)


def harmonic_direction_value(d: np.ndarray) -> np.ndarray:
    """Smooth band-limited RGB function of direction, values in [0, 1]."""
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    r = 0.5 + 0.5 * np.sin(2.0 * x + 0.7 * z)
    g = 0.5 + 0.5 * np.cos(1.5 * y - 0.4 * x + 0.3)
    b = 0.5 + 0.5 * np.sin(1.3 * z + 1.1 * y - 0.5)
    return np.stack([r, g, b], axis=-1)


def harmonic_panorama(width: int = 2048, height: int = 1024) -> np.ndarray:
    """Rasterized smooth panorama, (H, W, 3) float32 in [0, 1]."""
    grid = pixel_grid(width, height)
    cam = CameraModel("erp", width, height)
    d, _ = unproject_many(cam, grid)
    return harmonic_direction_value(d).astype(np.float32)
