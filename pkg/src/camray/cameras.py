"""Camera models: unified camera model (UCM), pinhole, equirectangular (ERP).

All models share the image convention from :mod:`camray.geometry`
(x right, y down, z forward) and place pixel centers at integer + 0.5,
so pixel (row r, col c) has continuous coordinates (u, v) = (c + 0.5,
r + 0.5). The principal point is fixed at the image center (W/2, H/2).

UCM projection of a camera-frame point p:

    r = ||p||,  beta = p_z + xi * r
    u = f * p_x / beta + c_x,  v = f * p_y / beta + c_y

valid only where beta > 0; for xi > 1 additionally r + xi * p_z >= 0,
which bounds the viewing angle at arccos(-1/xi) where the projection
stops being injective. xi = 0 reduces to the pinhole model exactly.

UCM unprojection of a pixel (the sphere lift): with normalized
coordinates x = (u - c_x)/f, y = (v - c_y)/f and rho^2 = x^2 + y^2,

    w = (xi + sqrt(1 + (1 - xi^2) rho^2)) / (rho^2 + 1)
    d = [x w, y w, w - xi]        (unit by construction)

valid where the square-root argument is non-negative; for xi > 1 this
is the image circle rho^2 <= 1 / (xi^2 - 1). The lift inverts the
projection exactly on its validity region.

The single focal (f_x = f_y) comes from the horizontal field of view:

    f = (W / 2) * (cos(gamma) + xi) / sin(gamma),  gamma = xfov / 2

so the horizontal edge of the image always sits exactly gamma off axis
regardless of distortion.

ERP maps directions to normalized coordinates in [0, 1):

    u' = (atan2(d_x, d_z) + pi) / (2 pi)      (wraps modulo 1)
    v' = (arcsin(d_y) + pi/2) / pi

and pixel coordinates are (u' W, v' H). With y down, v' = 0 is the
world-up pole, so panoramas keep the sky at the top row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, UnsupportedModelError
from .geometry import Pose

MODELS = ("pinhole", "ucm", "erp")

# Default horizontal-FoV cap used when rectifying to a pinhole view.
RECTIFY_CAP_DEG = 100.0


def focal_from_fov(xfov_deg: float, xi: float, width: int) -> float:
    """Focal length in pixels from horizontal FoV, distortion and width.

    Raises GeometryError when the half-angle reaches 180 degrees or when
    cos(xfov/2) + xi <= 0, where the edge of the field is no longer
    representable by the model.
    """
    gamma = np.radians(float(xfov_deg)) / 2.0
    if not (0.0 < gamma < np.pi):
        raise GeometryError(f"xfov {xfov_deg} deg out of range (0, 360)")
    c = np.cos(gamma) + float(xi)
    if c <= 0.0:
        raise GeometryError(
            f"focal undefined: cos(xfov/2) + xi = {c:.6f} <= 0 for "
            f"xfov={xfov_deg} deg, xi={xi}"
        )
    return float((width / 2.0) * c / np.sin(gamma))


@dataclass(frozen=True)
class CameraModel:
    """Camera intrinsics. ``pinhole`` is ``ucm`` with xi = 0.

    ERP cameras ignore ``xfov_deg`` and ``xi``; they always cover the
    full sphere.
    """

    model: str
    width: int
    height: int
    xfov_deg: float | None = None
    xi: float = 0.0

    def __post_init__(self):
        if self.model not in MODELS:
            raise GeometryError(f"unknown camera model {self.model!r}")
        if int(self.width) < 1 or int(self.height) < 1:
            raise GeometryError("image size must be at least 1x1")
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "xi", float(self.xi))
        if self.model == "erp":
            return
        if self.xfov_deg is None:
            raise GeometryError(f"{self.model} camera requires xfov_deg")
        object.__setattr__(self, "xfov_deg", float(self.xfov_deg))
        if self.model == "pinhole" and self.xi != 0.0:
            raise GeometryError("pinhole model requires xi = 0")
        if self.xi < 0.0:
            raise GeometryError("xi must be non-negative")
        # Validates the FoV/xi domain as a side effect.
        focal_from_fov(self.xfov_deg, self.xi, self.width)

    @property
    def cx(self) -> float:
        return self.width / 2.0

    @property
    def cy(self) -> float:
        return self.height / 2.0

    @property
    def focal(self) -> float:
        if self.model == "erp":
            raise GeometryError("erp cameras have no focal length")
        return focal_from_fov(self.xfov_deg, self.xi, self.width)

    def intrinsic_matrix(self) -> np.ndarray:
        """3x3 pinhole intrinsics [[f,0,cx],[0,f,cy],[0,0,1]] (not erp)."""
        f = self.focal
        return np.array([[f, 0, self.cx], [0, f, self.cy], [0, 0, 1]], dtype=np.float64)


def pixel_grid(width: int, height: int) -> np.ndarray:
    """(H, W, 2) array of pixel-center coordinates (col + 0.5, row + 0.5)."""
    u = np.arange(width, dtype=np.float64) + 0.5
    v = np.arange(height, dtype=np.float64) + 0.5
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


def unproject_many(cam: CameraModel, uv) -> tuple[np.ndarray, np.ndarray]:
    """Lift pixel coordinates (..., 2) to unit directions (..., 3).

    Returns (directions, valid). Invalid entries hold unit placeholders
    so downstream math stays finite; callers must honor the mask.
    """
    uv = np.asarray(uv, dtype=np.float64)
    if uv.shape[-1] != 2:
        raise GeometryError("pixel coordinates must have a trailing dim of 2")
    if cam.model == "erp":
        un = uv[..., 0] / cam.width
        vn = uv[..., 1] / cam.height
        lon = un * (2.0 * np.pi) - np.pi
        lat = vn * np.pi - np.pi / 2.0
        cl = np.cos(lat)
        d = np.stack([cl * np.sin(lon), np.sin(lat), cl * np.cos(lon)], axis=-1)
        valid = (vn >= 0.0) & (vn <= 1.0)
    else:
        f = cam.focal
        x = (uv[..., 0] - cam.cx) / f
        y = (uv[..., 1] - cam.cy) / f
        rho2 = x * x + y * y
        disc = 1.0 + (1.0 - cam.xi * cam.xi) * rho2
        valid = disc >= 0.0
        w = (cam.xi + np.sqrt(np.where(valid, disc, 0.0))) / (rho2 + 1.0)
        d = np.stack([x * w, y * w, w - cam.xi], axis=-1)
    norm = np.linalg.norm(d, axis=-1, keepdims=True)
    ok = norm[..., 0] > 0.0
    d = np.where(ok[..., None], d / np.where(ok[..., None], norm, 1.0), [0.0, 0.0, 1.0])
    valid = valid & ok
    d = np.where(valid[..., None], d, [0.0, 0.0, 1.0])
    return d, valid


def project_many(cam: CameraModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Project camera-frame points (..., 3) to pixel coordinates (..., 2).

    Returns (uv, valid). Projection is scale invariant: project(k p) ==
    project(p) for k > 0. Invalid entries hold zeros.
    """
    p = np.asarray(points, dtype=np.float64)
    if p.shape[-1] != 3:
        raise GeometryError("points must have a trailing dim of 3")
    r = np.linalg.norm(p, axis=-1)
    if cam.model == "erp":
        valid = r > 0.0
        safe_r = np.where(valid, r, 1.0)
        d = p / safe_r[..., None]
        lon = np.arctan2(d[..., 0], d[..., 2])
        lat = np.arcsin(np.clip(d[..., 1], -1.0, 1.0))
        un = np.mod((lon + np.pi) / (2.0 * np.pi), 1.0)
        vn = (lat + np.pi / 2.0) / np.pi
        uv = np.stack([un * cam.width, vn * cam.height], axis=-1)
    else:
        f = cam.focal
        beta = p[..., 2] + cam.xi * r
        valid = (r > 0.0) & (beta > 0.0)
        if cam.xi > 1.0:
            # Beyond arccos(-1/xi) the forward projection folds back into
            # the image circle and is no longer invertible.
            valid = valid & (r + cam.xi * p[..., 2] >= 0.0)
        safe = np.where(valid, beta, 1.0)
        uv = np.stack(
            [f * p[..., 0] / safe + cam.cx, f * p[..., 1] / safe + cam.cy], axis=-1
        )
    uv = np.where(valid[..., None], uv, 0.0)
    return uv, valid


def unproject(cam: CameraModel, pixel) -> np.ndarray:
    """Single-pixel lift to a unit direction; raises when out of model."""
    d, valid = unproject_many(cam, np.asarray(pixel, dtype=np.float64))
    if not np.all(valid):
        raise GeometryError(f"pixel {tuple(np.asarray(pixel))} is outside the {cam.model} model")
    return d


def project(cam: CameraModel, point) -> np.ndarray:
    """Single-point projection; raises for unprojectable points."""
    uv, valid = project_many(cam, np.asarray(point, dtype=np.float64))
    if not np.all(valid):
        raise GeometryError(
            f"point {tuple(np.asarray(point))} cannot be projected by the {cam.model} model"
        )
    return uv


@dataclass(frozen=True)
class RayMap:
    """Per-pixel world rays: unit directions (H, W, 3), shared origin, mask."""

    directions: np.ndarray
    origin: np.ndarray
    valid: np.ndarray


def ray_map(cam: CameraModel, pose: Pose) -> RayMap:
    """World-frame ray for every pixel center.

    Directions are camera-frame lifts rotated by pose.rotation; every
    origin is pose.translation. Invalid pixels (outside the lift's
    validity region) are masked.
    """
    grid = pixel_grid(cam.width, cam.height)
    d_cam, valid = unproject_many(cam, grid)
    d_world = pose.rotation.apply(d_cam)
    return RayMap(d_world, pose.translation.copy(), valid)


@dataclass(frozen=True)
class RectifyMap:
    """Backward warp from a pinhole view into a source camera's image."""

    source_uv: np.ndarray
    valid: np.ndarray
    dst_cam: CameraModel


def rectify_map(cam: CameraModel, cap_deg: float = RECTIFY_CAP_DEG) -> RectifyMap:
    """Map each pixel of a rectified pinhole view to source coordinates.

    The destination camera is a pinhole with xfov = min(cam.xfov, cap)
    and the source's width/height. Each destination pixel is lifted with
    the pinhole model and projected with the source model; pixels whose
    ray leaves the source model or lands outside its image are masked.
    """
    if cam.model == "erp":
        raise UnsupportedModelError("rectification requires a ucm or pinhole source")
    if not (0.0 < cap_deg < 180.0):
        raise GeometryError("rectification FoV cap must lie in (0, 180) degrees")
    dst = CameraModel(
        "pinhole", cam.width, cam.height, xfov_deg=min(cam.xfov_deg, cap_deg)
    )
    grid = pixel_grid(dst.width, dst.height)
    d, _ = unproject_many(dst, grid)
    uv_src, ok = project_many(cam, d)
    inside = (
        (uv_src[..., 0] >= 0.0)
        & (uv_src[..., 0] <= cam.width)
        & (uv_src[..., 1] >= 0.0)
        & (uv_src[..., 1] <= cam.height)
    )
    valid = ok & inside
    return RectifyMap(np.where(valid[..., None], uv_src, 0.0), valid, dst)
