"""Camera-aware token encodings: ray frames, lat/up maps, RoPE angles.

A ray frame attaches an orthonormal world-space basis to every pixel or
token ray: z along the ray direction, x = normalize(cam_down x z),
y = z x x, with the camera's optical center as origin. The camera-down
vector is the camera y-axis expressed in the world frame (y points down
in the image convention). When the ray is parallel to camera-down the
frame falls back to x = normalize(cam_right x z), then to the world
x-axis; thresholds are 1e-6 on the cross-product norm.

The latitude map stores the elevation of each pixel ray against gravity:

    lat = atan2(-d_y, sqrt(d_x^2 + d_z^2))      (world up = [0, -1, 0])

positive when the ray looks above the horizon. The up map stores the
normalized image-space displacement obtained by rotating each world ray
by a small angle delta (degrees) about the axis d x up, i.e. toward
world up, and reprojecting through the same camera. Both maps depend
only on camera elevation and roll, never on yaw.

Token operators pack what attention needs per token: a 4x4 block acting
on 4-chunks of the head dimension (a rigid or projective transform) and
a list of rotation angles acting on 2-chunks (axial 2D RoPE over the
token's grid position).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import CameraModel, pixel_grid, project_many, ray_map, unproject_many
from .errors import GeometryError, UnsupportedModelError
from .geometry import WORLD_UP, Pose, Ray, Rotation3, rodrigues

ENCODING_KINDS = ("cape", "gta", "prope", "ucpe_ray", "ucpe_hybrid")

# Fraction of the head dim given to the 4x4 blocks; the rest is RoPE.
DEFAULT_RAY_FRACTION = {
    "cape": 1.0,
    "gta": 0.5,
    "prope": 0.5,
    "ucpe_ray": 1.0,
    "ucpe_hybrid": 0.5,
}

DEFAULT_ROPE_BASE = 10000.0
DEFAULT_UP_DELTA_DEG = 0.1

_DEGENERATE_TOL = 1e-6


@dataclass(frozen=True)
class RayFrame:
    """Orthonormal world basis attached to a ray: columns [x, y, z]."""

    rotation: np.ndarray
    origin: np.ndarray

    def as_pose(self) -> Pose:
        """The ray-to-world transform T_wr."""
        return Pose(Rotation3(self.rotation), self.origin)


def _frame_rotations(z: np.ndarray, down: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Vectorized ray-frame rotations R_wr for unit z of shape (N, 3)."""
    x_raw = np.cross(down, z)
    n1 = np.linalg.norm(x_raw, axis=-1, keepdims=True)
    alt = np.cross(right, z)
    n2 = np.linalg.norm(alt, axis=-1, keepdims=True)
    x_raw = np.where(n1 > _DEGENERATE_TOL, x_raw, alt)
    n = np.where(n1 > _DEGENERATE_TOL, n1, n2)
    world_x = np.broadcast_to(np.array([1.0, 0.0, 0.0]), z.shape)
    x_raw = np.where(n > _DEGENERATE_TOL, x_raw, world_x)
    n = np.where(n > _DEGENERATE_TOL, n, 1.0)
    x = x_raw / n
    y = np.cross(z, x)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    y = y / np.where(ny > 0.0, ny, 1.0)
    # Re-orthogonalize x; a no-op whenever x was already orthogonal to z.
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=-1)


def ray_frame(ray: Ray, cam_down, cam_right=None) -> RayFrame:
    """Frame for a single ray given the camera's world-space down axis."""
    down = np.asarray(cam_down, dtype=np.float64).reshape(1, 3)
    if cam_right is None:
        # Without a camera right axis the secondary fallback degrades
        # directly to the world x-axis.
        right = np.broadcast_to(np.array([1.0, 0.0, 0.0]), (1, 3))
    else:
        right = np.asarray(cam_right, dtype=np.float64).reshape(1, 3)
    rot = _frame_rotations(ray.direction.reshape(1, 3), down, right)[0]
    return RayFrame(rot, ray.origin.copy())


@dataclass(frozen=True)
class TokenGrid:
    """Token layout: grid indices, camera assignment, sample pixels.

    Tokens are indexed by (frame, row, col); ``cam`` holds the index of
    each token's camera, ``uv`` the continuous pixel coordinates of the
    token's sample point (patch center).
    """

    frame: np.ndarray
    row: np.ndarray
    col: np.ndarray
    cam: np.ndarray
    uv: np.ndarray

    def __post_init__(self):
        for name in ("frame", "row", "col", "cam"):
            arr = np.asarray(getattr(self, name), dtype=np.int64)
            if arr.ndim != 1:
                raise GeometryError(f"TokenGrid.{name} must be 1-D")
            object.__setattr__(self, name, arr)
        uv = np.asarray(self.uv, dtype=np.float64)
        n = self.frame.shape[0]
        if not (self.row.shape[0] == self.col.shape[0] == self.cam.shape[0] == n):
            raise GeometryError("TokenGrid fields must share one length")
        if uv.shape != (n, 2):
            raise GeometryError("TokenGrid.uv must have shape (tokens, 2)")
        object.__setattr__(self, "uv", uv)

    def __len__(self) -> int:
        return int(self.frame.shape[0])

    @staticmethod
    def regular(
        n_frames: int,
        rows: int,
        cols: int,
        width: int,
        height: int,
        cam_of_frame=None,
    ) -> "TokenGrid":
        """Rows x cols patch grid per frame; camera i for frame i by default."""
        f, r, c = np.meshgrid(
            np.arange(n_frames), np.arange(rows), np.arange(cols), indexing="ij"
        )
        f, r, c = f.ravel(), r.ravel(), c.ravel()
        u = (c + 0.5) * (width / cols)
        v = (r + 0.5) * (height / rows)
        cam = f if cam_of_frame is None else np.asarray(cam_of_frame)[f]
        return TokenGrid(f, r, c, cam, np.stack([u, v], axis=-1))


def _tokens_per_camera(cams, poses, grid: TokenGrid):
    """Yield (token indices, cam, pose) for each camera used by the grid."""
    if len(cams) != len(poses):
        raise GeometryError("cams and poses must have equal length")
    for ci in np.unique(grid.cam):
        if ci < 0 or ci >= len(cams):
            raise GeometryError(f"token camera index {ci} out of range")
        yield np.nonzero(grid.cam == ci)[0], cams[ci], poses[ci]


def _check_bounds(cam: CameraModel, uv: np.ndarray):
    if np.any(uv[:, 0] < 0) or np.any(uv[:, 0] > cam.width) or np.any(
        uv[:, 1] < 0
    ) or np.any(uv[:, 1] > cam.height):
        raise GeometryError("token sample pixel outside camera bounds")


def ray_operators(cams, poses, grid: TokenGrid) -> tuple[np.ndarray, np.ndarray]:
    """World-to-ray transforms T_rw for every token, shape (T, 4, 4).

    Tokens whose pixel cannot be lifted (outside the model's validity
    region) fall back to the camera pose as their frame and are flagged
    False in the returned mask. The fallback still transforms correctly
    under global world motions, so invariance properties survive.
    """
    n = len(grid)
    t_wr = np.tile(np.eye(4), (n, 1, 1))
    valid = np.zeros(n, dtype=bool)
    for idx, cam, pose in _tokens_per_camera(cams, poses, grid):
        uv = grid.uv[idx]
        _check_bounds(cam, uv)
        d_cam, ok = unproject_many(cam, uv)
        d_world = pose.rotation.apply(d_cam)
        down = np.broadcast_to(pose.down_axis(), d_world.shape)
        right = np.broadcast_to(pose.right_axis(), d_world.shape)
        rots = _frame_rotations(d_world, down, right)
        rots = np.where(ok[:, None, None], rots, pose.rotation.m)
        t_wr[idx, :3, :3] = rots
        t_wr[idx, :3, 3] = pose.translation
        valid[idx] = ok
    # SE(3) inverse: [Rti | t] -> [R^T | -R^T t].
    rt = np.swapaxes(t_wr[:, :3, :3], 1, 2)
    t_rw = np.tile(np.eye(4), (n, 1, 1))
    t_rw[:, :3, :3] = rt
    t_rw[:, :3, 3] = -np.einsum("nij,nj->ni", rt, t_wr[:, :3, 3])
    return t_rw, valid


def latitude_map(cam: CameraModel, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel ray elevation in radians, (H, W). Returns (lat, valid)."""
    rm = ray_map(cam, pose)
    d = rm.directions
    lat = np.arctan2(-d[..., 1], np.hypot(d[..., 0], d[..., 2]))
    return lat, rm.valid


def _up_displacement(
    cam: CameraModel, pose: Pose, d_world: np.ndarray, uv: np.ndarray, delta_rad: float
) -> tuple[np.ndarray, np.ndarray]:
    k = np.cross(d_world, WORLD_UP)
    kn = np.linalg.norm(k, axis=-1, keepdims=True)
    ok = kn[..., 0] > _DEGENERATE_TOL
    khat = k / np.where(kn > 0.0, kn, 1.0)
    c, s = np.cos(delta_rad), np.sin(delta_rad)
    kdv = np.sum(khat * d_world, axis=-1, keepdims=True)
    d_rot = d_world * c + np.cross(khat, d_world) * s + khat * kdv * (1.0 - c)
    d_rot_cam = pose.rotation.inverse().apply(d_rot)
    uv_rot, pv = project_many(cam, d_rot_cam)
    disp = uv_rot - uv
    if cam.model == "erp":
        # The seam wraps; take the short way around.
        disp[..., 0] = (disp[..., 0] + cam.width / 2.0) % cam.width - cam.width / 2.0
    n = np.linalg.norm(disp, axis=-1, keepdims=True)
    ok = ok & pv & (n[..., 0] > 1e-12)
    up = np.where(ok[..., None], disp / np.where(n > 0.0, n, 1.0), 0.0)
    return up, ok


def up_map(
    cam: CameraModel, pose: Pose, delta_deg: float = DEFAULT_UP_DELTA_DEG
) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel unit 2-vector pointing toward world up in image space.

    Each valid world ray is rotated by delta_deg about d x up (toward
    world up), reprojected, and the normalized pixel displacement is
    stored. Pixels are masked where the ray is (anti)parallel to up,
    where the lift fails, or where the rotated ray leaves the model.
    Returns ((H, W, 2), valid).
    """
    rm = ray_map(cam, pose)
    grid = pixel_grid(cam.width, cam.height)
    up, ok = _up_displacement(cam, pose, rm.directions, grid, np.radians(delta_deg))
    return up, ok & rm.valid


def latup_raster(
    cam: CameraModel, pose: Pose, delta_deg: float = DEFAULT_UP_DELTA_DEG
) -> tuple[np.ndarray, np.ndarray]:
    """Three-channel float32 raster (lat, up_u, up_v) plus validity mask.

    Invalid pixels carry NaN in every channel and False in the mask.
    """
    lat, lat_ok = latitude_map(cam, pose)
    up, up_ok = up_map(cam, pose, delta_deg)
    valid = lat_ok & up_ok
    raster = np.concatenate([lat[..., None], up], axis=-1).astype(np.float32)
    raster[~valid] = np.nan
    return raster, valid


def latup_tokens(cams, poses, grid: TokenGrid, delta_deg: float = DEFAULT_UP_DELTA_DEG):
    """Lat/up features sampled at token sample points, shape (T, 3).

    Invalid tokens carry zeros (not NaN) so they can feed a linear layer
    unguarded; the mask tells them apart from genuine zeros.
    """
    n = len(grid)
    feats = np.zeros((n, 3))
    valid = np.zeros(n, dtype=bool)
    for idx, cam, pose in _tokens_per_camera(cams, poses, grid):
        uv = grid.uv[idx]
        _check_bounds(cam, uv)
        d_cam, ok = unproject_many(cam, uv)
        d_world = pose.rotation.apply(d_cam)
        lat = np.arctan2(-d_world[:, 1], np.hypot(d_world[:, 0], d_world[:, 2]))
        up, up_ok = _up_displacement(cam, pose, d_world, uv, np.radians(delta_deg))
        ok = ok & up_ok
        feats[idx, 0] = np.where(ok, lat, 0.0)
        feats[idx, 1:] = np.where(ok[:, None], up, 0.0)
        valid[idx] = ok
    return feats, valid


def plucker_map(cam: CameraModel, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel Plucker coordinates (d, o x d), shape (H, W, 6)."""
    rm = ray_map(cam, pose)
    moments = np.cross(np.broadcast_to(rm.origin, rm.directions.shape), rm.directions)
    return np.concatenate([rm.directions, moments], axis=-1), rm.valid


def rope_angles(position, head_dim_rope: int, base: float = DEFAULT_ROPE_BASE) -> np.ndarray:
    """Axial 2D RoPE angles for a grid position (row, col).

    head_dim_rope must be divisible by 4: each axis gets half the dims,
    i.e. head_dim_rope / 4 two-dim subspaces with frequencies
    base**(-2j / axis_dim) for j = 0 .. axis_dim/2 - 1, where axis_dim =
    head_dim_rope / 2. Returns head_dim_rope / 2 angles, row axis first.
    """
    if head_dim_rope % 4 != 0:
        raise GeometryError("head_dim_rope must be divisible by 4")
    r, c = position
    axis_dim = head_dim_rope // 2
    j = np.arange(axis_dim // 2, dtype=np.float64)
    theta = float(base) ** (-2.0 * j / axis_dim)
    return np.concatenate([float(r) * theta, float(c) * theta])


@dataclass(frozen=True)
class TokenOperator:
    """Per-token positional operator for one attention head.

    ``ray_block`` acts on consecutive 4-chunks of the first ``ray_dim``
    feature dims; ``rope_angles`` rotate consecutive 2-chunks of the
    rest. ray_dim must be divisible by 4 and the block invertible.
    """

    ray_block: np.ndarray
    rope: np.ndarray
    ray_dim: int

    def __post_init__(self):
        block = np.asarray(self.ray_block, dtype=np.float64)
        if block.shape != (4, 4):
            raise GeometryError("ray_block must be 4x4")
        if abs(np.linalg.det(block)) < 1e-12:
            raise GeometryError("ray_block must be invertible")
        if self.ray_dim % 4 != 0 or self.ray_dim < 0:
            raise GeometryError("ray_dim must be a non-negative multiple of 4")
        object.__setattr__(self, "ray_block", block)
        object.__setattr__(self, "rope", np.asarray(self.rope, dtype=np.float64).ravel())

    @property
    def head_dim(self) -> int:
        return self.ray_dim + 2 * self.rope.shape[0]


@dataclass(frozen=True)
class TokenOperatorSet:
    """Stacked operators for a token sequence (shared by all heads)."""

    ray_blocks: np.ndarray
    rope: np.ndarray
    ray_dim: int

    def __post_init__(self):
        blocks = np.asarray(self.ray_blocks, dtype=np.float64)
        rope = np.asarray(self.rope, dtype=np.float64)
        if blocks.ndim != 3 or blocks.shape[1:] != (4, 4):
            raise GeometryError("ray_blocks must have shape (T, 4, 4)")
        if rope.ndim != 2 or rope.shape[0] != blocks.shape[0]:
            raise GeometryError("rope must have shape (T, n_angles)")
        if self.ray_dim % 4 != 0 or self.ray_dim < 0:
            raise GeometryError("ray_dim must be a non-negative multiple of 4")
        object.__setattr__(self, "ray_blocks", blocks)
        object.__setattr__(self, "rope", rope)

    def __len__(self) -> int:
        return int(self.ray_blocks.shape[0])

    def __getitem__(self, i: int) -> TokenOperator:
        return TokenOperator(self.ray_blocks[i], self.rope[i], self.ray_dim)

    @property
    def head_dim(self) -> int:
        return self.ray_dim + 2 * self.rope.shape[1]

    @staticmethod
    def identity(n_tokens: int, head_dim: int, ray_dim: int) -> "TokenOperatorSet":
        """Identity blocks and zero angles: attention reduces to vanilla."""
        rope_dim = head_dim - ray_dim
        return TokenOperatorSet(
            np.tile(np.eye(4), (n_tokens, 1, 1)),
            np.zeros((n_tokens, rope_dim // 2)),
            ray_dim,
        )


def _layout(head_dim: int, ray_fraction: float) -> tuple[int, int]:
    ray_dim = ray_fraction * head_dim
    if abs(ray_dim - round(ray_dim)) > 1e-12:
        raise GeometryError("ray fraction does not split head_dim into integers")
    ray_dim = int(round(ray_dim))
    rope_dim = head_dim - ray_dim
    if ray_dim % 4 != 0:
        raise GeometryError(f"ray dims ({ray_dim}) must be divisible by 4")
    if rope_dim % 4 != 0:
        raise GeometryError(f"rope dims ({rope_dim}) must be divisible by 4")
    return ray_dim, rope_dim


def _prope_block(cam: CameraModel, pose: Pose) -> np.ndarray:
    if cam.model == "erp" or cam.xi != 0.0:
        raise UnsupportedModelError(
            "projective operators support pinhole cameras only"
        )
    block = np.eye(4)
    block[:3, :3] = cam.intrinsic_matrix()
    return block @ pose.inverse().matrix()


def build_operators(
    kind: str,
    cams,
    poses,
    grid: TokenGrid,
    head_dim: int,
    base: float = DEFAULT_ROPE_BASE,
    ray_fraction: float | None = None,
) -> TokenOperatorSet:
    """Token operators for a whole grid under one encoding kind.

    cape/gta use the camera extrinsics T_cw as the 4x4 block, prope the
    projective K[R|t], ucpe_ray/ucpe_hybrid the per-token ray transform
    T_rw. Hybrid kinds split the head dim half ray, half RoPE over the
    (row, col) grid position; pure kinds use the full head dim for the
    block. A different split can be forced via ray_fraction.
    """
    if kind not in ENCODING_KINDS:
        raise GeometryError(f"unknown encoding kind {kind!r}")
    frac = DEFAULT_RAY_FRACTION[kind] if ray_fraction is None else float(ray_fraction)
    ray_dim, rope_dim = _layout(head_dim, frac)
    n = len(grid)
    if kind in ("ucpe_ray", "ucpe_hybrid"):
        blocks, _ = ray_operators(cams, poses, grid)
    else:
        blocks = np.zeros((n, 4, 4))
        for idx, cam, pose in _tokens_per_camera(cams, poses, grid):
            # Frame-level kinds ignore the sample pixel, but a grid whose
            # pixels fall outside the camera is malformed either way.
            _check_bounds(cam, grid.uv[idx])
            if kind == "prope":
                block = _prope_block(cam, pose)
            else:
                block = pose.inverse().matrix()
            blocks[idx] = block
    if rope_dim > 0:
        rope = np.stack(
            [rope_angles((r, c), rope_dim, base) for r, c in zip(grid.row, grid.col)]
        )
    else:
        rope = np.zeros((n, 0))
    return TokenOperatorSet(blocks, rope, ray_dim)


def build_operator(
    kind: str,
    cam: CameraModel,
    pose: Pose,
    pixel,
    grid_pos,
    head_dim: int,
    base: float = DEFAULT_ROPE_BASE,
    ray_fraction: float | None = None,
) -> TokenOperator:
    """Single-token convenience wrapper around :func:`build_operators`."""
    r, c = grid_pos
    grid = TokenGrid(
        np.array([0]),
        np.array([r]),
        np.array([c]),
        np.array([0]),
        np.asarray(pixel, dtype=np.float64).reshape(1, 2),
    )
    ops = build_operators(kind, [cam], [pose], grid, head_dim, base, ray_fraction)
    return ops[0]
