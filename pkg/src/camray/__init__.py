"""Camera geometry, ray-based positional encodings, panoramic view
synthesis, and trajectory evaluation metrics."""

from .attention import (
    REFERENCE_BACKBONE_BLOCKS,
    REFERENCE_PIPELINE_PARAMS,
    AdapterConfig,
    AttentionConfig,
    WeightSet,
    adapter_param_count,
    apply_operator,
    attend,
    attention_block,
    base_attention,
    full_attention_param_count,
)
from .cameras import (
    MODELS,
    RECTIFY_CAP_DEG,
    CameraModel,
    RayMap,
    RectifyMap,
    focal_from_fov,
    pixel_grid,
    project,
    project_many,
    ray_map,
    rectify_map,
    unproject,
    unproject_many,
)
from .encodings import (
    DEFAULT_RAY_FRACTION,
    DEFAULT_ROPE_BASE,
    DEFAULT_UP_DELTA_DEG,
    ENCODING_KINDS,
    RayFrame,
    TokenGrid,
    TokenOperator,
    TokenOperatorSet,
    build_operator,
    build_operators,
    latitude_map,
    latup_raster,
    latup_tokens,
    plucker_map,
    ray_frame,
    rope_angles,
    up_map,
)
from .errors import CamrayError, GeometryError, InputError, UnsupportedModelError
from .formats import TOOL_VERSION, read_crayrast, read_png, write_crayrast, write_png
from .geometry import (
    WORLD_UP,
    PluckerCoords,
    Pose,
    Ray,
    Rotation3,
    Trajectory,
    compose,
    plucker,
    rodrigues,
    rotation_angle,
)
from .metrics import (
    CalibErrors,
    CalibEstimate,
    PoseMetrics,
    YawAlignment,
    align_yaw_umeyama,
    calib_errors,
    pose_metrics,
    prep_rectified,
    psnr,
    rotation_score,
    subsample_indices,
)
from .synthesis import (
    LENS_CATEGORIES,
    AugmentationMode,
    LensCategory,
    RenderJob,
    augment_rotations,
    bilinear_sample,
    checkerboard_panorama,
    compose_virtual_pose,
    harmonic_panorama,
    iter_render_job,
    make_rng,
    normalize_scale,
    render_view,
    resolve_threads,
    sample_camera,
    smoothstep,
)

__version__ = TOOL_VERSION

__all__ = [name for name in dir() if not name.startswith("_")]
