"""On-disk formats: CRAYRAST rasters, PNG, JSON schemas, run manifests.

CRAYRAST is the toolkit's raster container:

    bytes 0..7    magic b"CRAYRAST"
    u32 LE        version (currently 1)
    u32 LE        height
    u32 LE        width
    u32 LE        channels
    payload       float32 LE, row-major, channel-interleaved (H, W, C)

NaN payload values are permitted only where a sidecar mask marks the
pixel invalid; the reader does not police that contract.

JSON schemas (all little endian of nothing, plain JSON):

    camera      {"model", "xfov_deg", "xi", "width", "height"}
    pose        {"T_wc": [16 floats, row-major 4x4]}
    trajectory  {"frames": [{"i": int, "T_wc": [16 floats]}, ...]}
    calibration {"pitch_deg": [...], "roll_deg": [...], "fov_deg", "k1", "k2"}

Every artifact-producing CLI run also writes a run manifest: seed, tool
version, the exact command, and a sha256 per input file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .cameras import CameraModel
from .errors import InputError
from .geometry import Pose, Trajectory
from .metrics import CalibEstimate

TOOL_NAME = "camray"
TOOL_VERSION = "0.1.0"

CRAYRAST_MAGIC = b"CRAYRAST"
CRAYRAST_VERSION = 1


# --- CRAYRAST ---------------------------------------------------------------


def write_crayrast(path, array) -> None:
    arr = np.asarray(array)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.ndim != 3:
        raise InputError(f"raster must be 2-D or 3-D, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype="<f4")
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(CRAYRAST_MAGIC)
        fh.write(struct.pack("<IIII", CRAYRAST_VERSION, h, w, c))
        fh.write(arr.tobytes(order="C"))


def read_crayrast(path) -> np.ndarray:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise InputError(f"cannot read raster {path}: {e}") from e
    if len(blob) < 24 or blob[:8] != CRAYRAST_MAGIC:
        raise InputError(f"{path} is not a CRAYRAST file")
    version, h, w, c = struct.unpack("<IIII", blob[8:24])
    if version != CRAYRAST_VERSION:
        raise InputError(f"{path}: unsupported CRAYRAST version {version}")
    expected = 24 + 4 * h * w * c
    if len(blob) != expected:
        raise InputError(f"{path}: payload is {len(blob) - 24} bytes, header implies {expected - 24}")
    data = np.frombuffer(blob, dtype="<f4", offset=24)
    return data.reshape(h, w, c).copy()


# --- PNG ---------------------------------------------------------------------


def to_uint8(array) -> np.ndarray:
    """Clip a [0, 1] float image (or pass through uint8) to uint8."""
    arr = np.asarray(array)
    if arr.dtype == np.uint8:
        return arr
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def write_png(path, array) -> None:
    from PIL import Image

    arr = to_uint8(array)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(arr).save(path, format="PNG")


def read_png(path) -> np.ndarray:
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB") if im.mode not in ("L", "RGB") else im)
    except OSError as e:
        raise InputError(f"cannot read image {path}: {e}") from e


# --- JSON --------------------------------------------------------------------


def json_dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def json_dump(obj, path) -> None:
    Path(path).write_text(json_dumps(obj))


def json_load(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise InputError(f"{path} is not valid JSON: {e}") from e


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise InputError(f"{where}: missing required key {key!r}")
    return obj[key]


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "model": cam.model,
        "xfov_deg": cam.xfov_deg,
        "xi": cam.xi,
        "width": cam.width,
        "height": cam.height,
    }


def camera_from_dict(obj: dict, where: str = "camera") -> CameraModel:
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected a JSON object")
    model = _require(obj, "model", where)
    width = int(_require(obj, "width", where))
    height = int(_require(obj, "height", where))
    if model == "erp":
        return CameraModel("erp", width, height)
    return CameraModel(
        model,
        width,
        height,
        xfov_deg=_require(obj, "xfov_deg", where),
        xi=float(obj.get("xi", 0.0)),
    )


def pose_to_dict(pose: Pose) -> dict:
    return {"T_wc": [float(x) for x in pose.matrix().ravel()]}


def pose_from_dict(obj: dict, where: str = "pose") -> Pose:
    raw = _require(obj, "T_wc", where)
    arr = np.asarray(raw, dtype=np.float64)
    if arr.shape != (16,):
        raise InputError(f"{where}: T_wc must hold 16 numbers (row-major 4x4)")
    return Pose.from_matrix(arr.reshape(4, 4))


def trajectory_to_dict(traj: Trajectory) -> dict:
    return {
        "frames": [
            {"i": idx, **pose_to_dict(pose)} for idx, pose in traj.frames
        ]
    }


def trajectory_from_dict(obj: dict, where: str = "trajectory") -> Trajectory:
    frames = _require(obj, "frames", where)
    if not isinstance(frames, list) or not frames:
        raise InputError(f"{where}: frames must be a non-empty list")
    entries = []
    for k, item in enumerate(frames):
        idx = int(_require(item, "i", f"{where}.frames[{k}]"))
        entries.append((idx, pose_from_dict(item, f"{where}.frames[{k}]")))
    return Trajectory(tuple(entries))


def load_camera(path) -> CameraModel:
    return camera_from_dict(json_load(path), where=str(path))


def load_pose(path) -> Pose:
    return pose_from_dict(json_load(path), where=str(path))


def load_trajectory(path) -> Trajectory:
    return trajectory_from_dict(json_load(path), where=str(path))


def calib_to_dict(calib: CalibEstimate) -> dict:
    return {
        "pitch_deg": [float(x) for x in calib.pitch_deg],
        "roll_deg": [float(x) for x in calib.roll_deg],
        "fov_deg": float(calib.fov_deg),
        "k1": float(calib.k1),
        "k2": float(calib.k2),
    }


def calib_from_dict(obj: dict, where: str = "calibration") -> CalibEstimate:
    return CalibEstimate(
        np.asarray(_require(obj, "pitch_deg", where), dtype=np.float64),
        np.asarray(_require(obj, "roll_deg", where), dtype=np.float64),
        float(_require(obj, "fov_deg", where)),
        float(obj.get("k1", 0.0)),
        float(obj.get("k2", 0.0)),
    )


def load_calib(path) -> CalibEstimate:
    return calib_from_dict(json_load(path), where=str(path))


# --- tensor bundles ----------------------------------------------------------


def save_tensors(directory, tensors: dict) -> None:
    """Write named 2-D matrices as CRAYRAST files plus a JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = {}
    for name, tensor in tensors.items():
        arr = np.asarray(tensor, dtype=np.float64)
        if arr.ndim != 2:
            raise InputError(f"tensor {name!r} must be 2-D, got shape {arr.shape}")
        fname = f"{name}.crayrast"
        write_crayrast(directory / fname, arr[..., None])
        index[name] = {"file": fname, "rows": arr.shape[0], "cols": arr.shape[1]}
    json_dump({"tensors": index}, directory / "manifest.json")


def load_tensors(directory) -> dict:
    directory = Path(directory)
    manifest = json_load(directory / "manifest.json")
    out = {}
    for name, entry in _require(manifest, "tensors", "weight manifest").items():
        arr = read_crayrast(directory / entry["file"])
        if arr.shape[2] != 1:
            raise InputError(f"tensor {name!r} must be single channel")
        out[name] = arr[..., 0].astype(np.float64)
    return out


# --- run manifests -----------------------------------------------------------


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_run_manifest(path, seed, argv, inputs) -> dict:
    """Record what produced the artifacts sitting next to this file.

    inputs maps labels to paths of files that were read; each is hashed
    so a rerun can prove it saw identical bytes.
    """
    manifest = {
        "tool": TOOL_NAME,
        "version": TOOL_VERSION,
        "seed": seed,
        "command": list(argv),
        "inputs": {
            str(label): {"path": str(p), "sha256": file_sha256(p)}
            for label, p in sorted(dict(inputs).items())
        },
    }
    json_dump(manifest, path)
    return manifest
