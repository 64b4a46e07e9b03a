"""Command-line entry point.

Subcommands: render, latup, plucker, attend, metrics, align, rectify,
score, sample, normalize. Exit codes: 0 success, 2 bad input, 3
geometry/domain error, 4 invariance-report failure.

Every run that writes artifacts also writes a run manifest next to them
(run_manifest.json in output directories, <name>.manifest.json next to
single files) recording the seed, tool version, exact command line, and
a sha256 of every input file. Reruns with identical inputs and seeds
produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import attention, encodings, formats, geometry, metrics, synthesis, viz
from .attention import AdapterConfig, AttentionConfig, WeightSet
from .cameras import CameraModel
from .errors import GeometryError, InputError
from .geometry import Pose, Rotation3
from .synthesis import make_rng


def _list_pngs(directory) -> list:
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory} is not a directory")
    files = sorted(directory.glob("*.png"))
    if not files:
        raise InputError(f"no .png files found in {directory}")
    return files


def _emit_json(obj, out, argv, inputs, seed=None) -> None:
    text = formats.json_dumps(obj)
    if out is None:
        sys.stdout.write(text)
        return
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    formats.write_run_manifest(
        out.parent / f"{out.stem}.manifest.json", seed, argv, inputs
    )


# --- render ------------------------------------------------------------------


def cmd_render(args, argv) -> int:
    frames = _list_pngs(args.erp)
    traj = formats.load_trajectory(args.trajectory)
    if len(traj) != len(frames):
        raise InputError(
            f"trajectory has {len(traj)} frames but {args.erp} holds {len(frames)} images"
        )
    rng = make_rng(args.seed)
    inputs = {"trajectory": args.trajectory}
    if args.camera is not None:
        cam = formats.load_camera(args.camera)
        inputs["camera"] = args.camera
    else:
        cam = synthesis.sample_camera(args.sample, rng, args.width, args.height)
    for f in frames:
        inputs[f"erp/{f.name}"] = f
    base = [Rotation3.identity() for _ in frames]
    augs = synthesis.augment_rotations(
        base, synthesis.AugmentationMode(args.augment), rng
    )
    job = synthesis.RenderJob(
        [formats.read_png(f) for f in frames], traj, cam, augs
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    annotation_frames = []
    for pos, (idx, image, valid, pose) in enumerate(
        synthesis.iter_render_job(job, args.threads)
    ):
        formats.write_png(out / f"frame_{pos:04d}.png", image)
        formats.write_png(out / f"mask_{pos:04d}.png", valid.astype(np.uint8) * 255)
        annotation_frames.append({"i": idx, **formats.pose_to_dict(pose)})
    annotation = {
        "augment": None if args.augment == "none" else args.augment,
        "camera": formats.camera_to_dict(cam),
        "frames": annotation_frames,
        "seed": args.seed,
    }
    formats.json_dump(annotation, out / "annotation.json")
    formats.write_run_manifest(out / "run_manifest.json", args.seed, argv, inputs)
    return 0


# --- encoding rasters ---------------------------------------------------------


def cmd_latup(args, argv) -> int:
    cam = formats.load_camera(args.camera)
    pose = formats.load_pose(args.pose)
    raster, valid = encodings.latup_raster(cam, pose, args.delta)
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    formats.write_crayrast(f"{prefix}.crayrast", raster)
    formats.write_png(f"{prefix}_mask.png", valid.astype(np.uint8) * 255)
    viz.latup_figure(raster, valid, f"{prefix}.png")
    formats.write_run_manifest(
        f"{prefix}.manifest.json", None, argv,
        {"camera": args.camera, "pose": args.pose},
    )
    return 0


def cmd_plucker(args, argv) -> int:
    cam = formats.load_camera(args.camera)
    pose = formats.load_pose(args.pose)
    raster, valid = encodings.plucker_map(cam, pose)
    raster = raster.astype(np.float32)
    raster[~valid] = np.nan
    prefix = Path(args.out)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    formats.write_crayrast(f"{prefix}.crayrast", raster)
    formats.write_png(f"{prefix}_mask.png", valid.astype(np.uint8) * 255)
    viz.plucker_figure(raster, valid, f"{prefix}.png")
    formats.write_run_manifest(
        f"{prefix}.manifest.json", None, argv,
        {"camera": args.camera, "pose": args.pose},
    )
    return 0


# --- attention demo -----------------------------------------------------------


def _default_attend_config() -> dict:
    return {
        "model_dim": 64,
        "heads": 2,
        "kind": "ucpe_hybrid",
        "adapter": {
            "compression": 8,
            "heads": 1,
            "placement": "parallel",
            "latup_bias": True,
        },
        "camera": {
            "model": "ucm",
            "xfov_deg": 140.0,
            "xi": 0.95,
            "width": 832,
            "height": 480,
        },
        "tokens": {"frames": 4, "rows": 4, "cols": 4},
        "rope_base": 10000.0,
        "up_delta_deg": 0.1,
    }


def _parse_attend_config(raw: dict):
    merged = _default_attend_config()
    for key, val in raw.items():
        if key not in merged:
            raise InputError(f"attend config: unknown key {key!r}")
        if isinstance(merged[key], dict) and key != "camera":
            merged[key].update(val)
        else:
            merged[key] = val
    try:
        adapter = AdapterConfig(**merged["adapter"])
        cfg = AttentionConfig(
            model_dim=int(merged["model_dim"]),
            heads=int(merged["heads"]),
            kind=merged["kind"],
            adapter=adapter,
            rope_base=float(merged["rope_base"]),
        )
    except TypeError as e:
        raise InputError(f"attend config: {e}") from e
    if cfg.kind == "none":
        raise InputError("attend config: kind must name a camera encoding")
    cam = formats.camera_from_dict(merged["camera"], "attend config camera")
    if cfg.kind == "prope" and (cam.model == "erp" or cam.xi != 0.0):
        raise InputError(
            "attend config: prope encodes projective pinhole cameras only "
            f"(got {cam.model} with xi={cam.xi})"
        )
    return cfg, cam, merged


def _dense_operator_matrix(op: encodings.TokenOperator) -> np.ndarray:
    d = op.head_dim
    m = np.zeros((d, d))
    for j in range(op.ray_dim // 4):
        m[4 * j:4 * j + 4, 4 * j:4 * j + 4] = op.ray_block
    for j, ang in enumerate(op.rope):
        c, s = np.cos(ang), np.sin(ang)
        o = op.ray_dim + 2 * j
        m[o:o + 2, o:o + 2] = [[c, -s], [s, c]]
    return m


def _dense_attend(q, k, v, ops, kind):
    mats = [_dense_operator_matrix(ops[i]) for i in range(len(ops))]
    qt = np.stack([mats[i].T @ q[i] for i in range(len(mats))])
    kt = np.stack([np.linalg.inv(mats[i]) @ k[i] for i in range(len(mats))])
    vt = v if kind == "cape" else np.stack(
        [np.linalg.inv(mats[i]) @ v[i] for i in range(len(mats))]
    )
    logits = qt @ kt.T / np.sqrt(q.shape[-1])
    w = np.exp(logits - logits.max(-1, keepdims=True))
    w /= w.sum(-1, keepdims=True)
    out = w @ vt
    if kind != "cape":
        out = np.stack([mats[i] @ out[i] for i in range(len(mats))])
    return out


def _invariance_rows(cfg: AttentionConfig, cam: CameraModel, merged: dict, seed: int):
    """The seeded self-check suite behind ``camray attend``.

    Draw order (Philox, one stream): poses, features, latup noise,
    world transforms, oracle features.
    """
    rng = make_rng(seed)
    tok = merged["tokens"]
    n_frames = int(tok["frames"])
    poses = [
        Pose(Rotation3.random(rng), rng.normal(scale=2.0, size=3))
        for _ in range(n_frames)
    ]
    cams = [cam] * n_frames
    grid = encodings.TokenGrid.regular(
        n_frames, int(tok["rows"]), int(tok["cols"]), cam.width, cam.height
    )
    t = len(grid)
    dh = cfg.adapter_head_dim
    q, k, v = (rng.normal(size=(t, dh)) for _ in range(3))
    rows = []

    def add(name, deviation, tolerance):
        rows.append(
            {
                "name": name,
                "deviation": float(deviation),
                "tolerance": tolerance,
                "passed": bool(deviation <= tolerance),
            }
        )

    ops = encodings.build_operators(
        cfg.kind, cams, poses, grid, dh, cfg.rope_base
    )
    frac = ops.ray_dim / dh

    ident = encodings.TokenOperatorSet.identity(t, dh, ops.ray_dim)
    dev = np.abs(
        attention.attend(q, k, v, ident, cfg.kind) - attention.attend(q, k, v)
    ).max()
    add("identity_reduction", dev, 1e-12)

    base_out = attention.attend(q, k, v, ops, cfg.kind)
    dev = 0.0
    scale = max(np.abs(base_out).max(), 1e-30)
    for _ in range(5):
        g = Pose(Rotation3.random(rng), rng.normal(scale=2.0, size=3))
        moved = [geometry.compose(g, p) for p in poses]
        ops_g = encodings.build_operators(
            cfg.kind, cams, moved, grid, dh, cfg.rope_base
        )
        out_g = attention.attend(q, k, v, ops_g, cfg.kind)
        dev = max(dev, np.abs(out_g - base_out).max() / scale)
    add("world_frame_invariance", dev, 1e-6)

    small_grid = encodings.TokenGrid.regular(2, 2, 2, cam.width, cam.height)
    small_ops = encodings.build_operators(
        cfg.kind, cams[:2], poses[:2], small_grid, 16, cfg.rope_base, ray_fraction=frac
    )
    qs, ks, vs = (rng.normal(size=(len(small_grid), 16)) for _ in range(3))
    dense = _dense_attend(qs, ks, vs, small_ops, cfg.kind)
    chunked = attention.attend(qs, ks, vs, small_ops, cfg.kind)
    add("dense_oracle_equivalence", np.abs(chunked - dense).max(), 1e-10)

    x = rng.normal(size=(t, cfg.model_dim))
    latup, _ = encodings.latup_tokens(
        cams, poses, grid, float(merged["up_delta_deg"])
    )
    dev = 0.0
    for placement in attention.PLACEMENTS:
        pcfg = AttentionConfig(
            cfg.model_dim,
            cfg.heads,
            cfg.kind,
            AdapterConfig(
                cfg.adapter.compression, cfg.adapter.heads, placement,
                cfg.adapter.latup_bias,
            ),
            cfg.rope_base,
        )
        weights = WeightSet.seeded(pcfg, seed + 1)
        block = attention.attention_block(x, pcfg, weights, ops, latup)
        base = attention.base_attention(x, pcfg, weights)
        dev = max(dev, np.abs(block - base).max())
    add("zero_init_noop", dev, 1e-12)
    return rows


def cmd_attend(args, argv) -> int:
    inputs = {}
    raw = {}
    if args.config is not None:
        raw = formats.json_load(args.config)
        if not isinstance(raw, dict):
            raise InputError(f"{args.config}: attend config must be a JSON object")
        inputs["config"] = args.config
    cfg, cam, merged = _parse_attend_config(raw)
    rows = _invariance_rows(cfg, cam, merged, args.seed)
    passed = all(r["passed"] for r in rows)
    report = {
        "config": merged,
        "passed": passed,
        "rows": rows,
        "seed": args.seed,
    }
    if args.report is None:
        sys.stdout.write(formats.json_dumps(report))
    else:
        out = Path(args.report)
        out.parent.mkdir(parents=True, exist_ok=True)
        formats.json_dump(report, out)
        lines = ["name,deviation,tolerance,passed"]
        lines += [
            f"{r['name']},{r['deviation']:.6e},{r['tolerance']:.1e},{r['passed']}"
            for r in rows
        ]
        out.with_suffix(".csv").write_text("\n".join(lines) + "\n")
        viz.report_figure(rows, out.with_suffix(".png"))
        formats.write_run_manifest(
            out.parent / f"{out.stem}.manifest.json", args.seed, argv, inputs
        )
    return 0 if passed else 4


# --- metrics and alignment ----------------------------------------------------


def cmd_metrics(args, argv) -> int:
    gt = formats.load_trajectory(args.gt)
    pred = formats.load_trajectory(args.pred)
    result = metrics.pose_metrics(gt, pred, args.samples)
    obj = {
        "cam_mc": result.cam_mc,
        "rot_err_deg": result.rot_err_deg,
        "trans_err": result.trans_err,
    }
    _emit_json(obj, args.out, argv, {"gt": args.gt, "pred": args.pred})
    return 0


def cmd_align(args, argv) -> int:
    src = formats.load_trajectory(args.src)
    dst = formats.load_trajectory(args.dst)
    pts_src = np.stack([p.translation for p in src.poses()])
    pts_dst = np.stack([p.translation for p in dst.poses()])
    result = metrics.align_yaw_umeyama(pts_src, pts_dst)
    obj = {
        "rmse": result.rmse,
        "scale": result.scale,
        "translation": [float(x) for x in result.translation],
        "yaw_deg": float(np.degrees(result.yaw_rad)),
    }
    _emit_json(obj, args.out, argv, {"src": args.src, "dst": args.dst})
    return 0


def cmd_score(args, argv) -> int:
    traj = formats.load_trajectory(args.trajectory)
    first = traj.poses()[0].rotation
    angles = [
        float(np.degrees(geometry.rotation_angle(first, p.rotation)))
        for p in traj.poses()
    ]
    obj = {"angles_deg": angles, "rotation_score_deg": metrics.rotation_score(traj)}
    if args.plot is not None:
        viz.score_figure(angles, args.plot)
    _emit_json(obj, args.out, argv, {"trajectory": args.trajectory})
    return 0


def cmd_rectify(args, argv) -> int:
    cam = formats.load_camera(args.camera)
    # render writes mask_*.png beside frame_*.png; only frames get rectified
    files = [f for f in _list_pngs(args.infile) if not f.name.startswith("mask")]
    if not files:
        raise InputError(f"no frame images (non-mask .png) in {args.infile}")
    frames = [formats.read_png(f) for f in files]
    rectified, rmap = metrics.prep_rectified(frames, cam, args.cap)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pos, img in enumerate(rectified):
        formats.write_png(out / f"rect_{pos:04d}.png", img)
    formats.write_png(out / "mask.png", rmap.valid.astype(np.uint8) * 255)
    formats.json_dump(formats.camera_to_dict(rmap.dst_cam), out / "camera_rectified.json")
    inputs = {"camera": args.camera}
    for f in files:
        inputs[f"frame/{f.name}"] = f
    formats.write_run_manifest(out / "run_manifest.json", None, argv, inputs)
    return 0


# --- sampling and normalization -------------------------------------------------


def cmd_sample(args, argv) -> int:
    rng = make_rng(args.seed)
    cams = [
        formats.camera_to_dict(
            synthesis.sample_camera(args.category, rng, args.width, args.height)
        )
        for _ in range(args.count)
    ]
    obj = cams[0] if args.count == 1 else cams
    _emit_json(obj, args.out, argv, {}, seed=args.seed)
    return 0


def cmd_normalize(args, argv) -> int:
    traj = formats.load_trajectory(args.trajectory)
    depth_dir = Path(args.depth)
    if not depth_dir.is_dir():
        raise InputError(f"{depth_dir} is not a directory")
    files = sorted(depth_dir.glob("*.crayrast"))
    if not files:
        raise InputError(f"no .crayrast depth rasters in {depth_dir}")
    depths = [formats.read_crayrast(f) for f in files]
    normalized, scale = synthesis.normalize_scale(traj, depths)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    formats.json_dump(formats.trajectory_to_dict(normalized), out)
    inputs = {"trajectory": args.trajectory}
    for f in files:
        inputs[f"depth/{f.name}"] = f
    formats.write_run_manifest(
        out.parent / f"{out.stem}.manifest.json", None, argv, inputs
    )
    sys.stdout.write(formats.json_dumps({"scale": scale}))
    return 0


# --- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camray",
        description="Camera geometry, ray encodings, panoramic synthesis, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render virtual-camera views from ERP frames")
    p.add_argument("--erp", required=True, help="directory of ERP PNG frames")
    p.add_argument("--trajectory", required=True, help="trajectory JSON")
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--camera", help="camera JSON file")
    grp.add_argument(
        "--sample", choices=sorted(synthesis.LENS_CATEGORIES), help="sample a camera"
    )
    p.add_argument(
        "--augment", default="none", choices=["none", "yaw", "yaw_pitch", "pan"]
    )
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=832, help="sampled-camera width")
    p.add_argument("--height", type=int, default=480, help="sampled-camera height")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("latup", help="latitude/up-direction raster for a camera+pose")
    p.add_argument("--camera", required=True)
    p.add_argument("--pose", required=True)
    p.add_argument("--delta", type=float, default=encodings.DEFAULT_UP_DELTA_DEG,
                   help="up-probe rotation in degrees")
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_latup)

    p = sub.add_parser("plucker", help="Plucker ray raster for a camera+pose")
    p.add_argument("--camera", required=True)
    p.add_argument("--pose", required=True)
    p.add_argument("--out", required=True, help="output prefix")
    p.set_defaults(func=cmd_plucker)

    p = sub.add_parser("attend", help="run the attention invariance self-checks")
    p.add_argument("--config", default=None, help="JSON config (defaults built in)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="write JSON report (plus CSV+figure)")
    p.set_defaults(func=cmd_attend)

    p = sub.add_parser("metrics", help="relative-pose errors between trajectories")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--samples", type=int, default=metrics.DEFAULT_SAMPLES)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("align", help="yaw-constrained similarity alignment")
    p.add_argument("--src", required=True)
    p.add_argument("--dst", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("rectify", help="rectify frames to a capped pinhole view")
    p.add_argument("--camera", required=True)
    p.add_argument("--in", dest="infile", required=True, help="input PNG directory")
    p.add_argument("--cap", type=float, default=100.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("score", help="rotation magnitude score of a trajectory")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--plot", default=None, help="optional PNG figure path")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sample", help="draw cameras from a lens category")
    p.add_argument("--category", required=True, choices=sorted(synthesis.LENS_CATEGORIES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--width", type=int, default=832)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("normalize", help="normalize trajectory scale from depths")
    p.add_argument("--trajectory", required=True)
    p.add_argument("--depth", required=True, help="directory of CRAYRAST depths")
    p.add_argument("--out", required=True, help="normalized trajectory JSON")
    p.set_defaults(func=cmd_normalize)

    return parser


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    echo = ["camray", *argv]
    try:
        return args.func(args, echo)
    except InputError as e:
        print(f"camray: error: {e}", file=sys.stderr)
        return 2
    except GeometryError as e:
        print(f"camray: geometry error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
