"""Command-line interface binding the library into reproducible runs.

Subcommands: train, render, animate, transfer, eval, gradcheck.  Exit
codes: 0 success, 1 validation error (bad arguments/inputs), 2 runtime
error.  Every run is deterministic given (config, seed, inputs),
including PNG bytes.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import animation, metrics, texture
from .config import apply_to_dataclass, parse_config_file
from .dataset import camera_from_transform, load_frameset
from .gradients import LossWeights, grad_check
from .imgio import read_png, write_png
from .mesh import MeshError, load_proxy_mesh
from .projection import MeshBuffers, project_forward
from .render import Camera, RasterConfig, render_arrays, set_threads
from .training import TrainConfig, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="uvsplat",
                description="Gaussian textures on UV-mapped proxy meshes")
    p.add_argument("--threads", type=int, default=os.cpu_count(),
                   help="rasterizer worker count (default: logical cores)")
    p.add_argument("--config", type=str, default=None,
                   help="flat key = value config file")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", parents=[], help="optimize a texture from posed frames")
    t.add_argument("mesh")
    t.add_argument("frames")
    t.add_argument("-o", "--output", required=True)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--log-every", type=int, default=100)

    r = sub.add_parser("render", help="render a texture bound to a mesh")
    r.add_argument("texture")
    r.add_argument("mesh")
    r.add_argument("--camera", required=True, help="camera pose JSON")
    r.add_argument("-o", "--output", required=True)
    r.add_argument("--background", type=str, default="0,0,0")

    a = sub.add_parser("animate", help="render frames of a deforming mesh")
    a.add_argument("texture")
    a.add_argument("mesh")
    a.add_argument("--deformer", choices=("sine", "lattice", "sequence"), default="sine")
    a.add_argument("--frames", type=int, default=60)
    a.add_argument("-o", "--output", required=True, help="output directory")
    a.add_argument("--camera", default=None, help="camera pose JSON (default: auto orbit view)")
    a.add_argument("--background", type=str, default="0,0,0")
    a.add_argument("--amplitude", type=float, default=None)
    a.add_argument("--frequency", type=float, default=None)
    a.add_argument("--phase-rate", type=float, default=None)
    a.add_argument("--axis", type=str, default=None)
    a.add_argument("--direction", type=str, default=None)
    a.add_argument("--lattice-file", type=str, default=None,
                   help="npz with dims, box_min, box_max, control_points")
    a.add_argument("--sequence-dir", type=str, default=None,
                   help="directory of frame_%%04d.obj files")

    x = sub.add_parser("transfer", help="rebind a texture onto another mesh")
    x.add_argument("texture")
    x.add_argument("source_mesh")
    x.add_argument("target_mesh")
    x.add_argument("-o", "--output", required=True)

    e = sub.add_parser("eval", help="compare two image directories")
    e.add_argument("dir_a")
    e.add_argument("dir_b")

    g = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--gaussians", type=int, default=10)
    g.add_argument("--size", type=int, default=32)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_cfg = parse_config_file(args.config) if args.config else {}
        set_threads(args.threads if args.threads else os.cpu_count())
        handler = {
            "train": _cmd_train,
            "render": _cmd_render,
            "animate": _cmd_animate,
            "transfer": _cmd_transfer,
            "eval": _cmd_eval,
            "gradcheck": _cmd_gradcheck,
        }[args.command]
        return handler(args, file_cfg)
    except (FileNotFoundError, MeshError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


# ---------------------------------------------------------------------------


def _cmd_train(args, file_cfg) -> int:
    mesh = load_proxy_mesh(args.mesh)
    print(mesh.report())
    frames = load_frameset(args.frames)
    cfg, _ = apply_to_dataclass(TrainConfig(), file_cfg)
    if args.iterations is not None:
        cfg = _replace(cfg, iterations=args.iterations)
    if args.seed is not None:
        cfg = _replace(cfg, seed=args.seed)
    raster_cfg, _ = apply_to_dataclass(RasterConfig(), file_cfg)

    every = max(1, args.log_every)

    def progress(it, loss, view_psnr, count):
        if it % every == 0 or it == cfg.iterations - 1:
            print(f"iter {it:6d}  loss {loss:.6f}  psnr {view_psnr:6.2f}  gaussians {count}")

    gt, log = train(frames, mesh, cfg, raster_cfg, progress=progress)
    texture.save(gt, args.output)
    print(f"saved {len(gt)} Gaussians to {args.output}")
    return 0


def _cmd_render(args, file_cfg) -> int:
    gt = texture.load(args.texture)
    mesh = load_proxy_mesh(args.mesh)
    if gt.mesh_fingerprint not in (mesh.fingerprint(), b"\x00" * 8):
        print("warning: texture was trained against a different mesh", file=sys.stderr)
    cam = load_camera(args.camera)
    raster_cfg, _ = apply_to_dataclass(RasterConfig(), file_cfg)
    bg = _parse_vec3(args.background)
    ctx = project_forward(gt, MeshBuffers(mesh))
    sctx = render_arrays(ctx.means, ctx.covs, ctx.alphas, gt.color, cam, bg,
                         raster_cfg, gt.sh_degree)
    write_png(args.output, sctx.image)
    print(f"wrote {args.output}")
    return 0


def _cmd_animate(args, file_cfg) -> int:
    gt = texture.load(args.texture)
    mesh = load_proxy_mesh(args.mesh)
    raster_cfg, _ = apply_to_dataclass(RasterConfig(), file_cfg)
    bg = _parse_vec3(args.background)
    deformer = _build_deformer(args, file_cfg, mesh)
    if args.camera:
        cam = load_camera(args.camera)
    else:
        from .fixtures import look_at_camera
        from .texture import world_scale_measure  # noqa: F401
        center = mesh.positions.mean(axis=0)
        radius = float(np.linalg.norm(mesh.positions - center, axis=1).max())
        cam = look_at_camera(center + np.array([0.0, -0.6, -3.2]) * radius,
                             center, 512, 512)
    outdir = Path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)

    def on_frame(f, image):
        write_png(outdir / f"frame_{f:04d}.png", image)

    animation.render_animation(gt, mesh, deformer, cam, args.frames, bg,
                               raster_cfg, on_frame=on_frame)
    print(f"wrote {args.frames} frames to {outdir}")
    return 0


def _cmd_transfer(args, file_cfg) -> int:
    gt = texture.load(args.texture)
    source = load_proxy_mesh(args.source_mesh)
    if gt.mesh_fingerprint not in (source.fingerprint(), b"\x00" * 8):
        print("warning: texture fingerprint does not match the source mesh",
              file=sys.stderr)
    target = load_proxy_mesh(args.target_mesh)
    out = texture.rebind(gt, target)
    texture.save(out, args.output)
    print(f"rebound {len(out)}/{len(gt)} Gaussians onto {args.target_mesh}")
    return 0


def _cmd_eval(args, file_cfg) -> int:
    names_a = _png_names(args.dir_a)
    names_b = _png_names(args.dir_b)
    common = sorted(set(names_a) & set(names_b))
    if not common:
        raise ValueError("no common PNG file names between the two directories")
    rows = []
    for name in common:
        a = read_png(Path(args.dir_a) / name)
        b = read_png(Path(args.dir_b) / name)
        rows.append((name, metrics.psnr(a[..., :3], b[..., :3]),
                     metrics.ssim(a[..., :3], b[..., :3]),
                     metrics.iou(a[..., 3], b[..., 3])))
    print(f"{'frame':<24} {'PSNR':>8} {'SSIM':>8} {'IoU':>8}")
    for name, p, s, i in rows:
        print(f"{name:<24} {p:>8.2f} {s:>8.4f} {i:>8.4f}")
    mp = sum(r[1] for r in rows) / len(rows)
    ms = sum(r[2] for r in rows) / len(rows)
    mi = sum(r[3] for r in rows) / len(rows)
    print(f"{'mean':<24} {mp:>8.2f} {ms:>8.4f} {mi:>8.4f}")
    return 0


def _cmd_gradcheck(args, file_cfg) -> int:
    from .fixtures import look_at_camera, quad_mesh
    from .texture import init_gaussians
    rng = np.random.default_rng(args.seed)
    mesh = quad_mesh()
    gt = init_gaussians(mesh)
    reps = max(1, math.ceil(args.gaussians / len(gt)))
    gt = gt.select(np.arange(len(gt)).repeat(reps)[: args.gaussians])
    gt.u_r_lo += rng.normal(0, 0.02, gt.u_r_lo.shape)
    gt.u_r_hi += rng.normal(0, 0.02, gt.u_r_hi.shape)
    gt.theta_d[:] = rng.uniform(-1.5, 1.5, len(gt))
    gt.log_s_d += rng.normal(0, 0.3, len(gt))
    gt.log_s_f += rng.normal(0, 0.3, len(gt))
    gt.opacity_logit[:] = rng.normal(0.5, 1.0, len(gt))
    gt.color[:] = rng.uniform(0.1, 0.9, gt.color.shape)
    cam = look_at_camera([0.5, -0.8, -4.0], [0, 0, 0], args.size, args.size)
    truth = rng.uniform(0, 1, (args.size, args.size, 3))
    report = grad_check(gt, MeshBuffers(mesh), cam, truth, LossWeights(), h=1e-4)
    print(report.format())
    return 0


# ---------------------------------------------------------------------------


def load_camera(path) -> Camera:
    """Camera pose JSON: explicit intrinsics or transforms-style entry."""
    with open(path, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    if "world_to_camera" in spec:
        return Camera(width=int(spec["width"]), height=int(spec["height"]),
                      fx=float(spec["fx"]), fy=float(spec["fy"]),
                      cx=float(spec["cx"]), cy=float(spec["cy"]),
                      world_to_camera=np.asarray(spec["world_to_camera"],
                                                 dtype=np.float64).reshape(4, 4),
                      near=float(spec.get("near", 0.01)),
                      far=float(spec.get("far", 1000.0)))
    if "transform_matrix" in spec and "camera_angle_x" in spec:
        return camera_from_transform(spec["transform_matrix"],
                                     float(spec["camera_angle_x"]),
                                     int(spec.get("width", 512)),
                                     int(spec.get("height", 512)))
    raise ValueError(f"{path}: unrecognized camera JSON layout")


def _build_deformer(args, file_cfg, mesh):
    if args.deformer == "sine":
        return animation.SineDeformer(
            axis=_parse_vec3(args.axis or file_cfg.get("axis", "0,1,0")),
            direction=_parse_vec3(args.direction or file_cfg.get("direction", "1,0,0")),
            amplitude=_pick(args.amplitude, file_cfg, "amplitude", 0.1),
            frequency=_pick(args.frequency, file_cfg, "frequency", 0.5),
            phase_rate=_pick(args.phase_rate, file_cfg, "phase_rate", 0.3),
        )
    if args.deformer == "lattice":
        path = args.lattice_file or file_cfg.get("lattice_file")
        if not path:
            raise ValueError("lattice deformer needs --lattice-file")
        data = np.load(path)
        return animation.LatticeDeformer(
            dims=tuple(int(d) for d in data["dims"]),
            box_min=data["box_min"], box_max=data["box_max"],
            control_points=data["control_points"])
    path = args.sequence_dir or file_cfg.get("sequence_dir")
    if not path:
        raise ValueError("sequence deformer needs --sequence-dir")
    return animation.load_mesh_sequence(path, mesh)


def _png_names(directory):
    d = Path(directory)
    if not d.is_dir():
        raise ValueError(f"{directory} is not a directory")
    return [p.name for p in d.iterdir() if p.suffix.lower() == ".png"]


def _parse_vec3(value):
    if isinstance(value, (tuple, list, np.ndarray)):
        return tuple(float(v) for v in value)
    parts = str(value).split(",")
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated numbers, got {value!r}")
    return tuple(float(p) for p in parts)


def _pick(flag_value, file_cfg, key, default):
    if flag_value is not None:
        return flag_value
    return float(file_cfg.get(key, default))


def _replace(cfg, **kw):
    from dataclasses import replace
    return replace(cfg, **kw)


if __name__ == "__main__":
    sys.exit(main())
