"""Command-line interface.

Subcommands: generate (render synthetic samples), track (run the tracker or
a baseline on a sample), eval (score a prediction against ground truth),
annotate (pose/disparity-based trajectory construction).

Exit codes: 0 success, 2 configuration or spec error, 3 IO error, 4 shape
or weight mismatch, 5 empty evaluation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import synthdata, tracker
from .annotate import (assemble_pedestrian_trajectory, parse_pose_text,
                       project_background, project_vehicle)
from .config import RunConfig
from .container import write_container
from .data import TrajectorySet, read_trajectories, write_trajectories
from .errors import (ConfigError, CorruptManifest, IoError, MissingWeight,
                     NoValidPoints, ShapeMismatch, TrackerError)
from .geometry import CameraIntrinsics, xyz_to_uvd
from .weights import WeightStore, init_weights, validate_weights

EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_SHAPE = 4
EXIT_EMPTY = 5


def _write_csv(path: Path, traj: TrajectorySet, k: CameraIntrinsics) -> None:
    xyz = traj.to_xyz(k).positions
    lines = ["frame,point,x,y,z,u,v,d,valid"]
    for t in range(traj.num_frames):
        for i in range(traj.num_points):
            x, y, z = xyz[i, t]
            if z > 0:
                u = k.fx * x / z + k.cx
                v = k.fy * y / z + k.cy
                d = z
            else:
                u = v = d = float("nan")
            lines.append(
                f"{t + 1},{i},{x:.9g},{y:.9g},{z:.9g},{u:.9g},{v:.9g},{d:.9g},"
                f"{int(traj.valid[i, t])}"
            )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _cmd_generate(args) -> int:
    try:
        text = Path(args.spec).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read spec file {args.spec}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{args.spec}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}"
        ) from e

    specs = doc.get("samples", [doc]) if isinstance(doc, dict) else None
    if specs is None:
        raise ConfigError(f"{args.spec}: top level must be an object")
    out_dir = Path(args.out)
    for i, raw in enumerate(specs):
        where = f"samples[{i}]" if "samples" in doc else "scene"
        spec = synthdata.spec_from_dict(raw, where)
        record = synthdata.generate(spec)
        sample_dir = out_dir / f"sample_{i:03d}" if len(specs) > 1 else out_dir
        synthdata.write_sample(record, sample_dir)
        v = record.video
        print(f"{sample_dir}: frames={v.num_frames} size={v.height}x{v.width} "
              f"queries={record.queries.shape[0]} seed={record.seed}")
    return 0


def _effective_config(args) -> RunConfig:
    cfg = RunConfig()
    over = {}
    if args.window_size is not None:
        over["window_size"] = args.window_size
    if args.iterations is not None:
        over["num_iterations"] = args.iterations
    if args.block_pairs is not None:
        over["num_block_pairs"] = args.block_pairs
    if args.mode is not None:
        over["mode"] = args.mode
    if args.support:
        kinds = []
        for tok in args.support.split(","):
            tok = tok.strip()
            if tok == "loc":
                kinds.append("local")
            elif tok == "glo":
                kinds.append("global")
            elif tok:
                raise ConfigError(f"--support expects loc,glo; got {tok!r}")
        over["support"] = tuple(kinds)
    if args.random_seed is not None:
        over["seed"] = args.random_seed
    return cfg.with_(**over) if over else cfg


def _cmd_track(args) -> int:
    if (args.weights is None) == (args.random_seed is None):
        raise ConfigError("give exactly one of --weights or --random-seed")
    cfg = _effective_config(args)
    record = synthdata.read_sample(args.sample)
    video = record.video

    if args.weights is not None:
        weights = WeightStore.load(args.weights)
        validate_weights(weights, cfg)
    else:
        weights = init_weights(cfg, cfg.seed)

    if args.baseline == "tap":
        traj = tracker.baseline_tap(video, record.queries, weights, cfg)
    elif args.baseline == "sf":
        traj = tracker.baseline_sf_chain(
            video, record.queries, lambda t: synthdata.gt_flow(record, t),
            cfg.eps_depth)
    else:
        traj = tracker.run_inference(video, record.queries, weights, cfg)

    out = Path(args.out)
    write_trajectories(out, traj, video.intrinsics,
                       (video.height, video.width),
                       {"kind": "trajectories", "config_hash": cfg.config_hash()})
    _write_csv(out / "trajectories.csv", traj, video.intrinsics)
    (out / "run_config.json").write_text(
        json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"{out}: tracked {traj.num_points} points over {traj.num_frames} frames")
    return 0


def _parse_resolution(text: str) -> tuple:
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError as e:
        raise ConfigError(f"--resolution expects HxW, got {text!r}") from e


def _cmd_eval(args) -> int:
    pred, k, pred_res, _ = read_trajectories(args.pred)
    gt, _, gt_res, _ = read_trajectories(args.gt)
    resolution = _parse_resolution(args.resolution) if args.resolution else pred_res
    if pred_res != gt_res:
        raise ShapeMismatch(f"resolution mismatch: pred {pred_res}, gt {gt_res}")
    report = metrics_mod.evaluate(pred, gt, k, resolution, args.depth_cap)
    text = metrics_mod.report_text(report)
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text, encoding="utf-8")
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    return 0


def _read_points_csv(path) -> np.ndarray:
    rows = []
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read points file {path}: {e}") from e
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = [p for p in ln.replace(",", " ").split() if p]
        try:
            rows.append([float(p) for p in parts])
        except ValueError as e:
            raise ConfigError(f"{path}: bad number in line {ln!r}") from e
    if not rows:
        raise ConfigError(f"{path}: no points found")
    return np.asarray(rows, dtype=np.float64)


def _cmd_annotate(args) -> int:
    try:
        pose_text = Path(args.poses).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read pose file {args.poses}: {e}") from e
    try:
        log = parse_pose_text(pose_text)
    except ValueError as e:
        raise ConfigError(str(e)) from e
    k = CameraIntrinsics(args.fx, args.fy, args.cx, args.cy)
    points = _read_points_csv(args.points)

    if args.mode in ("background", "vehicle"):
        if points.shape[1] != 3:
            raise ConfigError(f"{args.points}: expected x,y,z rows for {args.mode} mode")
        frames = log.frames
        n = points.shape[0]
        pos = np.empty((n, len(frames), 3), dtype=np.float64)
        for j, t in enumerate(frames):
            for i in range(n):
                if args.mode == "background":
                    pos[i, j] = project_background(points[i], log, t)
                else:
                    if not args.box_id:
                        raise ConfigError("vehicle mode needs --box-id")
                    pos[i, j] = project_vehicle(points[i], log, args.box_id, t)
        traj = TrajectorySet(pos, frame="xyz")
    else:
        if points.shape[1] != 4:
            raise ConfigError(
                f"{args.points}: expected frame,u,v,disparity rows for pedestrian mode")
        order = np.argsort(points[:, 0])
        uv = points[order, 1:3]
        disp = points[order, 3]
        traj = assemble_pedestrian_trajectory(uv, disp, args.baseline, k)

    out = Path(args.out)
    write_trajectories(out, traj, k, (args.height, args.width),
                       {"kind": "trajectories", "mode": args.mode})
    _write_csv(out / "trajectories.csv", traj, k)
    print(f"{out}: wrote {traj.num_points} x {traj.num_frames} trajectories")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rgbdtrack",
                                 description="RGB-D long-range 3D point tracking")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="render synthetic samples from a JSON spec")
    g.add_argument("spec", help="scene spec JSON file")
    g.add_argument("out", help="output directory")
    g.set_defaults(fn=_cmd_generate)

    t = sub.add_parser("track", help="track a sample's query points")
    t.add_argument("sample", help="sample container directory")
    t.add_argument("out", help="output directory for trajectories")
    t.add_argument("--weights", help="weight container directory")
    t.add_argument("--random-seed", type=int, default=None,
                   help="randomly initialize weights from this seed")
    t.add_argument("--mode", choices=("one", "all"), default=None)
    t.add_argument("--support", default="",
                   help="comma list of support-point kinds: loc,glo")
    t.add_argument("--baseline", choices=("tap", "sf"), default=None,
                   help="run a baseline instead of the full tracker")
    t.add_argument("--window-size", type=int, default=None)
    t.add_argument("--iterations", type=int, default=None)
    t.add_argument("--block-pairs", type=int, default=None)
    t.set_defaults(fn=_cmd_track)

    e = sub.add_parser("eval", help="score predicted against ground-truth trajectories")
    e.add_argument("pred", help="prediction trajectory container")
    e.add_argument("gt", help="ground-truth trajectory container")
    e.add_argument("--resolution", default=None, help="HxW override for 2D metrics")
    e.add_argument("--depth-cap", type=float, default=None,
                   help="ignore entries with ground-truth depth >= this many meters")
    e.add_argument("--out", default=None, help="directory for report.txt/report.json")
    e.set_defaults(fn=_cmd_eval)

    a = sub.add_parser("annotate", help="build trajectories from poses/disparities")
    a.add_argument("poses", help="plain-text pose file")
    a.add_argument("points", help="points CSV (x,y,z or frame,u,v,disparity)")
    a.add_argument("out", help="output directory")
    a.add_argument("--mode", choices=("background", "vehicle", "pedestrian"),
                   required=True)
    a.add_argument("--box-id", default=None)
    a.add_argument("--fx", type=float, default=100.0)
    a.add_argument("--fy", type=float, default=100.0)
    a.add_argument("--cx", type=float, default=0.0)
    a.add_argument("--cy", type=float, default=0.0)
    a.add_argument("--baseline", type=float, default=0.5,
                   help="stereo baseline in meters (pedestrian mode)")
    a.add_argument("--height", type=int, default=256)
    a.add_argument("--width", type=int, default=256)
    a.set_defaults(fn=_cmd_annotate)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad flags, matching the config exit code
        return int(e.code) if e.code else 0
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (IoError, CorruptManifest) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO
    except (ShapeMismatch, MissingWeight) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_SHAPE
    except NoValidPoints as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_EMPTY
    except TrackerError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
