"""``catastereo`` command line.

Subcommands: ``design``, ``simulate``, ``calibrate``, ``evaluate-planes`` and
``measure``. Each writes its outputs plus ``manifest.json`` into ``--out``;
nothing is written when a subcommand fails.
"""
import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import fov, io, simulator
from .calibration import BoardSpec, calibrate
from .errors import CatastereoError
from .reconstruction import SEGMENTS, plane_distance_report, reconstruct_skeleton, segment_lengths

DEFAULT_SEED = 7

SEGMENT_LABELS = {
    "lower_arm": "L.arm",
    "upper_arm": "U.arm",
    "shoulders": "Should.",
    "hips": "Hips",
    "upper_leg": "U.leg",
    "lower_leg": "L.leg",
}


def parse_values(text):
    """``"1,2,3"`` or ``"start:stop:step"`` (stop inclusive) to a list of floats."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError(f"bad range {text!r}, expected start:stop:step")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 10) for i in range(max(n, 0))]
    return [float(p) for p in text.split(",") if p.strip()]


def _config(path):
    return io.load_config(path) if path else fov.AdapterConfig.reference()


def _inputs(**paths):
    return {k: v for k, v in paths.items() if v is not None}


def _args_dict(args, *names):
    return {n: (str(getattr(args, n)) if isinstance(getattr(args, n), Path) else getattr(args, n)) for n in names}


def cmd_design(args):
    cfg = _config(args.config)
    report = fov.fov_report(cfg)
    betas = [math.radians(b) for b in args.beta] if args.beta is not None else None
    b_ms = [b / 100.0 for b in args.b_m] if args.b_m is not None else None
    l_ms = [x / 100.0 for x in args.l_m] if args.l_m is not None else None
    rows = fov.sweep(cfg, betas, b_ms, l_ms)
    csv = io.csv_text(fov.SWEEP_COLUMNS, [fov.sweep_row_values(r) for r in rows])
    files = {"design.csv": csv}
    files["manifest.json"] = io.dumps(
        io.manifest(
            "design",
            _inputs(config=args.config),
            list(files),
            _args_dict(args, "beta", "b_m", "l_m"),
        )
    )
    io.write_outputs(args.out, files)
    print(fov.summary(report))
    flagged = sum(r.status != "ok" for r in rows)
    print(f"{len(rows)} design rows written ({flagged} flagged)")
    return 0


def _camera_pose_dict(cam):
    return io.camera_to_dict(cam)


def cmd_simulate(args):
    cfg = _config(args.config)
    sim = simulator.build_rig(cfg)
    board = BoardSpec(args.board_rows, args.board_cols, args.square_mm / 1000.0)
    session = simulator.generate_chessboard_session(sim, args.views, board, args.sigma, args.seed)
    body = simulator.skeleton_template(cfg.h_avg)
    joints = simulator.place_subject(sim, body, args.subject_distance)
    kp_a, kp_b = simulator.generate_skeleton_views(sim, joints, args.sigma, args.seed + 1)
    truth = {
        "schema": io.GROUND_TRUTH_SCHEMA,
        "config": io.config_to_dict(cfg),
        "sigma_px": args.sigma,
        "seed": args.seed,
        "frame": "phone (world) frame; poses map world to camera",
        "cam_a": _camera_pose_dict(sim.rig.cam_a),
        "cam_b": _camera_pose_dict(sim.rig.cam_b),
        "relative": io.transform_to_dict(sim.rig.relative),
        "baseline_m": sim.rig.baseline,
        "board_poses": [io.transform_to_dict(p) for p in session.board_poses],
        "board_poses_cam_a": [io.transform_to_dict(sim.rig.cam_a.pose.compose(p)) for p in session.board_poses],
        "skeleton_world_m": joints.tolist(),
        "skeleton_cam_a_m": sim.rig.cam_a.pose.apply(joints).tolist(),
        "segments_m": dict(simulator.REFERENCE_SEGMENTS),
    }
    reference = {"units": "cm"}
    reference.update({k: v * 100.0 for k, v in simulator.REFERENCE_SEGMENTS.items()})
    files = {
        "corners.json": io.dumps(io.corners_to_dict(session.observations)),
        "keypoints_a.json": io.dumps(io.keypoints_to_dict(kp_a)),
        "keypoints_b.json": io.dumps(io.keypoints_to_dict(kp_b)),
        "reference_cm.json": io.dumps(reference),
        "ground_truth.json": io.dumps(truth),
    }
    files["manifest.json"] = io.dumps(
        io.manifest(
            "simulate",
            _inputs(config=args.config),
            list(files),
            _args_dict(args, "views", "sigma", "seed", "subject_distance", "board_rows", "board_cols", "square_mm"),
            seed=args.seed,
        )
    )
    io.write_outputs(args.out, files)
    print(
        f"simulated {args.views} board views and one subject at {args.subject_distance:.2f} m "
        f"(sigma {args.sigma} px, seed {args.seed}); ground-truth baseline {sim.rig.baseline * 100:.2f} cm"
    )
    return 0


def cmd_calibrate(args):
    obs = io.load_corners(args.corners)
    res = calibrate(
        obs,
        estimate_distortion=not args.no_distortion,
        estimate_skew=args.estimate_skew,
        huber=args.huber,
    )
    files = {"calibration.json": io.dumps(io.calibration_to_dict(res))}
    files["manifest.json"] = io.dumps(
        io.manifest(
            "calibrate",
            {"corners": args.corners},
            list(files),
            _args_dict(args, "no_distortion", "estimate_skew", "huber"),
        )
    )
    io.write_outputs(args.out, files)
    print(f"views: {len(res.view_ids)}; converged: {res.converged} after {res.iterations} iterations")
    print(f"mean reprojection error: {res.mean_error:.4f} px (initial {res.initial_mean_error:.4f} px)")
    if res.mean_error_no_distortion is not None:
        print(f"mean reprojection error without distortion: {res.mean_error_no_distortion:.4f} px")
    print(f"baseline: {res.baseline * 100:.2f} cm")
    return 0


def format_plane_table(report):
    ids = list(range(1, len(report.view_ids) + 1))
    header = ["Axis/Plane"] + [str(i) for i in ids] + ["Mean"]
    lines = [" ".join(f"{h:>10}" for h in header)]
    for axis, row in zip("XYZ", report.table()):
        lines.append(" ".join([f"{axis:>10}"] + [f"{x:10.2f}" for x in row]))
    return "\n".join(lines)


def cmd_evaluate_planes(args):
    calib = io.load_calibration(args.calibration)
    obs = io.load_corners(args.corners)
    report = plane_distance_report(calib, obs)
    table = report.table()
    header = ["axis"] + list(report.view_ids) + ["mean"]
    rows = [[axis] + [repr(float(x)) for x in row] for axis, row in zip("XYZ", table)]
    payload = {
        "schema": io.PLANES_SCHEMA,
        "units": "mm",
        "metric": "per-axis mean absolute deviation between triangulated corners and the posed board",
        "view_ids": list(report.view_ids),
        "distances_mm": {axis: row.tolist() for axis, row in zip("XYZ", report.distances_mm)},
        "mean_mm": dict(zip("XYZ", report.mean_mm.tolist())),
        "plane_rms_mm": report.plane_rms_mm.tolist(),
        "skipped": list(report.skipped),
    }
    files = {"planes.csv": io.csv_text(header, rows), "planes.json": io.dumps(payload)}
    files["manifest.json"] = io.dumps(
        io.manifest(
            "evaluate-planes",
            {"calibration": args.calibration, "corners": args.corners},
            list(files),
            {},
        )
    )
    io.write_outputs(args.out, files)
    print("Average distances (mm) between triangulated and calibrated board corners")
    print(format_plane_table(report))
    if report.skipped:
        print(f"skipped views: {', '.join(report.skipped)}")
    return 0


def segment_table(report):
    """Rows (label, values...) in cm mirroring the reconstructed/measured/diff layout."""
    names = list(SEGMENTS)

    def cm(x):
        return "-" if x is None else f"{x * 100:.1f}"

    rows = [["3D"] + [cm(report.lengths[n]) for n in names] + ["-"]]
    if report.reference:
        rows.append(["Meas."] + [cm(report.reference.get(n)) for n in names] + ["-"])
        rows.append(["Diff."] + [cm(report.differences.get(n)) for n in names] + [cm(report.mean_difference)])
    return ["", *(SEGMENT_LABELS[n] for n in names), "Mean"], rows


def cmd_measure(args):
    calib = io.load_calibration(args.calibration)
    kp_a = io.load_keypoints(args.keypoints_a)
    kp_b = io.load_keypoints(args.keypoints_b)
    reference = io.load_reference(args.reference) if args.reference else None
    skeleton = reconstruct_skeleton(calib.rig(), kp_a, kp_b, args.threshold)
    report = segment_lengths(skeleton, reference)
    header, rows = segment_table(report)
    payload = {
        "schema": io.SEGMENTS_SCHEMA,
        "units": "m",
        "confidence_threshold": args.threshold,
        "lengths": report.lengths,
        "per_side": report.per_side,
        "reference": report.reference,
        "differences": report.differences,
        "mean_difference": report.mean_difference,
        "joints_cam_a": [None if not v else p.tolist() for p, v in zip(skeleton.joints, skeleton.valid)],
    }
    csv_rows = [[n, repr(report.lengths[n]) if report.lengths[n] is not None else ""] for n in SEGMENTS]
    files = {
        "segments.csv": io.csv_text(["segment", "length_m"], csv_rows),
        "segments_table.csv": io.csv_text(header, rows),
        "segments.json": io.dumps(payload),
    }
    files["manifest.json"] = io.dumps(
        io.manifest(
            "measure",
            _inputs(
                calibration=args.calibration,
                keypoints_a=args.keypoints_a,
                keypoints_b=args.keypoints_b,
                reference=args.reference,
            ),
            list(files),
            _args_dict(args, "threshold"),
        )
    )
    io.write_outputs(args.out, files)
    print(f"valid joints: {int(skeleton.valid.sum())}/25; lengths in cm")
    print(" ".join(f"{h:>8}" for h in header))
    for row in rows:
        print(" ".join(f"{c:>8}" for c in row))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="catastereo", description="Planar-mirror catadioptric stereo toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("design", help="FOV analysis and parameter sweep")
    d.add_argument("--config", type=Path, help="adapter config JSON (default: 55 deg, 2.5 cm, 3 cm, 5 cm baseline)")
    d.add_argument("--beta", type=parse_values, help="mirror angles in degrees, list or start:stop:step")
    d.add_argument("--b-m", type=parse_values, help="camera-mirror distances in cm")
    d.add_argument("--l-m", type=parse_values, help="mirror side lengths in cm")
    d.add_argument("--out", type=Path, required=True)
    d.set_defaults(func=cmd_design)

    s = sub.add_parser("simulate", help="synthetic chessboard session and subject")
    s.add_argument("--config", type=Path)
    s.add_argument("--views", type=int, default=14)
    s.add_argument("--sigma", type=float, default=0.0, help="pixel noise standard deviation")
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)
    s.add_argument("--subject-distance", type=float, default=4.0, help="meters from the virtual cameras")
    s.add_argument("--board-rows", type=int, default=6)
    s.add_argument("--board-cols", type=int, default=9)
    s.add_argument("--square-mm", type=float, default=25.0)
    s.add_argument("--out", type=Path, required=True)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="calibrate the virtual stereo pair")
    c.add_argument("--corners", type=Path, required=True)
    c.add_argument("--no-distortion", action="store_true", help="keep k1 = k2 = 0")
    c.add_argument("--estimate-skew", action="store_true")
    c.add_argument("--huber", action="store_true", help="Huber loss with a 2 px threshold")
    c.add_argument("--out", type=Path, required=True)
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate-planes", help="triangulated board vs calibrated board")
    e.add_argument("--calibration", type=Path, required=True)
    e.add_argument("--corners", type=Path, required=True)
    e.add_argument("--out", type=Path, required=True)
    e.set_defaults(func=cmd_evaluate_planes)

    m = sub.add_parser("measure", help="body segment lengths from two keypoint files")
    m.add_argument("--calibration", type=Path, required=True)
    m.add_argument("--keypoints-a", type=Path, required=True)
    m.add_argument("--keypoints-b", type=Path, required=True)
    m.add_argument("--reference", type=Path, help="tape measurements in cm")
    m.add_argument("--threshold", type=float, default=0.3, help="minimum keypoint confidence")
    m.add_argument("--out", type=Path, required=True)
    m.set_defaults(func=cmd_measure)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CatastereoError, OSError) as exc:
        print(f"catastereo {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
