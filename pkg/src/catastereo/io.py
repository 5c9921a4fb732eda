"""File formats.

All files are JSON carrying a ``schema`` tag, except keypoints (the pose
detector's own per-frame JSON layout) and the CSV tables. Human-facing
config values use degrees and centimeters; everything else is SI.
"""
import csv
import hashlib
import io
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import BoardSpec, CalibrationResult, CornerObservations, ViewObservation
from .errors import SchemaError
from .fov import AdapterConfig
from .geometry import Camera, RigidTransform
from .reconstruction import BODY_25, Keypoints2D, SEGMENTS

CORNERS_SCHEMA = "catastereo.corners/v1"
CALIBRATION_SCHEMA = "catastereo.calibration/v1"
GROUND_TRUTH_SCHEMA = "catastereo.ground-truth/v1"
MANIFEST_SCHEMA = "catastereo.manifest/v1"
SEGMENTS_SCHEMA = "catastereo.segments/v1"
PLANES_SCHEMA = "catastereo.planes/v1"
ADAPTER_SCHEMA = "catastereo.adapter/v1"


def dumps(obj):
    return json.dumps(obj, indent=2) + "\n"


def _load(path, schema=None):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if schema is not None:
        got = data.get("schema") if isinstance(data, dict) else None
        if got != schema:
            raise SchemaError(f"{path}: expected schema {schema!r}, found {got!r}")
    return data


def _require(data, key, where):
    try:
        return data[key]
    except (KeyError, TypeError):
        raise SchemaError(f"{where}: missing field {key!r}") from None


# --------------------------------------------------------------------------
# adapter config
# --------------------------------------------------------------------------


def config_from_dict(data):
    """Build an :class:`AdapterConfig` from degrees/centimeters fields.

    ``beta_deg`` and ``b_m_cm`` set both mirrors; ``beta_front_deg`` etc.
    override one side.
    """
    where = "adapter config"
    if "schema" in data and data["schema"] != ADAPTER_SCHEMA:
        raise SchemaError(f"{where}: unexpected schema {data['schema']!r}")
    beta = data.get("beta_deg")
    b_m = data.get("b_m_cm")
    try:
        beta_front = data.get("beta_front_deg", beta)
        beta_back = data.get("beta_back_deg", beta)
        b_front = data.get("b_m_front_cm", b_m)
        b_back = data.get("b_m_back_cm", b_m)
        if None in (beta_front, beta_back, b_front, b_back):
            raise SchemaError(f"{where}: mirror angle and distance are required")
        baseline = data.get("baseline_cm")
        return AdapterConfig(
            beta_front=math.radians(float(beta_front)),
            beta_back=math.radians(float(beta_back)),
            b_m_front=float(b_front) / 100.0,
            b_m_back=float(b_back) / 100.0,
            l_m=float(_require(data, "l_m_cm", where)) / 100.0,
            alpha_real=math.radians(float(data.get("alpha_real_deg", 80.0))),
            h_avg=float(data.get("h_avg_m", 1.8)),
            baseline=None if baseline is None else float(baseline) / 100.0,
            camera_offset=tuple(float(c) / 100.0 for c in data.get("camera_offset_cm", (0.0, 0.0, 0.0))),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: {exc}") from exc


def config_to_dict(cfg):
    out = {
        "schema": ADAPTER_SCHEMA,
        "beta_front_deg": math.degrees(cfg.beta_front),
        "beta_back_deg": math.degrees(cfg.beta_back),
        "b_m_front_cm": cfg.b_m_front * 100.0,
        "b_m_back_cm": cfg.b_m_back * 100.0,
        "l_m_cm": cfg.l_m * 100.0,
        "alpha_real_deg": math.degrees(cfg.alpha_real),
        "h_avg_m": cfg.h_avg,
        "camera_offset_cm": [c * 100.0 for c in cfg.camera_offset],
    }
    if cfg.baseline is not None:
        out["baseline_cm"] = cfg.baseline * 100.0
    return out


def load_config(path):
    return config_from_dict(_load(path))


# --------------------------------------------------------------------------
# geometry values
# --------------------------------------------------------------------------


def transform_to_dict(t):
    return {"rotation": t.rotation.tolist(), "translation": t.translation.tolist()}


def transform_from_dict(d, where="transform"):
    try:
        return RigidTransform(np.array(d["rotation"], dtype=float), np.array(d["translation"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad rigid transform ({exc})") from exc


def camera_to_dict(cam, with_pose=True):
    out = {
        "fx": cam.fx,
        "fy": cam.fy,
        "cx": cam.cx,
        "cy": cam.cy,
        "skew": cam.skew,
        "k1": cam.k1,
        "k2": cam.k2,
        "image_size": list(cam.image_size),
    }
    if with_pose:
        out["pose"] = transform_to_dict(cam.pose)
    return out


def camera_from_dict(d, pose=None, where="camera"):
    try:
        return Camera(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            image_size=tuple(d["image_size"]),
            skew=float(d.get("skew", 0.0)),
            k1=float(d.get("k1", 0.0)),
            k2=float(d.get("k2", 0.0)),
            pose=pose if pose is not None else transform_from_dict(d["pose"], where) if "pose" in d else RigidTransform(),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: bad camera ({exc})") from exc


# --------------------------------------------------------------------------
# corners
# --------------------------------------------------------------------------


def corners_to_dict(obs):
    return {
        "schema": CORNERS_SCHEMA,
        "orientation": "upright",
        "board": {"rows": obs.board.rows, "cols": obs.board.cols, "square_size_m": obs.board.square_size},
        "image_size": {"cam_a": list(obs.image_size_a), "cam_b": list(obs.image_size_b)},
        "views": [
            {
                "view_id": v.view_id,
                "cam_a": [[int(r[0]), float(r[1]), float(r[2])] for r in v.cam_a],
                "cam_b": [[int(r[0]), float(r[1]), float(r[2])] for r in v.cam_b],
            }
            for v in obs.views
        ],
    }


def corners_from_dict(data, where="corners"):
    try:
        board = data["board"]
        spec = BoardSpec(int(board["rows"]), int(board["cols"]), float(board["square_size_m"]))
        sizes = data["image_size"]
        views = [
            ViewObservation(
                str(v["view_id"]),
                np.array(v["cam_a"], dtype=float).reshape(-1, 3),
                np.array(v["cam_b"], dtype=float).reshape(-1, 3),
            )
            for v in data["views"]
        ]
        return CornerObservations(spec, tuple(sizes["cam_a"]), tuple(sizes["cam_b"]), views)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: {exc}") from exc


def load_corners(path):
    return corners_from_dict(_load(path, CORNERS_SCHEMA), str(path))


# --------------------------------------------------------------------------
# calibration
# --------------------------------------------------------------------------


def _opt(x):
    return None if x is None else float(x)


def calibration_to_dict(res):
    return {
        "schema": CALIBRATION_SCHEMA,
        "cam_a": camera_to_dict(res.cam_a, with_pose=False),
        "cam_b": camera_to_dict(res.cam_b, with_pose=False),
        "relative": transform_to_dict(res.relative),
        "baseline_m": res.baseline,
        "mean_error_px": res.mean_error,
        "initial_mean_error_px": res.initial_mean_error,
        "rms_error_px": res.rms_error,
        "mean_error_no_distortion_px": _opt(res.mean_error_no_distortion),
        "converged": res.converged,
        "iterations": res.iterations,
        "options": dict(res.options),
        "views": [
            {
                "view_id": vid,
                "pose_a": transform_to_dict(res.poses_a[vid]),
                "pose_b": transform_to_dict(res.poses_b[vid]),
                "mean_error_a_px": _opt(res.view_errors[vid][0]),
                "mean_error_b_px": _opt(res.view_errors[vid][1]),
            }
            for vid in res.view_ids
        ],
    }


def calibration_from_dict(data, where="calibration"):
    try:
        rel = transform_from_dict(data["relative"], where)
        cam_a = camera_from_dict(data["cam_a"], RigidTransform(), where)
        cam_b = camera_from_dict(data["cam_b"], rel, where)
        views = data["views"]
        return CalibrationResult(
            cam_a=cam_a,
            cam_b=cam_b,
            relative=rel,
            view_ids=tuple(v["view_id"] for v in views),
            poses_a={v["view_id"]: transform_from_dict(v["pose_a"], where) for v in views},
            poses_b={v["view_id"]: transform_from_dict(v["pose_b"], where) for v in views},
            view_errors={v["view_id"]: (v.get("mean_error_a_px"), v.get("mean_error_b_px")) for v in views},
            mean_error=float(data["mean_error_px"]),
            initial_mean_error=float(data["initial_mean_error_px"]),
            rms_error=float(data["rms_error_px"]),
            converged=bool(data["converged"]),
            iterations=int(data["iterations"]),
            mean_error_no_distortion=data.get("mean_error_no_distortion_px"),
            options=dict(data.get("options", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError(f"{where}: {exc}") from exc


def load_calibration(path):
    return calibration_from_dict(_load(path, CALIBRATION_SCHEMA), str(path))


# --------------------------------------------------------------------------
# keypoints (detector layout: flat x, y, confidence triplets)
# --------------------------------------------------------------------------


def keypoints_to_dict(kp):
    return {"version": 1.3, "people": [{"person_id": [-1], "pose_keypoints_2d": kp.data.ravel().tolist()}]}


def keypoints_from_dict(data, person=0, where="keypoints"):
    try:
        flat = data["people"][person]["pose_keypoints_2d"]
    except (KeyError, IndexError, TypeError) as exc:
        raise SchemaError(f"{where}: no pose_keypoints_2d for person {person}") from exc
    if len(flat) != 3 * len(BODY_25):
        raise SchemaError(f"{where}: expected {3 * len(BODY_25)} values, got {len(flat)}")
    try:
        return Keypoints2D(np.array(flat, dtype=float))
    except ValueError as exc:
        raise SchemaError(f"{where}: {exc}") from exc


def load_keypoints(path, person=0):
    return keypoints_from_dict(_load(path), person, str(path))


def load_reference(path):
    """Tape measurements in centimeters, keyed by segment name; returns meters."""
    data = _load(path)
    out = {}
    for name in SEGMENTS:
        if name in data and data[name] is not None:
            out[name] = float(data[name]) / 100.0
    unknown = set(data) - set(SEGMENTS) - {"schema", "units"}
    if unknown:
        raise SchemaError(f"{path}: unknown segments {sorted(unknown)}")
    if data.get("units", "cm") != "cm":
        raise SchemaError(f"{path}: reference values must be in cm")
    return out


# --------------------------------------------------------------------------
# tables
# --------------------------------------------------------------------------


def csv_text(header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def manifest(subcommand, inputs, outputs, args, seed=None):
    """Run manifest; ``inputs`` maps a role to a path, ``args`` are the parsed flags."""
    ins = {role: {"path": str(p), "sha256": sha256_file(p)} for role, p in sorted(inputs.items())}
    digest = hashlib.sha256(
        json.dumps({"args": args, "inputs": {k: v["sha256"] for k, v in ins.items()}}, sort_keys=True).encode()
    ).hexdigest()
    return {
        "schema": MANIFEST_SCHEMA,
        "subcommand": subcommand,
        "inputs": ins,
        "outputs": sorted(outputs),
        "config_hash": digest,
        "seed": seed,
        "tool_version": __version__,
    }


def write_outputs(out_dir, files):
    """Write ``{name: text}`` atomically (temp file then rename) into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(dir=out, prefix=f".{name}.", suffix=".tmp")
            staged.append((tmp, out / name))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, dest in staged:
        os.replace(tmp, dest)
    return [dest for _, dest in staged]
