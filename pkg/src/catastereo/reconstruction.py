"""Triangulation, calibration-plane residuals and body-segment lengths.

All 3D output is expressed in ``cam_a``'s frame, in meters.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    CatastereoError,
    CheiralityError,
    DegeneratePointsError,
    EmptySkeletonError,
    ParallelRaysError,
    UnreliableDepthError,
)
from .geometry import RigidTransform

MIN_TRIANGULATION_ANGLE = math.radians(0.1)
DEFAULT_CONFIDENCE = 0.3

BODY_25 = (
    "Nose",
    "Neck",
    "RShoulder",
    "RElbow",
    "RWrist",
    "LShoulder",
    "LElbow",
    "LWrist",
    "MidHip",
    "RHip",
    "RKnee",
    "RAnkle",
    "LHip",
    "LKnee",
    "LAnkle",
    "REye",
    "LEye",
    "REar",
    "LEar",
    "LBigToe",
    "LSmallToe",
    "LHeel",
    "RBigToe",
    "RSmallToe",
    "RHeel",
)
JOINT = {name: i for i, name in enumerate(BODY_25)}

# segment -> ((side, joint, joint), ...); limbs are averaged over sides
SEGMENTS = {
    "lower_arm": (("right", "RElbow", "RWrist"), ("left", "LElbow", "LWrist")),
    "upper_arm": (("right", "RShoulder", "RElbow"), ("left", "LShoulder", "LElbow")),
    "shoulders": (("both", "RShoulder", "LShoulder"),),
    "hips": (("both", "RHip", "LHip"),),
    "upper_leg": (("right", "RHip", "RKnee"), ("left", "LHip", "LKnee")),
    "lower_leg": (("right", "RKnee", "RAnkle"), ("left", "LKnee", "LAnkle")),
}


@dataclass(frozen=True, eq=False)
class Keypoints2D:
    """25 ``(u, v, confidence)`` rows in BODY_25 order."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=float).reshape(-1, 3)
        if arr.shape[0] != len(BODY_25):
            raise CatastereoError(f"expected {len(BODY_25)} keypoints, got {arr.shape[0]}")
        conf = arr[:, 2]
        if np.any(~np.isfinite(conf)) or np.any(conf < 0) or np.any(conf > 1):
            raise CatastereoError("keypoint confidence outside [0, 1]")
        object.__setattr__(self, "data", arr)

    @property
    def uv(self):
        return self.data[:, :2]

    @property
    def confidence(self):
        return self.data[:, 2]


@dataclass(frozen=True)
class Triangulation:
    points: np.ndarray  # (N, 3) in cam_a frame
    residual_a: np.ndarray  # (N,) pixels
    residual_b: np.ndarray
    angle: np.ndarray  # (N,) radians between the two rays
    ok: np.ndarray  # (N,) passes angle and cheirality checks


def _rays(rig, uv_a, uv_b):
    """Undistorted normalized rays; ray b returned in cam_a's frame."""
    rel = rig.relative
    xa = rig.cam_a.normalized(uv_a)
    xb = rig.cam_b.normalized(uv_b)
    da = np.column_stack([xa, np.ones(len(xa))])
    db = np.column_stack([xb, np.ones(len(xb))]) @ rel.rotation
    return xa, xb, da, db


def _angles(da, db):
    cross = np.linalg.norm(np.cross(da, db), axis=1)
    return np.arctan2(cross, np.einsum("ij,ij->i", da, db))


def _finish(rig, points, uv_a, uv_b, angle):
    rel = rig.relative
    pb = points @ rel.rotation.T + rel.translation
    depth_ok = (points[:, 2] > 0) & (pb[:, 2] > 0)
    ra = np.full(len(points), np.nan)
    rb = np.full(len(points), np.nan)
    if np.any(depth_ok):
        a = rig.cam_a.with_pose(RigidTransform())
        b = rig.cam_b.with_pose(rel)
        ra[depth_ok] = np.linalg.norm(a.project(points[depth_ok]) - uv_a[depth_ok], axis=1)
        rb[depth_ok] = np.linalg.norm(b.project(points[depth_ok]) - uv_b[depth_ok], axis=1)
    ok = depth_ok & (angle >= MIN_TRIANGULATION_ANGLE)
    return Triangulation(points, ra, rb, angle, ok)


def triangulate_points(rig, uv_a, uv_b, method="dlt"):
    """Batch triangulation without raising; see :class:`Triangulation`."""
    uv_a = np.atleast_2d(np.asarray(uv_a, dtype=float))
    uv_b = np.atleast_2d(np.asarray(uv_b, dtype=float))
    xa, xb, da, db = _rays(rig, uv_a, uv_b)
    angle = _angles(da, db)
    if method == "dlt":
        p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
        p2 = rig.relative.as_matrix()[:3]
        finite = np.isfinite(xa).all(axis=1) & np.isfinite(xb).all(axis=1)
        hom = np.full((len(xa), 4), np.nan)
        hom[finite] = _kernels.triangulate(p1, p2, xa[finite], xb[finite])
        with np.errstate(divide="ignore", invalid="ignore"):
            points = hom[:, :3] / hom[:, 3:4]
    elif method == "midpoint":
        points = _midpoint(rig, da, db)
    else:
        raise ValueError(f"unknown triangulation method {method!r}")
    return _finish(rig, points, uv_a, uv_b, angle)


def _midpoint(rig, da, db):
    ob = -rig.relative.rotation.T @ rig.relative.translation
    w0 = -ob
    a = np.einsum("ij,ij->i", da, da)
    b = np.einsum("ij,ij->i", da, db)
    c = np.einsum("ij,ij->i", db, db)
    d = da @ w0
    e = db @ w0
    den = a * c - b * b
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (b * e - c * d) / den
        t = (a * e - b * d) / den
    pa = s[:, None] * da
    pb = ob + t[:, None] * db
    parallel = den <= 1e-15 * a * c
    out = 0.5 * (pa + pb)
    out[parallel] = np.nan
    return out


def _single(rig, uv_a, uv_b, method):
    uv_a = np.asarray(uv_a, dtype=float)
    single = uv_a.ndim == 1
    tri = triangulate_points(rig, uv_a, uv_b, method)
    if method == "midpoint" and np.any(~np.isfinite(tri.points)):
        raise ParallelRaysError("rays are parallel")
    if np.any(tri.angle < MIN_TRIANGULATION_ANGLE):
        raise UnreliableDepthError(
            f"triangulation angle {math.degrees(float(np.min(tri.angle))):.4f} deg is below 0.1 deg"
        )
    if not np.all(tri.ok):
        raise CheiralityError("triangulated point lies behind a camera")
    if single:
        return tri.points[0], (float(tri.residual_a[0]), float(tri.residual_b[0]))
    return tri.points, np.column_stack([tri.residual_a, tri.residual_b])


def triangulate_dlt(rig, uv_a, uv_b, return_residuals=False):
    """Linear triangulation of one pixel pair (or ``(N, 2)`` arrays).

    Pixels are undistorted first. Returns the point in ``cam_a``'s frame and,
    optionally, the reprojection residual in each view.
    """
    x, res = _single(rig, uv_a, uv_b, "dlt")
    return (x, res) if return_residuals else x


def triangulate_midpoint(rig, uv_a, uv_b):
    """Midpoint of the shortest segment between the back-projected rays."""
    x, _ = _single(rig, uv_a, uv_b, "midpoint")
    return x


def fit_plane(points):
    """Total least-squares plane; returns ``(normal, offset, rms)``.

    The normal's largest-magnitude component is made positive so the result
    does not depend on the point order.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegeneratePointsError("plane fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    _, sv, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    if sv[1] <= 1e-12 * max(sv[0], 1e-300):
        raise DegeneratePointsError("points are collinear")
    n = vt[2]
    if n[np.argmax(np.abs(n))] < 0:
        n = -n
    dist = (pts - centroid) @ n
    return n, float(n @ centroid), float(np.sqrt(np.mean(dist**2)))


@dataclass(frozen=True, eq=False)
class PlaneDistanceReport:
    view_ids: tuple
    distances_mm: np.ndarray  # (3, V): mean |deviation| per axis X, Y, Z
    plane_rms_mm: np.ndarray  # (V,) rms distance of triangulated corners to their fitted plane
    skipped: tuple = ()

    @property
    def mean_mm(self):
        return self.distances_mm.mean(axis=1)

    def table(self):
        """Rows ``X``, ``Y``, ``Z`` with one column per view plus the mean."""
        return np.column_stack([self.distances_mm, self.mean_mm])


def plane_distance_report(calib, obs, min_corners=4):
    """Per-view, per-axis deviation of triangulated corners from the posed board."""
    rig = calib.rig()
    objp = obs.board.object_points()
    ids, cols, rms, skipped = [], [], [], []
    for view in obs.views:
        if view.view_id not in calib.poses_a:
            skipped.append(view.view_id)
            continue
        a = {int(r[0]): r[1:] for r in view.cam_a}
        b = {int(r[0]): r[1:] for r in view.cam_b}
        common = sorted(set(a) & set(b))
        if len(common) < min_corners:
            skipped.append(view.view_id)
            continue
        tri = triangulate_points(rig, np.array([a[i] for i in common]), np.array([b[i] for i in common]))
        if not np.all(tri.ok):
            skipped.append(view.view_id)
            continue
        ideal = calib.poses_a[view.view_id].apply(objp[common])
        cols.append(np.mean(np.abs(tri.points - ideal), axis=0) * 1000.0)
        rms.append(fit_plane(tri.points)[2] * 1000.0)
        ids.append(view.view_id)
    if not ids:
        raise CatastereoError("no view had enough corners seen by both cameras")
    return PlaneDistanceReport(tuple(ids), np.array(cols).T, np.array(rms), tuple(skipped))


@dataclass(frozen=True, eq=False)
class Skeleton:
    joints: np.ndarray  # (25, 3), NaN where invalid
    valid: np.ndarray  # (25,) bool
    residual_a: np.ndarray = None
    residual_b: np.ndarray = None

    def transformed(self, transform):
        joints = np.full_like(self.joints, np.nan)
        joints[self.valid] = transform.apply(self.joints[self.valid])
        return Skeleton(joints, self.valid.copy(), self.residual_a, self.residual_b)


def reconstruct_skeleton(rig, kp_a, kp_b, confidence_threshold=DEFAULT_CONFIDENCE):
    use = (kp_a.confidence >= confidence_threshold) & (kp_b.confidence >= confidence_threshold)
    joints = np.full((len(BODY_25), 3), np.nan)
    ra = np.full(len(BODY_25), np.nan)
    rb = np.full(len(BODY_25), np.nan)
    valid = np.zeros(len(BODY_25), dtype=bool)
    idx = np.flatnonzero(use)
    if len(idx):
        tri = triangulate_points(rig, kp_a.uv[idx], kp_b.uv[idx])
        good = idx[tri.ok]
        joints[good] = tri.points[tri.ok]
        ra[good] = tri.residual_a[tri.ok]
        rb[good] = tri.residual_b[tri.ok]
        valid[good] = True
    if valid.sum() < 2:
        raise EmptySkeletonError(f"only {int(valid.sum())} joints could be triangulated")
    return Skeleton(joints, valid, ra, rb)


@dataclass(frozen=True)
class SegmentReport:
    lengths: dict  # segment -> meters or None
    per_side: dict  # segment -> {side: meters or None}
    reference: dict = None  # segment -> meters
    differences: dict = field(default_factory=dict)  # segment -> |length - reference|
    mean_difference: float = None


def compare_lengths(lengths, reference):
    """Per-segment absolute differences and their mean (unavailable ones skipped)."""
    diffs = {}
    for name, value in lengths.items():
        ref = reference.get(name) if reference else None
        if value is not None and ref is not None:
            diffs[name] = abs(value - ref)
    mean = float(np.mean(list(diffs.values()))) if diffs else None
    return diffs, mean


def segment_lengths(skeleton, reference=None):
    lengths, per_side = {}, {}
    for name, pairs in SEGMENTS.items():
        sides = {}
        for side, j1, j2 in pairs:
            i1, i2 = JOINT[j1], JOINT[j2]
            if skeleton.valid[i1] and skeleton.valid[i2]:
                sides[side] = float(np.linalg.norm(skeleton.joints[i1] - skeleton.joints[i2]))
            else:
                sides[side] = None
        available = [v for v in sides.values() if v is not None]
        lengths[name] = float(np.mean(available)) if available else None
        per_side[name] = sides
    diffs, mean = compare_lengths(lengths, reference) if reference else ({}, None)
    return SegmentReport(lengths, per_side, dict(reference) if reference else None, diffs, mean)
