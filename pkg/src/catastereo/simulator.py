"""Synthetic catadioptric rig with exact ground truth.

The simulator builds the two real phone cameras and their mirrors from an
:class:`~catastereo.fov.AdapterConfig`, derives the virtual cameras, and
renders chessboard corners and BODY_25 keypoints. Visibility is decided by
tracing through the finite mirror patch, independently of the virtual-camera
model, so the simulator doubles as an oracle for :mod:`catastereo.geometry`.

Rendered pixels use the upright convention expected by calibration: the back
camera's image is flipped horizontally, the front camera's image is flipped
vertically (flip plus a 180 degree rotation).
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fov, geometry
from .calibration import BoardSpec, CornerObservations, ViewObservation
from .errors import BehindCameraError, CatastereoError, EmptyCommonFovError, OutOfMirrorError
from .geometry import Camera, RigidTransform, StereoRig
from .reconstruction import BODY_25, JOINT, Keypoints2D, triangulate_points

MAX_ATTEMPTS = 10_000
IMAGE_SIZE = (1080, 1920)


def default_intrinsics(alpha_real=math.radians(80.0), image_size=IMAGE_SIZE, front=False):
    """Portrait camera whose vertical FOV is ``alpha_real``.

    The front camera gets a slightly shorter focal length and an off-center
    principal point so the two calibrations are not interchangeable.
    """
    w, h = image_size
    f = (h / 2.0) / math.tan(alpha_real / 2.0)
    if front:
        return dict(fx=0.92 * f, fy=0.92 * f, cx=(w - 1) / 2.0 + 3.1, cy=(h - 1) / 2.0 - 4.7, image_size=image_size)
    return dict(fx=f, fy=f, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0, image_size=image_size)


@dataclass(frozen=True, eq=False)
class MirrorPatch:
    """Square mirror in its host camera's frame."""

    mirror: geometry.Mirror
    center: np.ndarray
    axis_u: np.ndarray
    axis_v: np.ndarray
    half_size: float

    @classmethod
    def from_design(cls, beta, b_m, l_m):
        return cls(
            fov.mirror_for(beta, b_m),
            np.array([0.0, 0.0, b_m]),
            np.array([1.0, 0.0, 0.0]),
            np.array([0.0, math.cos(beta), math.sin(beta)]),
            l_m / 2.0,
        )


@dataclass(frozen=True, eq=False)
class SimRig:
    config: fov.AdapterConfig
    real_a: Camera  # back
    real_b: Camera  # front
    patch_a: MirrorPatch
    patch_b: MirrorPatch
    virtual_a: Camera
    virtual_b: Camera
    rig: StereoRig  # upright cameras, world (phone) frame poses

    @property
    def mirrors(self):
        return self.patch_a.mirror, self.patch_b.mirror


def build_rig(cfg, intrinsics_a=None, intrinsics_b=None):
    """Real cameras, mirrors and the upright virtual stereo pair of ``cfg``."""
    intrinsics_a = intrinsics_a or default_intrinsics(cfg.alpha_real)
    intrinsics_b = intrinsics_b or default_intrinsics(cfg.alpha_real, front=True)
    pose_a, pose_b = fov.real_poses(cfg)
    real_a = Camera(**intrinsics_a, pose=pose_a)
    real_b = Camera(**intrinsics_b, pose=pose_b)
    patch_a = MirrorPatch.from_design(cfg.beta_back, cfg.b_m_back, cfg.l_m)
    patch_b = MirrorPatch.from_design(cfg.beta_front, cfg.b_m_front, cfg.l_m)
    virtual_a = geometry.virtual_camera(real_a, patch_a.mirror)
    virtual_b = geometry.virtual_camera(real_b, patch_b.mirror)
    cam_a = geometry.unflipped(virtual_a)
    cam_b = geometry.rotate_image_180(geometry.unflipped(virtual_b))
    return SimRig(cfg, real_a, real_b, patch_a, patch_b, virtual_a, virtual_b, StereoRig.from_cameras(cam_a, cam_b))


def trace_via_mirror(real, patch, points):
    """Pixels seen by ``real`` through ``patch``, plus a visibility mask.

    Points are world coordinates ``(N, 3)``. A point is visible when it is on
    the reflective side of the mirror, its reflection is in front of the
    camera, and the camera ray meets the plane inside the square patch.
    Pixels of invisible points are NaN.
    """
    pts = real.pose.apply(np.atleast_2d(np.asarray(points, dtype=float)))
    n, o = patch.mirror.normal, patch.mirror.offset
    side = pts @ n - o
    image = pts - 2.0 * side[:, None] * n
    denom = image @ n
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = o / denom
    hit = lam[:, None] * image
    rel = hit - patch.center
    inside = (np.abs(rel @ patch.axis_u) <= patch.half_size) & (np.abs(rel @ patch.axis_v) <= patch.half_size)
    ok = (side >= 0) & (image[:, 2] > 0) & (lam > 0) & (lam <= 1.0 + 1e-12) & inside
    uv = np.full((len(pts), 2), np.nan)
    if np.any(ok):
        bare = real.with_pose(RigidTransform())
        uv[ok] = geometry.project(bare, image[ok])
    return uv, ok


def project_via_mirror(real, patch, point):
    """Pixel of one world point seen through the mirror; raises when hidden."""
    pc = real.pose.apply(np.asarray(point, dtype=float))
    if pc @ patch.mirror.normal - patch.mirror.offset < 0:
        raise OutOfMirrorError("point is behind the mirror")
    uv, ok = trace_via_mirror(real, patch, point)
    if not ok[0]:
        image = pc - 2.0 * (pc @ patch.mirror.normal - patch.mirror.offset) * patch.mirror.normal
        if image[2] <= 0:
            raise BehindCameraError("reflected point is behind the camera")
        raise OutOfMirrorError("camera ray misses the mirror patch")
    return uv[0]


def ray_traced_center(real, mirror):
    """Virtual camera center found by intersecting reflected rays.

    Rays leave the real center, bounce off the plane by the law of
    reflection, and are extended backwards; the least-squares meeting point
    of those lines is the virtual center. Returned in world coordinates.
    """
    rot = real.pose.rotation
    n, o = mirror.normal, mirror.offset
    dirs = np.array([[0.0, 0.0, 1.0], [0.2, 0.1, 1.0], [-0.1, 0.3, 1.0], [0.15, -0.25, 1.0]])
    a = np.zeros((3, 3))
    b = np.zeros(3)
    for d in dirs:
        d = d / np.linalg.norm(d)
        t = o / (d @ n)
        hit = t * d
        out = d - 2.0 * (d @ n) * n
        p = np.eye(3) - np.outer(out, out)
        a += p
        b += p @ hit
    center_cam = np.linalg.solve(a, b)
    return rot.T @ (center_cam - real.pose.translation)


def observe(sim, points):
    """Upright pixels in both virtual cameras and per-camera visibility."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = []
    for real, patch, cam in ((sim.real_a, sim.patch_a, sim.rig.cam_a), (sim.real_b, sim.patch_b, sim.rig.cam_b)):
        raw, ok = trace_via_mirror(real, patch, points)
        ok = ok & real.in_image(np.nan_to_num(raw, nan=-1.0))
        uv = np.full((len(points), 2), np.nan)
        if np.any(ok):
            uv[ok] = cam.project(points[ok])
        out.append((uv, ok))
    return out


# --------------------------------------------------------------------------
# chessboard sessions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SyntheticSession:
    sim: SimRig
    board: BoardSpec
    board_poses: list  # board -> world transforms, one per view
    observations: CornerObservations
    sigma: float
    seed: int
    skeleton: np.ndarray = None  # world joints (25, 3)
    keypoints: tuple = None  # (Keypoints2D a, Keypoints2D b)


def _viewing_frame(sim):
    centers = np.array([sim.rig.cam_a.center, sim.rig.cam_b.center])
    return centers.mean(axis=0)


def _sample_board_pose(rng, sim, board, band, tilt_range, origin, a_in):
    d = rng.uniform(*band)
    bw = (board.cols - 1) * board.square_size
    bh = (board.rows - 1) * board.square_size
    spread_z = max(0.0, 2.0 * d * math.tan(a_in) - sim.rig.baseline - bh)
    center = origin + np.array(
        [rng.uniform(-0.15, 0.15) * d, d, rng.uniform(-0.5, 0.5) * spread_z]
    )
    # board x -> world x, board y -> world -z, normal along +y
    base = np.column_stack([[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])
    phi = rng.uniform(0.0, 2.0 * math.pi)
    tilt = rng.uniform(*tilt_range)
    spin = rng.uniform(-math.radians(20.0), math.radians(20.0))
    r = (
        base
        @ geometry.rotvec_to_matrix(tilt * np.array([math.cos(phi), math.sin(phi), 0.0]))
        @ geometry.rotvec_to_matrix([0.0, 0.0, spin])
    )
    local_center = np.array([bw / 2.0, bh / 2.0, 0.0])
    return RigidTransform(r, center - r @ local_center)


def generate_chessboard_session(
    sim,
    n_views=14,
    board=BoardSpec(6, 9, 0.025),
    sigma=0.0,
    seed=0,
    distance_band=(0.6, 1.6),
    tilt_range=(math.radians(10.0), math.radians(40.0)),
    min_separation=math.radians(10.0),
):
    """Random board poses visible in both virtual cameras, rendered with noise.

    Board normals are pairwise at least ``min_separation`` apart so the plane
    calibration is well conditioned. Pose sampling is rejection based and
    gives up after ``MAX_ATTEMPTS`` tries.
    """
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    rng = np.random.default_rng(seed)
    origin = _viewing_frame(sim)
    a_in = fov.fov_report(sim.config).alpha_in
    objp = board.object_points()
    poses, normals, rendered = [], [], []
    attempts = 0
    while len(poses) < n_views:
        attempts += 1
        if attempts > MAX_ATTEMPTS:
            raise EmptyCommonFovError(
                f"found only {len(poses)} of {n_views} board poses in the common FOV after {MAX_ATTEMPTS} attempts"
            )
        pose = _sample_board_pose(rng, sim, board, distance_band, tilt_range, origin, a_in)
        normal = pose.rotation[:, 2]
        if any(math.acos(min(1.0, abs(normal @ m))) < min_separation for m in normals):
            continue
        pts = pose.apply(objp)
        (uv_a, ok_a), (uv_b, ok_b) = observe(sim, pts)
        if not (ok_a.all() and ok_b.all()):
            continue
        poses.append(pose)
        normals.append(normal)
        rendered.append((uv_a, uv_b))

    idx = np.arange(board.n_corners, dtype=float)
    views = []
    for i, (uv_a, uv_b) in enumerate(rendered):
        na = rng.normal(0.0, sigma, uv_a.shape) if sigma > 0 else 0.0
        nb = rng.normal(0.0, sigma, uv_b.shape) if sigma > 0 else 0.0
        views.append(
            ViewObservation(
                f"view{i + 1:02d}",
                np.column_stack([idx, uv_a + na]),
                np.column_stack([idx, uv_b + nb]),
            )
        )
    obs = CornerObservations(board, sim.rig.cam_a.image_size, sim.rig.cam_b.image_size, views)
    return SyntheticSession(sim, board, poses, obs, float(sigma), int(seed))


# --------------------------------------------------------------------------
# skeletons
# --------------------------------------------------------------------------

# Tape-measure row of the reference subject, meters.
REFERENCE_SEGMENTS = {
    "lower_arm": 0.212,
    "upper_arm": 0.247,
    "shoulders": 0.310,
    "hips": 0.221,
    "upper_leg": 0.389,
    "lower_leg": 0.435,
}


def skeleton_template(height=1.8, segments=None):
    """BODY_25 joints in a body frame (x to the subject's left, y up, z forward).

    Limb joints realize ``segments`` exactly; the vertical extent of all
    joints (heels and toes at 0, eyes and ears at the top) equals ``height``.
    """
    s = dict(REFERENCE_SEGMENTS)
    s.update(segments or {})
    ankle_y = 0.08
    knee_y = ankle_y + s["lower_leg"]
    hip_y = knee_y + s["upper_leg"]
    eye_y = height
    neck_y = eye_y - 0.19
    if neck_y <= hip_y:
        raise ValueError("height too small for the requested leg lengths")
    hx = s["hips"] / 2.0
    sx = s["shoulders"] / 2.0
    j = np.zeros((len(BODY_25), 3))

    def put(name, x, y, z=0.0):
        j[JOINT[name]] = (x, y, z)

    put("Neck", 0.0, neck_y)
    put("Nose", 0.0, neck_y + 0.15, 0.08)
    put("REye", -0.035, eye_y, 0.06)
    put("LEye", 0.035, eye_y, 0.06)
    put("REar", -0.075, eye_y, -0.02)
    put("LEar", 0.075, eye_y, -0.02)
    put("MidHip", 0.0, hip_y)
    for side, sign in (("R", -1.0), ("L", 1.0)):
        put(f"{side}Shoulder", sign * sx, neck_y)
        put(f"{side}Elbow", sign * sx, neck_y - s["upper_arm"])
        put(f"{side}Wrist", sign * sx, neck_y - s["upper_arm"] - s["lower_arm"])
        put(f"{side}Hip", sign * hx, hip_y)
        put(f"{side}Knee", sign * hx, knee_y)
        put(f"{side}Ankle", sign * hx, ankle_y)
        put(f"{side}Heel", sign * hx, 0.0, -0.05)
        put(f"{side}BigToe", sign * (hx - 0.03), 0.0, 0.10)
        put(f"{side}SmallToe", sign * (hx + 0.03), 0.0, 0.09)
    return j


def place_subject(sim, joints_body, distance, lateral=0.0):
    """Stand the subject ``distance`` meters in front of the virtual pair.

    Height runs along the baseline (phone normal) and the subject faces the
    rig, vertically centered on the rig's symmetry plane.
    """
    origin = _viewing_frame(sim)
    extent = joints_body[:, 1].max() + joints_body[:, 1].min()
    # body x -> world x, body up -> world +z, body forward -> world -y
    r = np.column_stack([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, -1.0, 0.0]])
    shift = origin + np.array([lateral, distance, -extent / 2.0])
    return joints_body @ r.T + shift


def generate_skeleton_views(sim, joints_world, sigma=0.0, seed=0):
    """Noisy BODY_25 detections in both upright virtual images.

    Joints outside either camera's mirror view get ``(0, 0, 0)``, the
    detector's convention for a missing keypoint.
    """
    joints_world = np.asarray(joints_world, dtype=float)
    dist = float(np.min(joints_world[:, 1] - _viewing_frame(sim)[1]))
    try:
        need = fov.fov_report(sim.config).d_min
    except CatastereoError:
        need = None
    if need is not None and dist < need:
        warnings.warn(f"subject at {dist:.2f} m is closer than d_min = {need:.2f} m", stacklevel=2)
    rng = np.random.default_rng(seed)
    out = []
    for uv, ok in observe(sim, joints_world):
        noise = rng.normal(0.0, sigma, uv.shape) if sigma > 0 else np.zeros(uv.shape)
        data = np.zeros((len(BODY_25), 3))
        data[ok, :2] = uv[ok] + noise[ok]
        data[ok, 2] = 1.0
        out.append(Keypoints2D(data))
    return tuple(out)


def all_joints_visible(sim, joints_world):
    (_, ok_a), (_, ok_b) = observe(sim, joints_world)
    return bool(ok_a.all() and ok_b.all())


def empirical_d_min(sim, joints_body, lo=0.2, hi=20.0, tol=1e-4):
    """Smallest distance at which every joint is visible in both cameras."""
    if not all_joints_visible(sim, place_subject(sim, joints_body, hi)):
        raise EmptyCommonFovError(f"subject is not fully visible even at {hi} m")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if all_joints_visible(sim, place_subject(sim, joints_body, mid)):
            hi = mid
        else:
            lo = mid
    return hi


def depth_errors(sim, distance, sigma, n_points=100, seed=0, spread=0.3):
    """Absolute depth errors of noisy triangulation at ``distance`` meters.

    Points are scattered around the rig's viewing direction; the returned
    array holds ``|depth_estimated - depth_true|`` measured along ``cam_a``'s
    optical axis.
    """
    rng = np.random.default_rng(seed)
    origin = _viewing_frame(sim)
    pts = origin + np.column_stack(
        [
            rng.uniform(-spread, spread, n_points),
            distance + rng.uniform(-0.1, 0.1, n_points),
            rng.uniform(-spread, spread, n_points),
        ]
    )
    rig = sim.rig
    uv_a = rig.cam_a.project(pts) + rng.normal(0.0, sigma, (n_points, 2))
    uv_b = rig.cam_b.project(pts) + rng.normal(0.0, sigma, (n_points, 2))
    tri = triangulate_points(rig, uv_a, uv_b)
    truth = rig.cam_a.pose.apply(pts)
    return np.abs(tri.points[:, 2] - truth[:, 2])
