"""Plane-based calibration of the virtual stereo pair.

Pipeline: per-view homographies, closed-form intrinsics from the image of
the absolute conic, per-view board poses, a first relative pose from
quaternion averaging, and finally a joint damped least-squares refinement of
both intrinsic sets (optionally with radial distortion), every board pose and
the relative transform.

Pixel coordinates are expected already flipped/rotated to the upright
orientation of each virtual camera.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import _kernels
from .errors import (
    CatastereoError,
    DegeneratePointsError,
    IllConditionedError,
    InsufficientDataError,
)
from .geometry import Camera, RigidTransform, StereoRig, hat, nearest_rotation, rotvec_to_matrix

log = logging.getLogger(__name__)

HUBER_DELTA = 2.0


@dataclass(frozen=True)
class BoardSpec:
    rows: int
    cols: int
    square_size: float

    @property
    def n_corners(self):
        return self.rows * self.cols

    def object_points(self):
        """Board-frame corner positions; corner ``i`` is row ``i // cols``."""
        r, c = np.divmod(np.arange(self.n_corners), self.cols)
        return np.column_stack([c * self.square_size, r * self.square_size, np.zeros(self.n_corners)])


@dataclass(frozen=True, eq=False)
class ViewObservation:
    """Corner detections of one view; each camera entry is ``(k, 3)`` rows of ``index, u, v``."""

    view_id: str
    cam_a: np.ndarray
    cam_b: np.ndarray

    def __post_init__(self):
        for name in ("cam_a", "cam_b"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1, 3)
            object.__setattr__(self, name, arr)

    def corners(self, which):
        return self.cam_a if which == "a" else self.cam_b


@dataclass(frozen=True, eq=False)
class CornerObservations:
    board: BoardSpec
    image_size_a: tuple
    image_size_b: tuple
    views: list

    def __post_init__(self):
        seen = set()
        for view in self.views:
            if view.view_id in seen:
                raise CatastereoError(f"duplicate view id {view.view_id!r}")
            seen.add(view.view_id)
            for arr in (view.cam_a, view.cam_b):
                idx = arr[:, 0]
                if np.any(idx < 0) or np.any(idx >= self.board.n_corners) or np.any(idx != np.round(idx)):
                    raise CatastereoError(f"view {view.view_id!r}: corner index out of range")
                if len(np.unique(idx)) != len(idx):
                    raise CatastereoError(f"view {view.view_id!r}: repeated corner index")

    def image_size(self, which):
        return self.image_size_a if which == "a" else self.image_size_b


# --------------------------------------------------------------------------
# closed-form steps
# --------------------------------------------------------------------------


def normalize_points(points):
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        raise DegeneratePointsError("need at least two points to normalize")
    centroid = pts.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(pts - centroid, axis=1))
    if mean_dist < 1e-300:
        raise DegeneratePointsError("all points are identical")
    s = np.sqrt(2.0) / mean_dist
    t = np.array([[s, 0.0, -s * centroid[0]], [0.0, s, -s * centroid[1]], [0.0, 0.0, 1.0]])
    return (pts - centroid) * s, t


def _check_spread(pts, what):
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= 1e-9 * sv[0]:
        raise DegeneratePointsError(f"{what} points are collinear")


def estimate_homography(board_points, image_points):
    """Normalized DLT homography mapping board ``(x, y)`` to pixels."""
    src = np.asarray(board_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(image_points, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise CatastereoError("board and image point counts differ")
    if len(src) < 4:
        raise InsufficientDataError(f"homography needs >= 4 correspondences, got {len(src)}")
    _check_spread(src, "board")
    _check_spread(dst, "image")
    s_n, t_s = normalize_points(src)
    d_n, t_d = normalize_points(dst)

    n = len(src)
    a = np.zeros((2 * n, 9))
    x, y = s_n[:, 0], s_n[:, 1]
    u, v = d_n[:, 0], d_n[:, 1]
    a[0::2, 0:3] = np.column_stack([-x, -y, -np.ones(n)])
    a[0::2, 6:9] = np.column_stack([u * x, u * y, u])
    a[1::2, 3:6] = np.column_stack([-x, -y, -np.ones(n)])
    a[1::2, 6:9] = np.column_stack([v * x, v * y, v])
    _, sv, vt = np.linalg.svd(a)
    sv = np.concatenate([sv, np.zeros(9 - len(sv))])
    if sv[7] <= 1e-12 * sv[0]:
        raise DegeneratePointsError("homography system is rank deficient")
    h = np.linalg.solve(t_d, vt[-1].reshape(3, 3) @ t_s)
    if abs(h[2, 2]) > 1e-12 * np.linalg.norm(h):
        h = h / h[2, 2]
    return h


def _v(h, i, j):
    a, b = h[:, i], h[:, j]
    return np.array(
        [
            a[0] * b[0],
            a[0] * b[1] + a[1] * b[0],
            a[1] * b[1],
            a[2] * b[0] + a[0] * b[2],
            a[2] * b[1] + a[1] * b[2],
            a[2] * b[2],
        ]
    )


def _conditioner(image_size):
    if image_size is None:
        return np.eye(3)
    w, h = image_size
    s = max(w, h) / 2.0
    return np.array([[1 / s, 0.0, -(w - 1) / (2 * s)], [0.0, 1 / s, -(h - 1) / (2 * s)], [0.0, 0.0, 1.0]])


def intrinsics_from_homographies(homographies, image_size=None, estimate_skew=False):
    """Closed-form intrinsics ``(fx, fy, cx, cy, skew)``.

    Each homography gives two linear constraints on ``B = K^-T K^-1``; with
    zero skew, ``B12`` is dropped from the unknowns. Homographies are first
    mapped into a conditioned pixel frame derived from ``image_size``.
    """
    hs = list(homographies)
    if len(hs) < 3:
        raise InsufficientDataError(f"intrinsics need >= 3 views, got {len(hs)}")
    tc = _conditioner(image_size)
    rows = []
    for h in hs:
        h = tc @ np.asarray(h, dtype=float)
        h = h / np.linalg.norm(h)
        rows.append(_v(h, 0, 1))
        rows.append(_v(h, 0, 0) - _v(h, 1, 1))
    v = np.array(rows)
    if not estimate_skew:
        v = np.delete(v, 1, axis=1)
    _, sv, vt = np.linalg.svd(v)
    cond = sv[0] / sv[-2] if sv[-2] > 0 else np.inf
    if cond > 1e10:
        raise IllConditionedError("board poses do not constrain the intrinsics", cond)
    b = vt[-1]
    if not estimate_skew:
        b = np.insert(b, 1, 0.0)
    if b[0] < 0:
        b = -b
    b11, b12, b22, b13, b23, b33 = b
    den = b11 * b22 - b12 * b12
    if den <= 0:
        raise IllConditionedError("conic estimate is not positive definite", cond)
    v0 = (b12 * b13 - b11 * b23) / den
    lam = b33 - (b13 * b13 + v0 * (b12 * b13 - b11 * b23)) / b11
    if lam / b11 <= 0:
        raise IllConditionedError("conic estimate is not positive definite", cond)
    alpha = np.sqrt(lam / b11)
    beta = np.sqrt(lam * b11 / den)
    gamma = -b12 * alpha * alpha * beta / lam
    u0 = gamma * v0 / beta - b13 * alpha * alpha / lam
    k = np.linalg.solve(tc, np.array([[alpha, gamma, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]]))
    k = k / k[2, 2]
    return float(k[0, 0]), float(k[1, 1]), float(k[0, 2]), float(k[1, 2]), float(k[0, 1])


def extrinsics_from_homography(h, k):
    """Board-to-camera transform from a homography and intrinsic matrix."""
    k = np.asarray(k, dtype=float)
    if abs(np.linalg.det(k)) < 1e-12:
        raise CatastereoError("intrinsic matrix is singular")
    m = np.linalg.solve(k, np.asarray(h, dtype=float))
    lam = 2.0 / (np.linalg.norm(m[:, 0]) + np.linalg.norm(m[:, 1]))
    if m[2, 2] * lam < 0:
        lam = -lam
    r1, r2, t = lam * m[:, 0], lam * m[:, 1], lam * m[:, 2]
    r = nearest_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    return RigidTransform(r, t)


def stereo_relative(poses_a, poses_b):
    """Average ``pose_b,i ∘ pose_a,i^-1`` over the common views.

    Rotations are averaged with the dominant eigenvector of the summed
    quaternion outer products, translations component-wise.
    """
    poses_a, poses_b = list(poses_a), list(poses_b)
    if not poses_a or len(poses_a) != len(poses_b):
        raise InsufficientDataError("relative pose needs at least one view seen by both cameras")
    rels = [pb.compose(pa.inverse()) for pa, pb in zip(poses_a, poses_b)]
    quats = Rotation.from_matrix(np.array([r.rotation for r in rels])).as_quat()
    _, vecs = np.linalg.eigh(quats.T @ quats)
    q = vecs[:, -1]
    rot = Rotation.from_quat(q).as_matrix()
    trans = np.mean([r.translation for r in rels], axis=0)
    return RigidTransform(nearest_rotation(rot), trans)


# --------------------------------------------------------------------------
# joint refinement
# --------------------------------------------------------------------------


@dataclass
class _Problem:
    obj: np.ndarray  # (M, 3) board points
    uv: np.ndarray  # (M, 2) observations
    cam: np.ndarray  # (M,) 0 for a, 1 for b
    view: np.ndarray  # (M,) view index
    n_views: int
    free: np.ndarray  # indices into the 7 intrinsics that are estimated
    huber: bool = False

    @property
    def n_params(self):
        return 2 * len(self.free) + 6 * self.n_views + 6


@dataclass
class _State:
    intr: np.ndarray  # (2, 7)
    rot: np.ndarray  # (V, 3, 3) board -> cam a
    trans: np.ndarray  # (V, 3)
    rel_rot: np.ndarray
    rel_trans: np.ndarray

    def copy(self):
        return _State(self.intr.copy(), self.rot.copy(), self.trans.copy(), self.rel_rot.copy(), self.rel_trans.copy())


def _residuals(prob, st, jacobian=False):
    pa = np.einsum("mij,mj->mi", st.rot[prob.view], prob.obj) + st.trans[prob.view]
    res = np.empty((len(prob.obj), 2))
    jac = np.zeros((2 * len(prob.obj), prob.n_params)) if jacobian else None
    ni = len(prob.free)
    pose0 = 2 * ni
    rel0 = pose0 + 6 * prob.n_views
    for c in (0, 1):
        sel = np.flatnonzero(prob.cam == c)
        if not len(sel):
            continue
        p = pa[sel] if c == 0 else pa[sel] @ st.rel_rot.T + st.rel_trans
        if np.any(p[:, 2] <= 0):
            return None, None
        uv, jp, ji = _kernels.project_jacobian(p, st.intr[c])
        res[sel] = uv - prob.uv[sel]
        if not jacobian:
            continue
        rows = np.empty(2 * len(sel), dtype=int)
        rows[0::2], rows[1::2] = 2 * sel, 2 * sel + 1
        jac[rows, c * ni : (c + 1) * ni] = ji[:, :, prob.free].reshape(-1, ni)
        ra = pa[sel] - st.trans[prob.view[sel]]
        dpose = np.concatenate([-_hat_batch(ra), np.broadcast_to(np.eye(3), (len(sel), 3, 3))], axis=2)
        if c == 1:
            dpose = np.einsum("ij,mjk->mik", st.rel_rot, dpose)
            drel = np.concatenate(
                [-_hat_batch(pa[sel] @ st.rel_rot.T), np.broadcast_to(np.eye(3), (len(sel), 3, 3))], axis=2
            )
            jac[rows, rel0 : rel0 + 6] = np.einsum("mij,mjk->mik", jp, drel).reshape(-1, 6)
        jpose = np.einsum("mij,mjk->mik", jp, dpose).reshape(-1, 6)
        cols = pose0 + 6 * prob.view[sel][:, None] + np.arange(6)
        jac[rows[:, None], np.repeat(cols, 2, axis=0)] = jpose
    return res, jac


def _hat_batch(v):
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -v[:, 2], v[:, 1]
    out[:, 1, 0], out[:, 1, 2] = v[:, 2], -v[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -v[:, 1], v[:, 0]
    return out


def _retract(prob, st, delta):
    nxt = st.copy()
    ni = len(prob.free)
    nxt.intr[0, prob.free] += delta[:ni]
    nxt.intr[1, prob.free] += delta[ni : 2 * ni]
    d = delta[2 * ni : 2 * ni + 6 * prob.n_views].reshape(-1, 6)
    nxt.rot = Rotation.from_rotvec(d[:, :3]).as_matrix() @ st.rot
    nxt.trans = st.trans + d[:, 3:]
    dr = delta[-6:]
    nxt.rel_rot = rotvec_to_matrix(dr[:3]) @ st.rel_rot
    nxt.rel_trans = st.rel_trans + dr[3:]
    return nxt


def _robust(prob, res):
    """Per-point cost and square-root weights (Huber on the point error)."""
    norms = np.linalg.norm(res, axis=1)
    if not prob.huber:
        return 0.5 * np.sum(norms**2), np.ones(len(norms))
    quad = norms <= HUBER_DELTA
    cost = np.where(quad, 0.5 * norms**2, HUBER_DELTA * (norms - 0.5 * HUBER_DELTA))
    w = np.where(quad, 1.0, HUBER_DELTA / np.maximum(norms, 1e-300))
    return float(np.sum(cost)), np.sqrt(w)


@dataclass
class _LMResult:
    state: _State
    cost: float
    iterations: int
    converged: bool


def _levenberg_marquardt(prob, st, max_iter=200, rtol=1e-10):
    res, jac = _residuals(prob, st, jacobian=True)
    if res is None:
        raise CatastereoError("initial estimate puts the board behind a camera")
    cost, sw = _robust(prob, res)
    mu = None
    nu = 2.0
    converged = False
    it = 0
    while it < max_iter:
        it += 1
        w = np.repeat(sw, 2)
        jw = jac * w[:, None]
        rw = res.ravel() * w
        a = jw.T @ jw
        g = jw.T @ rw
        diag = np.maximum(np.diag(a), 1e-12 * max(np.max(np.diag(a)), 1e-300))
        if mu is None:
            mu = 1e-3
        if cost <= 1e-30:
            converged = True
            break
        accepted = False
        while True:
            try:
                delta = -np.linalg.solve(a + mu * np.diag(diag), g)
            except np.linalg.LinAlgError:
                delta = None
            if delta is not None:
                predicted = -(g @ delta) - 0.5 * delta @ (a @ delta)
                if predicted <= rtol * cost:
                    converged = True
                    break
                cand = _retract(prob, st, delta)
                new_res, new_jac = _residuals(prob, cand, jacobian=True)
                if new_res is not None:
                    new_cost, new_sw = _robust(prob, new_res)
                    if new_cost < cost:
                        rho = (cost - new_cost) / predicted
                        mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                        nu = 2.0
                        decrease = cost - new_cost
                        st, res, jac, sw = cand, new_res, new_jac, new_sw
                        old_cost, cost = cost, new_cost
                        accepted = True
                        if decrease < rtol * old_cost:
                            converged = True
                        break
            mu *= nu
            nu *= 2.0
            if mu > 1e16:
                break
        if converged or not accepted:
            break
    return _LMResult(st, cost, it, converged)


# --------------------------------------------------------------------------
# public result and driver
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    cam_a: Camera
    cam_b: Camera
    relative: RigidTransform
    view_ids: tuple
    poses_a: dict  # view id -> board-to-cam-a transform
    poses_b: dict
    view_errors: dict  # view id -> (mean error cam a or None, cam b or None)
    mean_error: float
    initial_mean_error: float
    rms_error: float
    converged: bool
    iterations: int
    mean_error_no_distortion: float = None
    options: dict = field(default_factory=dict)

    def rig(self):
        return StereoRig(self.cam_a, self.cam_b, self.relative)

    @property
    def baseline(self):
        return float(np.linalg.norm(self.relative.translation))


def _initial_camera(obs, which, estimate_skew):
    board_xy = obs.board.object_points()[:, :2]
    hs, ids = [], []
    for view in obs.views:
        corners = view.corners(which)
        if len(corners) < 4:
            continue
        idx = corners[:, 0].astype(int)
        hs.append(estimate_homography(board_xy[idx], corners[:, 1:]))
        ids.append(view.view_id)
    fx, fy, cx, cy, skew = intrinsics_from_homographies(hs, obs.image_size(which), estimate_skew)
    k = np.array([[fx, skew, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]])
    poses = {vid: extrinsics_from_homography(h, k) for vid, h in zip(ids, hs)}
    return np.array([fx, fy, cx, cy, skew, 0.0, 0.0]), poses


def _build_problem(obs, view_index, free, huber):
    objp = obs.board.object_points()
    obj, uv, cam, view = [], [], [], []
    for vid, vi in view_index.items():
        v = next(x for x in obs.views if x.view_id == vid)
        for c, which in enumerate("ab"):
            corners = v.corners(which)
            if len(corners) < 4:
                continue
            obj.append(objp[corners[:, 0].astype(int)])
            uv.append(corners[:, 1:])
            cam.append(np.full(len(corners), c))
            view.append(np.full(len(corners), vi))
    return _Problem(
        np.concatenate(obj),
        np.concatenate(uv),
        np.concatenate(cam),
        np.concatenate(view),
        len(view_index),
        np.asarray(free),
        huber,
    )


def _point_errors(prob, st):
    res, _ = _residuals(prob, st)
    return np.linalg.norm(res, axis=1)


def refine(prob, st, max_iter=200):
    """Joint damped least-squares refinement; returns an ``_LMResult``."""
    return _levenberg_marquardt(prob, st, max_iter=max_iter)


def calibrate(obs, estimate_distortion=True, estimate_skew=False, huber=False, compare_without_distortion=True):
    """Calibrate the stereo pair from corner observations."""
    intr_a, poses_a = _initial_camera(obs, "a", estimate_skew)
    intr_b, poses_b = _initial_camera(obs, "b", estimate_skew)
    common = [vid for vid in poses_a if vid in poses_b]
    rel = stereo_relative([poses_a[v] for v in common], [poses_b[v] for v in common])

    view_ids = [v.view_id for v in obs.views if v.view_id in poses_a or v.view_id in poses_b]
    board_poses = []
    for vid in view_ids:
        board_poses.append(poses_a[vid] if vid in poses_a else rel.inverse().compose(poses_b[vid]))
    view_index = {vid: i for i, vid in enumerate(view_ids)}

    state0 = _State(
        np.vstack([intr_a, intr_b]),
        np.array([p.rotation for p in board_poses]),
        np.array([p.translation for p in board_poses]),
        rel.rotation.copy(),
        rel.translation.copy(),
    )

    base_free = [0, 1, 2, 3] + ([4] if estimate_skew else [])
    free = base_free + ([5, 6] if estimate_distortion else [])
    prob = _build_problem(obs, view_index, free, huber)
    init_err = _point_errors(prob, state0)
    fit = refine(prob, state0)
    if not fit.converged:
        log.warning("calibration refinement stopped without converging after %d iterations", fit.iterations)

    no_dist = None
    if estimate_distortion and compare_without_distortion:
        alt = refine(_build_problem(obs, view_index, base_free, huber), state0)
        no_dist = float(np.mean(_point_errors(prob, alt.state)))

    st = fit.state
    errs = _point_errors(prob, st)
    rel = RigidTransform(nearest_rotation(st.rel_rot), st.rel_trans)
    pa, pb, verr = {}, {}, {}
    for vid, vi in view_index.items():
        pose = RigidTransform(nearest_rotation(st.rot[vi]), st.trans[vi])
        pa[vid] = pose
        pb[vid] = rel.compose(pose)
        per = []
        for c in (0, 1):
            sel = (prob.view == vi) & (prob.cam == c)
            per.append(float(np.mean(errs[sel])) if np.any(sel) else None)
        verr[vid] = tuple(per)

    def camera(c, size, pose):
        fx, fy, cx, cy, skew, k1, k2 = (float(x) for x in st.intr[c])
        return Camera(fx, fy, cx, cy, image_size=size, skew=skew, k1=k1, k2=k2, pose=pose)

    return CalibrationResult(
        cam_a=camera(0, obs.image_size_a, RigidTransform()),
        cam_b=camera(1, obs.image_size_b, rel),
        relative=rel,
        view_ids=tuple(view_ids),
        poses_a=pa,
        poses_b=pb,
        view_errors=verr,
        mean_error=float(np.mean(errs)),
        initial_mean_error=float(np.mean(init_err)),
        rms_error=float(np.sqrt(np.mean(errs**2))),
        converged=fit.converged,
        iterations=fit.iterations,
        mean_error_no_distortion=no_dist,
        options={
            "estimate_distortion": estimate_distortion,
            "estimate_skew": estimate_skew,
            "huber": huber,
        },
    )
