"""Rigid transforms, pinhole cameras, planar mirrors and virtual cameras.

Conventions
-----------
* Lengths are meters, angles radians.
* ``Camera.pose`` maps world coordinates to camera coordinates,
  ``x_cam = R @ x_world + t``. Cameras look down their ``+z`` axis, ``u``
  grows with ``+x`` and ``v`` with ``+y``.
* A :class:`Mirror` is the plane ``{x : normal . x = offset}`` written in the
  frame of the camera that looks at it, with the normal pointing towards that
  camera's center (so ``offset < 0``).

A single reflection turns a camera into a left-handed "virtual" camera. We
never store improper rotations: :func:`virtual_camera` returns a proper
rotation (the x axis is negated) with ``mirrored=True``, and :func:`project`
undoes the negation by flipping ``u`` horizontally. Flipping the image also
moves the principal point to ``width - 1 - cx`` and negates the skew, which
the virtual camera carries in its intrinsics.
"""
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial.transform import Rotation

from . import _kernels
from .errors import BehindCameraError, DegenerateRigError, InvalidMirrorError

ORTHO_TOL = 1e-9
UNIT_TOL = 1e-12

_FLIP_X = np.diag([-1.0, 1.0, 1.0])
_ROT_Z_PI = np.diag([-1.0, -1.0, 1.0])


def hat(v):
    """Cross-product matrix, ``hat(a) @ b == cross(a, b)``."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotvec_to_matrix(v):
    return Rotation.from_rotvec(np.asarray(v, dtype=float)).as_matrix()


def matrix_to_rotvec(r):
    return Rotation.from_matrix(r).as_rotvec()


def nearest_rotation(m):
    """Closest proper rotation to ``m`` in the Frobenius sense."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation must be orthonormal with det +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_rotvec(cls, rotvec, translation=(0.0, 0.0, 0.0)):
        return cls(rotvec_to_matrix(rotvec), translation)

    @classmethod
    def from_matrix(cls, m):
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points):
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def __matmul__(self, other):
        return self.compose(other)

    def allclose(self, other, atol=1e-12):
        return np.allclose(self.rotation, other.rotation, atol=atol) and np.allclose(
            self.translation, other.translation, atol=atol
        )

    def __repr__(self):
        rv = np.round(matrix_to_rotvec(self.rotation), 6)
        return f"RigidTransform(rotvec={rv.tolist()}, translation={np.round(self.translation, 6).tolist()})"


@dataclass(frozen=True, eq=False)
class Mirror:
    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.array(self.normal, dtype=float).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL:
            raise InvalidMirrorError(f"mirror normal must be unit length, got |n|={np.linalg.norm(n)!r}")
        offset = float(self.offset)
        if offset > 0:
            n, offset = -n, -offset
        n.flags.writeable = False
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", offset)

    @classmethod
    def from_point_normal(cls, point, normal):
        n = np.asarray(normal, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(n, float(n @ np.asarray(point, dtype=float)))

    def signed_distance(self, points):
        return np.asarray(points, dtype=float) @ self.normal - self.offset


def reflection_matrix(m):
    """4x4 affine map ``p -> p - 2 (n.p - offset) n``."""
    n = np.asarray(m.normal, dtype=float)
    if abs(np.linalg.norm(n) - 1.0) > UNIT_TOL:
        raise InvalidMirrorError("mirror normal must be unit length")
    h = np.eye(4)
    h[:3, :3] -= 2.0 * np.outer(n, n)
    h[:3, 3] = 2.0 * m.offset * n
    return h


def reflect(m, points):
    h = reflection_matrix(m)
    points = np.asarray(points, dtype=float)
    return points @ h[:3, :3].T + h[:3, 3]


@dataclass(frozen=True, eq=False)
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    image_size: tuple = (1920, 1080)
    skew: float = 0.0
    k1: float = 0.0
    k2: float = 0.0
    pose: RigidTransform = field(default_factory=RigidTransform)
    mirrored: bool = False

    def __post_init__(self):
        w, h = (int(s) for s in self.image_size)
        object.__setattr__(self, "image_size", (w, h))
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < w and 0 <= self.cy < h):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside {w}x{h} image")

    @property
    def width(self):
        return self.image_size[0]

    @property
    def height(self):
        return self.image_size[1]

    @property
    def K(self):
        return np.array([[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    @property
    def intrinsics(self):
        return np.array([self.fx, self.fy, self.cx, self.cy, self.skew, self.k1, self.k2])

    @property
    def center(self):
        """Camera center in world coordinates."""
        return -self.pose.rotation.T @ self.pose.translation

    @property
    def optical_axis(self):
        """Viewing direction (+z of the camera) in world coordinates."""
        return self.pose.rotation[2].copy()

    def with_pose(self, pose):
        return replace(self, pose=pose)

    def to_camera(self, points):
        return self.pose.apply(points)

    def in_image(self, uv):
        uv = np.asarray(uv, dtype=float)
        return (
            (uv[..., 0] >= 0)
            & (uv[..., 0] <= self.width - 1)
            & (uv[..., 1] >= 0)
            & (uv[..., 1] <= self.height - 1)
        )

    def project(self, points):
        return project(self, points)

    def normalized(self, uv, max_iter=10, tol=1e-10):
        """Undistorted normalized coordinates ``(x/z, y/z)`` of pixels."""
        uv = np.atleast_2d(np.asarray(uv, dtype=float)).copy()
        if self.mirrored:
            uv[:, 0] = (self.width - 1) - uv[:, 0]
        yd = (uv[:, 1] - self.cy) / self.fy
        xd = (uv[:, 0] - self.cx - self.skew * yd) / self.fx
        return _kernels.undistort(np.column_stack([xd, yd]), self.k1, self.k2, max_iter, tol)


def project(cam, points):
    """Project world points to pixels.

    Accepts a single point ``(3,)`` or an array ``(N, 3)``. Raises
    :class:`BehindCameraError` when any point has camera depth ``<= 0``.
    """
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    pc = cam.pose.apply(np.atleast_2d(pts))
    if np.any(pc[:, 2] <= 0):
        raise BehindCameraError("point is behind the camera")
    uv, _, _ = _kernels.project_jacobian(pc, cam.intrinsics)
    if cam.mirrored:
        uv[:, 0] = (cam.width - 1) - uv[:, 0]
    return uv[0] if single else uv


def virtual_camera(real, m):
    """Camera equivalent to ``real`` looking into mirror ``m``.

    ``m`` is expressed in ``real``'s frame. The result has a proper rotation
    and ``mirrored=True``; :func:`project` on it reproduces the pixels the
    real camera records through the mirror.
    """
    if real.mirrored:
        raise DegenerateRigError("virtual_camera expects a real (unmirrored) camera")
    if abs(m.offset) < 1e-9:
        raise DegenerateRigError("mirror plane passes through the camera center")
    h = reflection_matrix(m)
    r = _FLIP_X @ h[:3, :3] @ real.pose.rotation
    t = _FLIP_X @ (h[:3, :3] @ real.pose.translation + h[:3, 3])
    return replace(
        real,
        pose=RigidTransform(r, t),
        cx=(real.width - 1) - real.cx,
        skew=-real.skew,
        mirrored=True,
    )


def unflipped(cam):
    """Same camera producing horizontally flipped (upright) pixel coordinates.

    For a mirrored virtual camera this is the ordinary right-handed camera
    that sees the flipped image; calibration estimates this one.
    """
    return replace(cam, mirrored=False)


def rotate_image_180(cam):
    """Camera whose image is ``cam``'s image rotated by 180 degrees."""
    if cam.mirrored:
        raise ValueError("unflip the camera before rotating its image")
    pose = RigidTransform(_ROT_Z_PI @ cam.pose.rotation, _ROT_Z_PI @ cam.pose.translation)
    return replace(cam, pose=pose, cx=(cam.width - 1) - cam.cx, cy=(cam.height - 1) - cam.cy)


@dataclass(frozen=True, eq=False)
class StereoRig:
    """Two cameras; ``relative`` maps ``cam_a``'s frame to ``cam_b``'s."""

    cam_a: Camera
    cam_b: Camera
    relative: RigidTransform

    def __post_init__(self):
        if not self.baseline > 0:
            raise DegenerateRigError("stereo rig needs a non-zero baseline")

    @classmethod
    def from_cameras(cls, cam_a, cam_b):
        return cls(cam_a, cam_b, cam_b.pose.compose(cam_a.pose.inverse()))

    @property
    def baseline(self):
        return float(np.linalg.norm(self.relative.translation))

    def in_frame_a(self):
        """The same rig re-expressed with ``cam_a`` at the origin."""
        return StereoRig(
            self.cam_a.with_pose(RigidTransform()),
            self.cam_b.with_pose(self.relative),
            self.relative,
        )
