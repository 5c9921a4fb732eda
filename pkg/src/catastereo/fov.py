"""Adapter design space: virtual-camera FOV, inner angle, working distance.

Every length here is in meters and every angle in radians; conversion to
degrees and centimeters happens at the CLI boundary.

Adapter frame
-------------
The phone frame doubles as the world frame. The back camera sits at the
origin looking along ``+z``; the front camera looks along ``-z`` (its frame
is the back camera's rotated by 180 degrees about ``y``). Each camera has a
square mirror of side ``l_m`` centered on its optical axis at distance
``b_m``. In the host camera's frame the mirror spans ``x`` and the direction
``(0, cos(beta), sin(beta))``, i.e. ``beta`` is the angle between the mirror
and the image plane. Its normal is ``(0, sin(beta), -cos(beta))`` and both
virtual cameras look roughly along ``+y`` of the phone.
"""
import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import geometry
from .errors import (
    CatastereoError,
    DivergingViewsError,
    EmptyGridError,
    MirrorOccludesCameraError,
)

# the front camera frame, seen from the phone (world) frame
FRONT_ROTATION = np.diag([-1.0, 1.0, -1.0])


@dataclass(frozen=True)
class AdapterConfig:
    beta_front: float
    beta_back: float
    b_m_front: float
    b_m_back: float
    l_m: float
    alpha_real: float = math.radians(80.0)
    h_avg: float = 1.8
    # baseline used for d_min; ``None`` means the geometric prediction
    baseline: float = None
    # front camera center relative to the back camera, phone frame
    camera_offset: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "camera_offset", tuple(float(c) for c in self.camera_offset))
        for name in ("beta_front", "beta_back"):
            beta = getattr(self, name)
            if not 0.0 < beta < math.pi / 2:
                raise CatastereoError(f"{name} must lie in (0, 90) degrees, got {math.degrees(beta):.3f}")
        if self.l_m <= 0:
            raise CatastereoError("mirror length l_m must be positive")
        if not 0.0 < self.alpha_real < math.pi:
            raise CatastereoError("alpha_real must lie in (0, 180) degrees")
        if self.h_avg <= 0:
            raise CatastereoError("h_avg must be positive")
        if self.baseline is not None and self.baseline < 0:
            raise CatastereoError("baseline must be non-negative")
        for beta, b_m in ((self.beta_front, self.b_m_front), (self.beta_back, self.b_m_back)):
            if b_m <= 0:
                raise CatastereoError("camera-mirror distance b_m must be positive")
            _check_clearance(beta, b_m, self.l_m)

    @classmethod
    def symmetric(cls, beta, b_m, l_m, **kwargs):
        return cls(beta, beta, b_m, b_m, l_m, **kwargs)

    @classmethod
    def reference(cls):
        """55 degree mirrors, 2.5 cm away, 3 cm wide; 5 cm baseline."""
        return cls.symmetric(math.radians(55.0), 0.025, 0.03, baseline=0.05)

    def side(self, which):
        if which == "back":
            return self.beta_back, self.b_m_back
        if which == "front":
            return self.beta_front, self.b_m_front
        raise ValueError(f"unknown side {which!r}")


def _check_clearance(beta, b_m, l_m):
    if not 2.0 * b_m > l_m * math.sin(beta):
        raise MirrorOccludesCameraError(
            f"mirror occludes the camera: 2*b_m={2 * b_m:.4g} <= l_m*sin(beta)={l_m * math.sin(beta):.4g}"
        )


def alpha_left_right(beta, b_m, l_m):
    """Angles from the optical axis to the far and near mirror edges."""
    _check_clearance(beta, b_m, l_m)
    proj = l_m * math.cos(beta)
    height = l_m * math.sin(beta)
    b_down = b_m + height / 2.0
    b_up = b_m - height / 2.0
    return math.atan(proj / (2.0 * b_down)), math.atan(proj / (2.0 * b_up))


def alpha_virtual(beta, b_m, l_m):
    a_l, a_r = alpha_left_right(beta, b_m, l_m)
    return a_l + a_r


def alpha_inner(beta, alpha_r):
    """Angle of the inner FOV edge with the rig's symmetry direction.

    Zero is the boundary case (parallel inner rays) and is returned as is;
    negative values mean the inner edges diverge.
    """
    a_in = math.pi / 2 + alpha_r - 2.0 * beta
    if a_in < 0:
        raise DivergingViewsError(f"inner angle {math.degrees(a_in):.3f} deg < 0: virtual views diverge")
    return a_in


def d_min(baseline, h_avg, alpha_in):
    if not alpha_in > 0:
        raise DivergingViewsError("d_min is undefined for a non-positive inner angle")
    if not alpha_in < math.pi / 2:
        raise CatastereoError("d_min is undefined for an inner angle of 90 degrees or more")
    return (baseline + h_avg) / (2.0 * math.tan(alpha_in))


def h_fov(distance, alpha_real):
    """Extent visible to the bare real camera at ``distance``."""
    return 2.0 * distance * math.tan(alpha_real / 2.0)


def fov_percent_common(h_avg, d, alpha_real):
    if not d > 0:
        raise CatastereoError("distance must be positive")
    return h_avg / h_fov(d, alpha_real)


def mirror_for(beta, b_m):
    """The adapter mirror in its host camera's frame."""
    return geometry.Mirror(
        np.array([0.0, math.sin(beta), -math.cos(beta)]),
        -b_m * math.cos(beta),
    )


def real_poses(cfg):
    """World-to-camera poses of the back and front real cameras."""
    back = geometry.RigidTransform()
    offset = np.asarray(cfg.camera_offset, dtype=float)
    front = geometry.RigidTransform(FRONT_ROTATION, -FRONT_ROTATION @ offset)
    return back, front


def _nominal_camera(pose):
    # intrinsics do not affect centers; any valid camera will do
    return geometry.Camera(1.0, 1.0, 0.0, 0.0, image_size=(1, 1), pose=pose)


def predicted_baseline(cfg):
    """Distance between the two virtual camera centers of the adapter."""
    centers = []
    for which, pose in zip(("back", "front"), real_poses(cfg)):
        beta, b_m = cfg.side(which)
        virt = geometry.virtual_camera(_nominal_camera(pose), mirror_for(beta, b_m))
        centers.append(virt.center)
    return float(np.linalg.norm(centers[0] - centers[1]))


@dataclass(frozen=True)
class FovReport:
    alpha_L: float
    alpha_R: float
    alpha_virtual: float
    alpha_in: float
    fov_percent_individual: float
    fov_percent_common: float
    d_min: float
    baseline_predicted: float
    baseline_used: float
    h_fov: float
    side: str = "back"


def fov_report(cfg):
    """Full design report for ``cfg``.

    With unequal mirrors, each side gets its own inner angle and the report
    describes the limiting (smaller inner angle) side.
    """
    per_side = []
    for which in ("back", "front"):
        beta, b_m = cfg.side(which)
        a_l, a_r = alpha_left_right(beta, b_m, cfg.l_m)
        per_side.append((alpha_inner(beta, a_r), which, a_l, a_r))
    a_in, which, a_l, a_r = min(per_side)
    predicted = predicted_baseline(cfg)
    used = predicted if cfg.baseline is None else cfg.baseline
    dist = d_min(used, cfg.h_avg, a_in)
    return FovReport(
        alpha_L=a_l,
        alpha_R=a_r,
        alpha_virtual=a_l + a_r,
        alpha_in=a_in,
        fov_percent_individual=(a_l + a_r) / cfg.alpha_real,
        fov_percent_common=fov_percent_common(cfg.h_avg, dist, cfg.alpha_real),
        d_min=dist,
        baseline_predicted=predicted,
        baseline_used=used,
        h_fov=h_fov(dist, cfg.alpha_real),
        side=which,
    )


@dataclass(frozen=True)
class SweepRow:
    beta: float
    b_m: float
    l_m: float
    report: FovReport = None
    status: str = "ok"


SWEEP_COLUMNS = (
    "beta_deg",
    "b_m_cm",
    "l_m_cm",
    "alpha_L_deg",
    "alpha_R_deg",
    "alpha_virtual_deg",
    "alpha_in_deg",
    "d_min_m",
    "fov_pct_individual",
    "fov_pct_common",
    "baseline_cm",
    "status",
)


def sweep(base, betas=None, b_ms=None, l_ms=None):
    """Evaluate the design over a grid, symmetric mirrors at every point.

    ``None`` keeps the base value for that axis; an explicitly empty axis is
    an error. Rows whose geometry is invalid are kept with a status string.
    """
    axes = []
    for values, default in ((betas, base.beta_back), (b_ms, base.b_m_back), (l_ms, base.l_m)):
        values = [default] if values is None else list(values)
        if not values:
            raise EmptyGridError("sweep grid has an empty axis")
        axes.append(values)

    rows = []
    for beta, b_m, l_m in itertools.product(*axes):
        try:
            cfg = replace(base, beta_front=beta, beta_back=beta, b_m_front=b_m, b_m_back=b_m, l_m=l_m)
            rows.append(SweepRow(beta, b_m, l_m, fov_report(cfg)))
        except MirrorOccludesCameraError:
            rows.append(SweepRow(beta, b_m, l_m, status="mirror-occludes-camera"))
        except DivergingViewsError:
            rows.append(SweepRow(beta, b_m, l_m, status="diverging-views"))
        except CatastereoError:
            rows.append(SweepRow(beta, b_m, l_m, status="invalid-config"))
    return rows


def sweep_row_values(row):
    """CSV cell values in :data:`SWEEP_COLUMNS` order (display units)."""
    head = [f"{math.degrees(row.beta):.2f}", f"{row.b_m * 100:.2f}", f"{row.l_m * 100:.2f}"]
    r = row.report
    if r is None:
        return head + [""] * 8 + [row.status]
    return head + [
        f"{math.degrees(r.alpha_L):.2f}",
        f"{math.degrees(r.alpha_R):.2f}",
        f"{math.degrees(r.alpha_virtual):.2f}",
        f"{math.degrees(r.alpha_in):.2f}",
        f"{r.d_min:.2f}",
        f"{r.fov_percent_individual * 100:.2f}",
        f"{r.fov_percent_common * 100:.2f}",
        f"{r.baseline_used * 100:.2f}",
        row.status,
    ]


def summary(report):
    return (
        f"alpha_virtual = {math.degrees(report.alpha_virtual):.2f} deg "
        f"({report.fov_percent_individual * 100:.1f}% of the real FOV), "
        f"alpha_R = {math.degrees(report.alpha_R):.2f} deg, "
        f"alpha_in = {math.degrees(report.alpha_in):.2f} deg, "
        f"baseline = {report.baseline_used * 100:.2f} cm "
        f"(geometric {report.baseline_predicted * 100:.2f} cm), "
        f"d_min = {report.d_min:.2f} m, "
        f"common FOV = {report.fov_percent_common * 100:.1f}%"
    )
