"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba versions are compiled lazily on first call. Set the environment
variable ``CATASTEREO_DISABLE_NUMBA=1`` before import to force the numpy
implementations (useful for debugging and for the benchmark).

Intrinsics are passed as a flat vector ``[fx, fy, cx, cy, skew, k1, k2]``.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

HAS_NUMBA = numba is not None
USE_NUMBA = HAS_NUMBA and os.environ.get("CATASTEREO_DISABLE_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
)

N_INTRINSICS = 7


# --------------------------------------------------------------------------
# projection with jacobians
# --------------------------------------------------------------------------


def _project_jacobian_numpy(points, intr):
    """Project camera-frame points and differentiate.

    Returns ``uv (N, 2)``, ``d uv / d point (N, 2, 3)`` and
    ``d uv / d intrinsics (N, 2, 7)``.
    """
    fx, fy, cx, cy, skew, k1, k2 = intr
    x, y, z = points[:, 0], points[:, 1], points[:, 2]
    iz = 1.0 / z
    xn = x * iz
    yn = y * iz
    r2 = xn * xn + yn * yn
    d = 1.0 + k1 * r2 + k2 * r2 * r2
    xd = xn * d
    yd = yn * d
    n = points.shape[0]

    uv = np.empty((n, 2))
    uv[:, 0] = fx * xd + skew * yd + cx
    uv[:, 1] = fy * yd + cy

    # d(d)/d(xn), d(d)/d(yn)
    dd_dr2 = k1 + 2.0 * k2 * r2
    dd_dxn = dd_dr2 * 2.0 * xn
    dd_dyn = dd_dr2 * 2.0 * yn
    dxd_dxn = d + xn * dd_dxn
    dxd_dyn = xn * dd_dyn
    dyd_dxn = yn * dd_dxn
    dyd_dyn = d + yn * dd_dyn

    du_dxn = fx * dxd_dxn + skew * dyd_dxn
    du_dyn = fx * dxd_dyn + skew * dyd_dyn
    dv_dxn = fy * dyd_dxn
    dv_dyn = fy * dyd_dyn

    jp = np.empty((n, 2, 3))
    jp[:, 0, 0] = du_dxn * iz
    jp[:, 0, 1] = du_dyn * iz
    jp[:, 0, 2] = -(du_dxn * xn + du_dyn * yn) * iz
    jp[:, 1, 0] = dv_dxn * iz
    jp[:, 1, 1] = dv_dyn * iz
    jp[:, 1, 2] = -(dv_dxn * xn + dv_dyn * yn) * iz

    ji = np.zeros((n, 2, N_INTRINSICS))
    ji[:, 0, 0] = xd
    ji[:, 0, 2] = 1.0
    ji[:, 0, 4] = yd
    ji[:, 0, 5] = (fx * xn + skew * yn) * r2
    ji[:, 0, 6] = (fx * xn + skew * yn) * r2 * r2
    ji[:, 1, 1] = yd
    ji[:, 1, 3] = 1.0
    ji[:, 1, 5] = fy * yn * r2
    ji[:, 1, 6] = fy * yn * r2 * r2
    return uv, jp, ji


def _project_jacobian_loop(points, intr):
    fx = intr[0]
    fy = intr[1]
    cx = intr[2]
    cy = intr[3]
    skew = intr[4]
    k1 = intr[5]
    k2 = intr[6]
    n = points.shape[0]
    uv = np.empty((n, 2))
    jp = np.empty((n, 2, 3))
    ji = np.zeros((n, 2, 7))
    for i in range(n):
        iz = 1.0 / points[i, 2]
        xn = points[i, 0] * iz
        yn = points[i, 1] * iz
        r2 = xn * xn + yn * yn
        d = 1.0 + k1 * r2 + k2 * r2 * r2
        xd = xn * d
        yd = yn * d
        uv[i, 0] = fx * xd + skew * yd + cx
        uv[i, 1] = fy * yd + cy

        dd_dr2 = k1 + 2.0 * k2 * r2
        dd_dxn = dd_dr2 * 2.0 * xn
        dd_dyn = dd_dr2 * 2.0 * yn
        dxd_dxn = d + xn * dd_dxn
        dxd_dyn = xn * dd_dyn
        dyd_dxn = yn * dd_dxn
        dyd_dyn = d + yn * dd_dyn
        du_dxn = fx * dxd_dxn + skew * dyd_dxn
        du_dyn = fx * dxd_dyn + skew * dyd_dyn
        dv_dxn = fy * dyd_dxn
        dv_dyn = fy * dyd_dyn

        jp[i, 0, 0] = du_dxn * iz
        jp[i, 0, 1] = du_dyn * iz
        jp[i, 0, 2] = -(du_dxn * xn + du_dyn * yn) * iz
        jp[i, 1, 0] = dv_dxn * iz
        jp[i, 1, 1] = dv_dyn * iz
        jp[i, 1, 2] = -(dv_dxn * xn + dv_dyn * yn) * iz

        ji[i, 0, 0] = xd
        ji[i, 0, 2] = 1.0
        ji[i, 0, 4] = yd
        ji[i, 0, 5] = (fx * xn + skew * yn) * r2
        ji[i, 0, 6] = (fx * xn + skew * yn) * r2 * r2
        ji[i, 1, 1] = yd
        ji[i, 1, 3] = 1.0
        ji[i, 1, 5] = fy * yn * r2
        ji[i, 1, 6] = fy * yn * r2 * r2
    return uv, jp, ji


# --------------------------------------------------------------------------
# radial undistortion
# --------------------------------------------------------------------------


def _undistort_numpy(xd, k1, k2, max_iter, tol):
    """Invert ``x_d = x (1 + k1 r^2 + k2 r^4)`` by fixed-point iteration."""
    xn = xd.copy()
    for _ in range(max_iter):
        r2 = np.sum(xn * xn, axis=1)
        d = 1.0 + k1 * r2 + k2 * r2 * r2
        nxt = xd / d[:, None]
        step = np.max(np.abs(nxt - xn)) if len(xn) else 0.0
        xn = nxt
        if step < tol:
            break
    return xn


def _undistort_loop(xd, k1, k2, max_iter, tol):
    n = xd.shape[0]
    out = np.empty_like(xd)
    for i in range(n):
        x = xd[i, 0]
        y = xd[i, 1]
        for _ in range(max_iter):
            r2 = x * x + y * y
            d = 1.0 + k1 * r2 + k2 * r2 * r2
            nx = xd[i, 0] / d
            ny = xd[i, 1] / d
            step = max(abs(nx - x), abs(ny - y))
            x = nx
            y = ny
            if step < tol:
                break
        out[i, 0] = x
        out[i, 1] = y
    return out


# --------------------------------------------------------------------------
# two-view linear triangulation
# --------------------------------------------------------------------------


def _dlt_rows(p1, p2, x1, x2):
    a = np.empty(x1.shape[:-1] + (4, 4))
    a[..., 0, :] = x1[..., 0, None] * p1[2] - p1[0]
    a[..., 1, :] = x1[..., 1, None] * p1[2] - p1[1]
    a[..., 2, :] = x2[..., 0, None] * p2[2] - p2[0]
    a[..., 3, :] = x2[..., 1, None] * p2[2] - p2[1]
    return a


def _triangulate_numpy(p1, p2, x1, x2):
    """Homogeneous least-squares triangulation of N point pairs.

    Each row is scaled to unit norm before the SVD so that both views weigh
    equally. Returns homogeneous points ``(N, 4)``.
    """
    a = _dlt_rows(p1, p2, x1, x2)
    a /= np.linalg.norm(a, axis=2, keepdims=True)
    _, _, vt = np.linalg.svd(a)
    return vt[:, -1, :]


def _triangulate_loop(p1, p2, x1, x2):
    n = x1.shape[0]
    out = np.empty((n, 4))
    a = np.empty((4, 4))
    for i in range(n):
        for j in range(4):
            a[0, j] = x1[i, 0] * p1[2, j] - p1[0, j]
            a[1, j] = x1[i, 1] * p1[2, j] - p1[1, j]
            a[2, j] = x2[i, 0] * p2[2, j] - p2[0, j]
            a[3, j] = x2[i, 1] * p2[2, j] - p2[1, j]
        for r in range(4):
            s = 0.0
            for j in range(4):
                s += a[r, j] * a[r, j]
            s = np.sqrt(s)
            for j in range(4):
                a[r, j] /= s
        _, _, vt = np.linalg.svd(a)
        for j in range(4):
            out[i, j] = vt[3, j]
    return out


if HAS_NUMBA:
    _project_jacobian_numba = numba.njit(cache=True)(_project_jacobian_loop)
    _undistort_numba = numba.njit(cache=True)(_undistort_loop)
    _triangulate_numba = numba.njit(cache=True)(_triangulate_loop)
else:  # pragma: no cover
    _project_jacobian_numba = _project_jacobian_numpy
    _undistort_numba = _undistort_numpy
    _triangulate_numba = _triangulate_numpy


def project_jacobian(points, intr):
    points = np.ascontiguousarray(points, dtype=np.float64)
    intr = np.ascontiguousarray(intr, dtype=np.float64)
    if USE_NUMBA:
        return _project_jacobian_numba(points, intr)
    return _project_jacobian_numpy(points, intr)


def undistort(xd, k1, k2, max_iter=10, tol=1e-10):
    xd = np.ascontiguousarray(xd, dtype=np.float64)
    if k1 == 0.0 and k2 == 0.0:
        return xd.copy()
    if USE_NUMBA:
        return _undistort_numba(xd, float(k1), float(k2), int(max_iter), float(tol))
    return _undistort_numpy(xd, float(k1), float(k2), int(max_iter), float(tol))


def triangulate(p1, p2, x1, x2):
    p1 = np.ascontiguousarray(p1, dtype=np.float64)
    p2 = np.ascontiguousarray(p2, dtype=np.float64)
    x1 = np.ascontiguousarray(x1, dtype=np.float64)
    x2 = np.ascontiguousarray(x2, dtype=np.float64)
    if USE_NUMBA:
        return _triangulate_numba(p1, p2, x1, x2)
    return _triangulate_numpy(p1, p2, x1, x2)
