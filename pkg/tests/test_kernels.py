"""The numba kernels and their numpy twins must agree."""
import numpy as np
import pytest

from catastereo import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAS_NUMBA, reason="numba not installed")

INTR = np.array([1144.1, 1139.5, 539.5, 959.5, 0.7, -0.12, 0.03])


def _points(rng, n=200):
    return np.column_stack([rng.uniform(-0.6, 0.6, (n, 2)), rng.uniform(0.5, 4.0, n)])


def test_projection_paths_agree():
    pts = _points(np.random.default_rng(0))
    for a, b in zip(K._project_jacobian_numpy(pts, INTR), K._project_jacobian_numba(pts, INTR)):
        np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-10)


def test_projection_jacobians_match_finite_differences():
    pts = _points(np.random.default_rng(1), 20)
    _, jp, ji = K._project_jacobian_numpy(pts, INTR)
    h = 1e-6
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = h
        up = K._project_jacobian_numpy(pts + dp, INTR)[0]
        um = K._project_jacobian_numpy(pts - dp, INTR)[0]
        np.testing.assert_allclose(jp[:, :, k], (up - um) / (2 * h), rtol=1e-6, atol=1e-4)
    for k in range(7):
        di = np.zeros(7)
        di[k] = h
        up = K._project_jacobian_numpy(pts, INTR + di)[0]
        um = K._project_jacobian_numpy(pts, INTR - di)[0]
        np.testing.assert_allclose(ji[:, :, k], (up - um) / (2 * h), rtol=1e-6, atol=1e-4)


def test_undistort_paths_agree():
    rng = np.random.default_rng(2)
    xd = rng.uniform(-0.5, 0.5, (300, 2))
    a = K._undistort_numpy(xd, -0.12, 0.03, 10, 1e-10)
    b = K._undistort_numba(xd, -0.12, 0.03, 10, 1e-10)
    # the numpy path stops on the worst point, the loop per point
    np.testing.assert_allclose(a, b, atol=1e-9)


def test_undistort_inverts_distortion():
    rng = np.random.default_rng(3)
    x = rng.uniform(-0.4, 0.4, (100, 2))
    r2 = np.sum(x * x, axis=1)
    xd = x * (1 - 0.1 * r2 + 0.02 * r2 * r2)[:, None]
    np.testing.assert_allclose(K.undistort(xd, -0.1, 0.02, max_iter=50), x, atol=1e-10)


def test_undistort_identity_without_distortion():
    xd = np.array([[0.1, -0.2]])
    out = K.undistort(xd, 0.0, 0.0)
    np.testing.assert_array_equal(out, xd)
    assert out is not xd


def test_triangulation_paths_agree():
    rng = np.random.default_rng(4)
    pts = _points(rng)
    p1 = np.hstack([np.eye(3), np.zeros((3, 1))])
    p2 = np.hstack([np.eye(3), np.array([[-0.05], [0.0], [0.0]])])
    x1 = pts[:, :2] / pts[:, 2:]
    x2 = (pts[:, :2] + [-0.05, 0.0]) / pts[:, 2:]
    for fn in (K._triangulate_numpy, K._triangulate_numba):
        h = fn(p1, p2, x1, x2)
        np.testing.assert_allclose(h[:, :3] / h[:, 3:], pts, rtol=1e-9)


def test_dispatch_flag_is_boolean():
    assert K.USE_NUMBA in (True, False)
