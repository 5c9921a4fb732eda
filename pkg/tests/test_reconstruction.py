import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from catastereo import simulator
from catastereo.errors import (
    CatastereoError,
    CheiralityError,
    DegeneratePointsError,
    EmptySkeletonError,
    ParallelRaysError,
    UnreliableDepthError,
)
from catastereo.geometry import Camera, RigidTransform, StereoRig
from catastereo.reconstruction import (
    BODY_25,
    JOINT,
    SEGMENTS,
    Keypoints2D,
    Skeleton,
    compare_lengths,
    fit_plane,
    plane_distance_report,
    reconstruct_skeleton,
    segment_lengths,
    triangulate_dlt,
    triangulate_midpoint,
    triangulate_points,
)

# reconstructed and tape rows of the reference subject, cm
REF_3D = dict(zip(SEGMENTS, (21.3, 24.1, 26.1, 21.3, 38.3, 48.6)))
REF_TAPE = dict(zip(SEGMENTS, (21.2, 24.7, 31.0, 22.1, 38.9, 43.5)))
REF_DIFF_PRINTED = (0.1, 0.6, 4.9, 1.2, 0.6, 5.1)


def simple_rig(baseline=0.05):
    cam = Camera(1000.0, 1000.0, 640.0, 360.0, image_size=(1280, 720))
    rel = RigidTransform(np.eye(3), np.array([-baseline, 0.0, 0.0]))
    return StereoRig(cam, cam.with_pose(rel), rel)


def in_frame_a(sim, pts):
    return sim.rig.cam_a.pose.apply(pts)


def test_dlt_exact_on_sim_rig(sim):
    rng = np.random.default_rng(0)
    pts = simulator.place_subject(sim, simulator.skeleton_template(), 4.0) + rng.uniform(-0.2, 0.2, (25, 3))
    ua, ub = sim.rig.cam_a.project(pts), sim.rig.cam_b.project(pts)
    rig = sim.rig.in_frame_a()
    x, res = triangulate_dlt(rig, ua, ub, return_residuals=True)
    np.testing.assert_allclose(x, in_frame_a(sim, pts), atol=1e-9)
    assert np.max(res) < 1e-6


def test_midpoint_matches_dlt_noiseless(sim):
    pts = simulator.place_subject(sim, simulator.skeleton_template(), 5.0)
    rig = sim.rig.in_frame_a()
    ua, ub = sim.rig.cam_a.project(pts), sim.rig.cam_b.project(pts)
    np.testing.assert_allclose(triangulate_midpoint(rig, ua, ub), triangulate_dlt(rig, ua, ub), atol=1e-9)


def test_midpoint_is_intersection():
    rig = simple_rig()
    x = np.array([0.1, -0.05, 2.0])
    ua = rig.cam_a.project(x)
    ub = rig.cam_b.project(x)
    np.testing.assert_allclose(triangulate_midpoint(rig, ua, ub), x, atol=1e-12)
    np.testing.assert_allclose(triangulate_dlt(rig, ua, ub), x, atol=1e-12)


def test_parallel_rays():
    rig = simple_rig()
    with pytest.raises(ParallelRaysError):
        triangulate_midpoint(rig, [700.0, 400.0], [700.0, 400.0])


def test_near_parallel_rays():
    rig = simple_rig(baseline=1e-6)
    x = np.array([0.0, 0.0, 5.0])
    with pytest.raises(UnreliableDepthError):
        triangulate_dlt(rig, rig.cam_a.project(x), rig.cam_b.project(x))


def test_cheirality():
    rig = simple_rig()
    # disparity with the wrong sign puts the point behind both cameras
    with pytest.raises(CheiralityError):
        triangulate_dlt(rig, [650.0, 360.0], [660.0, 360.0])


def test_batch_flags_bad_points():
    rig = simple_rig()
    x = np.array([0.0, 0.0, 3.0])
    ua = np.array([rig.cam_a.project(x), [650.0, 360.0]])
    ub = np.array([rig.cam_b.project(x), [660.0, 360.0]])
    tri = triangulate_points(rig, ua, ub)
    assert tri.ok.tolist() == [True, False]


def test_distortion_is_removed_before_triangulation():
    cam = Camera(1000.0, 1000.0, 640.0, 360.0, image_size=(1280, 720), k1=-0.2, k2=0.05)
    rel = RigidTransform.from_rotvec([0.0, 0.02, 0.0], [-0.06, 0.0, 0.0])
    rig = StereoRig(cam, cam.with_pose(rel), rel)
    x = np.array([[0.3, -0.2, 2.0], [-0.4, 0.1, 3.0]])
    np.testing.assert_allclose(triangulate_dlt(rig, rig.cam_a.project(x), rig.cam_b.project(x)), x, atol=1e-9)


def test_noisy_dlt_and_midpoint_agree(sim):
    rng = np.random.default_rng(1)
    pts = simulator.place_subject(sim, simulator.skeleton_template(), 4.0)
    rig = sim.rig.in_frame_a()
    ua = sim.rig.cam_a.project(pts) + rng.normal(0, 0.5, (25, 2))
    ub = sim.rig.cam_b.project(pts) + rng.normal(0, 0.5, (25, 2))
    dlt = triangulate_points(rig, ua, ub)
    mid = triangulate_points(rig, ua, ub, method="midpoint")
    truth = in_frame_a(sim, pts)
    # the two estimators differ far less than either differs from the truth
    gap = np.linalg.norm(dlt.points - mid.points, axis=1)
    err = np.linalg.norm(dlt.points - truth, axis=1)
    assert np.median(gap) < 0.1 * np.median(err)


def test_batch_tolerates_missing_pixels():
    rig = simple_rig()
    x = np.array([0.0, 0.0, 3.0])
    ua = np.array([rig.cam_a.project(x), [np.nan, np.nan]])
    ub = np.array([rig.cam_b.project(x), [600.0, 360.0]])
    tri = triangulate_points(rig, ua, ub)
    assert tri.ok.tolist() == [True, False]
    assert np.isnan(tri.points[1]).all()


def test_unknown_method():
    with pytest.raises(ValueError):
        triangulate_points(simple_rig(), [[640.0, 360.0]], [[600.0, 360.0]], method="magic")


# planes


def test_fit_plane_exact():
    rng = np.random.default_rng(2)
    uv = rng.uniform(-1, 1, (30, 2))
    pts = np.column_stack([uv, 0.3 * uv[:, 0] - 0.2 * uv[:, 1] + 1.0])
    n, d, rms = fit_plane(pts)
    assert rms < 1e-12
    np.testing.assert_allclose(pts @ n, d, atol=1e-12)


@settings(max_examples=30)
@given(arrays(np.float64, 3, elements=st.floats(-100, 100)))
def test_fit_plane_translation(c):
    rng = np.random.default_rng(3)
    pts = rng.normal(size=(20, 3)) * [1.0, 1.0, 0.1]
    n1, d1, r1 = fit_plane(pts)
    n2, d2, r2 = fit_plane(pts + c)
    np.testing.assert_allclose(n2, n1, atol=1e-9)
    assert d2 == pytest.approx(d1 + n1 @ c, abs=1e-9)
    assert r2 == pytest.approx(r1, abs=1e-9)


def test_fit_plane_noisy_rms():
    rms = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        pts = np.column_stack([rng.uniform(-0.2, 0.2, (54, 2)), rng.normal(0.0, 0.001, 54)])
        rms.append(fit_plane(pts)[2])
    assert np.median(rms) == pytest.approx(0.001, rel=0.3)


def test_fit_plane_degenerate():
    with pytest.raises(DegeneratePointsError):
        fit_plane(np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegeneratePointsError):
        fit_plane(line)


def test_plane_report_noiseless(calib, session):
    report = plane_distance_report(calib, session.observations)
    table = report.table()
    assert table.shape == (3, 15)
    assert np.max(table) < 1e-6
    assert report.skipped == ()


def test_plane_report_skips_sparse_views(calib, session):
    from dataclasses import replace

    from catastereo.calibration import CornerObservations

    obs = session.observations
    views = list(obs.views)
    views[2] = replace(views[2], cam_b=views[2].cam_b[:3])
    sparse = CornerObservations(obs.board, obs.image_size_a, obs.image_size_b, views)
    report = plane_distance_report(calib, sparse)
    assert report.skipped == (views[2].view_id,)
    assert len(report.view_ids) == 13


def test_plane_report_scales_with_noise(sim):
    from catastereo.calibration import calibrate

    means = {}
    for sigma in (0.25, 0.5, 1.0):
        vals = []
        for seed in range(3):
            s = simulator.generate_chessboard_session(sim, 14, sigma=sigma, seed=100 + seed)
            vals.append(plane_distance_report(calibrate(s.observations, compare_without_distortion=False), s.observations).mean_mm.mean())
        means[sigma] = np.mean(vals)
    assert means[0.5] / means[0.25] == pytest.approx(2.0, rel=0.3)
    assert means[1.0] / means[0.5] == pytest.approx(2.0, rel=0.3)


# skeletons


def test_keypoints_validation():
    with pytest.raises(CatastereoError):
        Keypoints2D(np.zeros((24, 3)))
    bad = np.zeros((25, 3))
    bad[0, 2] = 1.5
    with pytest.raises(CatastereoError):
        Keypoints2D(bad)


def test_skeleton_round_trip(sim, subject):
    ka, kb = simulator.generate_skeleton_views(sim, subject)
    skel = reconstruct_skeleton(sim.rig.in_frame_a(), ka, kb)
    assert skel.valid.all()
    np.testing.assert_allclose(skel.joints, in_frame_a(sim, subject), atol=1e-9)


def test_low_confidence_joint_is_dropped(sim, subject):
    ka, kb = simulator.generate_skeleton_views(sim, subject)
    data = ka.data.copy()
    data[JOINT["LWrist"], 2] = 0.1
    skel = reconstruct_skeleton(sim.rig.in_frame_a(), Keypoints2D(data), kb)
    assert not skel.valid[JOINT["LWrist"]]
    assert np.isnan(skel.joints[JOINT["LWrist"]]).all()
    report = segment_lengths(skel)
    assert report.per_side["lower_arm"]["left"] is None
    assert report.lengths["lower_arm"] == pytest.approx(report.per_side["lower_arm"]["right"])


def test_empty_skeleton(sim, subject):
    ka, kb = simulator.generate_skeleton_views(sim, subject)
    data = ka.data.copy()
    data[1:, 2] = 0.0
    with pytest.raises(EmptySkeletonError):
        reconstruct_skeleton(sim.rig.in_frame_a(), Keypoints2D(data), kb)


def test_noisy_residuals_bounded(sim, subject):
    sigma = 0.5
    ka, kb = simulator.generate_skeleton_views(sim, subject, sigma=sigma, seed=4)
    skel = reconstruct_skeleton(sim.rig.in_frame_a(), ka, kb)
    assert np.nanmax(skel.residual_a) <= 3 * sigma
    assert np.nanmax(skel.residual_b) <= 3 * sigma


def test_segment_of_known_length():
    joints = np.zeros((25, 3))
    joints[JOINT["RElbow"]] = [0.0, 0.0, 1.0]
    joints[JOINT["RWrist"]] = [0.0, 0.4, 1.0]
    valid = np.zeros(25, dtype=bool)
    valid[[JOINT["RElbow"], JOINT["RWrist"]]] = True
    report = segment_lengths(Skeleton(np.where(valid[:, None], joints, np.nan), valid))
    assert report.lengths["lower_arm"] == 0.4
    assert report.lengths["hips"] is None


@settings(max_examples=25)
@given(arrays(np.float64, 3, elements=st.floats(-3, 3)), arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_lengths_invariant_under_rigid_motion(rv, t):
    rng = np.random.default_rng(5)
    skel = Skeleton(rng.normal(size=(25, 3)), np.ones(25, dtype=bool))
    moved = skel.transformed(RigidTransform.from_rotvec(rv, t))
    a, b = segment_lengths(skel), segment_lengths(moved)
    for name in SEGMENTS:
        assert b.lengths[name] == pytest.approx(a.lengths[name], abs=1e-12)


def test_reference_comparison_fixture():
    diffs, mean = compare_lengths(REF_3D, REF_TAPE)
    expected = dict(zip(SEGMENTS, (0.1, 0.6, 4.9, 0.8, 0.6, 5.1)))
    for name in SEGMENTS:
        assert diffs[name] == pytest.approx(expected[name], abs=1e-9)
    assert mean == pytest.approx(12.1 / 6, abs=1e-12)
    # the printed difference row has 1.2 for the hips and averages to 2.1
    assert round(sum(REF_DIFF_PRINTED) / 6, 1) == 2.1


def test_comparison_skips_missing_segments():
    lengths = dict(REF_3D, hips=None)
    diffs, mean = compare_lengths(lengths, REF_TAPE)
    assert "hips" not in diffs
    assert mean == pytest.approx((12.1 - 0.8) / 5)


def test_segment_report_reference(sim, subject):
    ka, kb = simulator.generate_skeleton_views(sim, subject)
    skel = reconstruct_skeleton(sim.rig.in_frame_a(), ka, kb)
    report = segment_lengths(skel, simulator.REFERENCE_SEGMENTS)
    for name, value in simulator.REFERENCE_SEGMENTS.items():
        assert report.lengths[name] == pytest.approx(value, abs=1e-9)
    assert report.mean_difference < 1e-9


def test_body_25_layout():
    assert len(BODY_25) == 25
    assert BODY_25[4] == "RWrist" and BODY_25[24] == "RHeel"
