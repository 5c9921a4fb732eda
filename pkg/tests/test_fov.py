import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from catastereo import fov
from catastereo.errors import (
    CatastereoError,
    DivergingViewsError,
    EmptyGridError,
    MirrorOccludesCameraError,
)

D = math.radians
BETA = D(55.0)
B_M = 0.025
L_M = 0.03


# frozen reference values for the 55 deg / 2.5 cm / 3 cm adapter
def test_alpha_right_reference():
    _, a_r = fov.alpha_left_right(BETA, B_M, L_M)
    assert math.degrees(a_r) == pytest.approx(34.09, abs=0.02)


def test_alpha_left_direct():
    a_l, _ = fov.alpha_left_right(BETA, B_M, L_M)
    assert math.degrees(a_l) == pytest.approx(12.99, abs=0.02)


def test_alpha_left_right_flat_mirror():
    a_l, a_r = fov.alpha_left_right(0.0, 0.01, 0.02)
    assert math.degrees(a_l) == pytest.approx(45.0)
    assert math.degrees(a_r) == pytest.approx(45.0)


def test_alpha_virtual_reference():
    assert math.degrees(fov.alpha_virtual(BETA, B_M, L_M)) == pytest.approx(47.08, abs=0.02)


def test_individual_fraction_reference(ref_cfg):
    assert fov.fov_report(ref_cfg).fov_percent_individual * 100 == pytest.approx(59.0, abs=0.5)


def test_alpha_virtual_vanishing_mirror():
    assert fov.alpha_virtual(BETA, B_M, 1e-9) < 1e-6


def test_occluding_mirror():
    with pytest.raises(MirrorOccludesCameraError):
        fov.alpha_left_right(BETA, 0.01, 0.03)
    with pytest.raises(MirrorOccludesCameraError):
        fov.AdapterConfig.symmetric(BETA, 0.01, 0.03)


def test_alpha_inner():
    a_r = math.atan(L_M * math.cos(BETA) / (2 * B_M - L_M * math.sin(BETA)))
    assert math.degrees(fov.alpha_inner(BETA, a_r)) == pytest.approx(14.08, abs=0.02)
    assert fov.alpha_inner(D(45.0), 0.0) == pytest.approx(0.0, abs=1e-15)
    assert math.degrees(fov.alpha_inner(D(50.0), D(30.0))) == pytest.approx(20.0)
    with pytest.raises(DivergingViewsError):
        fov.alpha_inner(D(60.0), D(10.0))


def test_d_min():
    assert fov.d_min(0.05, 1.8, D(14.08)) == pytest.approx(3.69, abs=0.01)
    assert fov.d_min(0.05, 1.8, D(45.0)) == pytest.approx(0.925)
    assert fov.d_min(0.0, 1.8, D(14.08)) == pytest.approx(0.9 / math.tan(D(14.08)), rel=1e-15)
    assert fov.d_min(0.0, 1.8, D(14.08)) == pytest.approx(3.5884, abs=5e-5)
    with pytest.raises(DivergingViewsError):
        fov.d_min(0.05, 1.8, 0.0)


def test_fov_percent_common():
    assert fov.fov_percent_common(1.8, 3.69, D(80.0)) * 100 == pytest.approx(29.4, abs=0.5)
    d = 1.8 / (2 * math.tan(D(40.0)))
    assert fov.fov_percent_common(1.8, d, D(80.0)) == pytest.approx(1.0)
    assert fov.h_fov(3.69, D(80.0)) == pytest.approx(6.19, abs=0.005)


def test_reference_report(ref_cfg):
    r = fov.fov_report(ref_cfg)
    assert math.degrees(r.alpha_R) == pytest.approx(34.09, abs=0.02)
    assert math.degrees(r.alpha_virtual) == pytest.approx(47.08, abs=0.02)
    assert math.degrees(r.alpha_in) == pytest.approx(14.08, abs=0.02)
    assert r.d_min == pytest.approx(3.69, abs=0.01)
    assert r.fov_percent_common * 100 == pytest.approx(29.4, abs=0.5)
    assert r.alpha_virtual == pytest.approx(r.alpha_L + r.alpha_R)
    assert r.baseline_used == 0.05


def test_predicted_baseline_closed_form():
    # virtual centers sit at (0, -2 b_m cos^2, ...) on opposite sides
    cfg = fov.AdapterConfig.symmetric(BETA, B_M, L_M)
    assert fov.predicted_baseline(cfg) == pytest.approx(4 * B_M * math.cos(BETA) ** 2, abs=1e-15)


def test_predicted_baseline_vanishes_with_b_m():
    values = [fov.predicted_baseline(fov.AdapterConfig.symmetric(BETA, b, 1e-4)) for b in (1e-2, 1e-3, 1e-4)]
    assert values == sorted(values, reverse=True)
    assert values[-1] < 1e-3


def test_report_uses_predicted_baseline_by_default():
    cfg = fov.AdapterConfig.symmetric(BETA, B_M, L_M)
    r = fov.fov_report(cfg)
    assert r.baseline_used == r.baseline_predicted


def test_unequal_mirrors_use_limiting_side():
    cfg = fov.AdapterConfig(D(50.0), D(55.0), B_M, B_M, L_M)
    r = fov.fov_report(cfg)
    assert r.side == "back"
    front = fov.alpha_inner(D(50.0), fov.alpha_left_right(D(50.0), B_M, L_M)[1])
    assert r.alpha_in < front


def test_config_validation():
    with pytest.raises(CatastereoError):
        fov.AdapterConfig.symmetric(0.0, B_M, L_M)
    with pytest.raises(CatastereoError):
        fov.AdapterConfig.symmetric(BETA, B_M, -1.0)
    with pytest.raises(CatastereoError):
        fov.AdapterConfig.symmetric(BETA, B_M, L_M, h_avg=0.0)


# sweeps


def test_sweep_single_point(ref_cfg):
    rows = fov.sweep(ref_cfg)
    assert len(rows) == 1
    assert rows[0].status == "ok"
    assert fov.sweep_row_values(rows[0])[:7] == ["55.00", "2.50", "3.00", "12.99", "34.09", "47.08", "14.09"]


def test_sweep_contains_reference_row(ref_cfg):
    rows = fov.sweep(ref_cfg, [D(b) for b in (50, 55, 60)], [0.02, 0.025], [0.03])
    assert len(rows) == 6
    ref = [r for r in rows if math.isclose(r.beta, BETA) and r.b_m == 0.025]
    assert math.degrees(ref[0].report.alpha_virtual) == pytest.approx(47.08, abs=0.02)


def test_sweep_flags_invalid_rows(ref_cfg):
    rows = fov.sweep(ref_cfg, [D(55.0), D(70.0)], [0.01, 0.025], [0.03])
    status = {(round(math.degrees(r.beta)), r.b_m): r.status for r in rows}
    assert status[(55, 0.01)] == "mirror-occludes-camera"
    assert status[(70, 0.025)] == "diverging-views"
    assert status[(55, 0.025)] == "ok"
    flagged = [r for r in rows if r.status != "ok"]
    assert all(fov.sweep_row_values(r)[3] == "" for r in flagged)


def test_sweep_empty_axis(ref_cfg):
    with pytest.raises(EmptyGridError):
        fov.sweep(ref_cfg, betas=[])


def test_sweep_alpha_virtual_increases_with_l_m(ref_cfg):
    rows = fov.sweep(ref_cfg, None, None, [0.025, 0.03, 0.035, 0.04, 0.045])
    assert all(r.status == "ok" for r in rows)
    values = [r.report.alpha_virtual for r in rows]
    assert np.all(np.diff(values) > 0)


def test_columns():
    assert fov.SWEEP_COLUMNS[:11] == (
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
    )


def test_summary_mentions_reference_values(ref_cfg):
    text = fov.summary(fov.fov_report(ref_cfg))
    for piece in ("47.08", "34.09", "14.09", "3.69"):
        assert piece in text


# properties

betas = st.floats(0.05, 1.5)
lengths = st.floats(0.001, 0.2)


@given(betas, lengths, lengths)
def test_left_below_right(beta, b_m, l_m):
    assume(2 * b_m > l_m * math.sin(beta) * 1.001)
    a_l, a_r = fov.alpha_left_right(beta, b_m, l_m)
    assert a_l < a_r


@given(betas, lengths, lengths, st.floats(1.01, 2.0))
def test_alpha_virtual_monotone(beta, b_m, l_m, k):
    assume(2 * b_m > k * l_m * math.sin(beta) * 1.001)
    base = fov.alpha_virtual(beta, b_m, l_m)
    assert fov.alpha_virtual(beta, b_m, k * l_m) > base
    assert fov.alpha_virtual(beta, k * b_m, l_m) < base


@given(st.floats(0.0, 0.5), st.floats(0.5, 3.0), st.floats(0.01, 1.5), st.floats(0.1, 2.9), st.floats(1e-3, 1e3))
def test_common_fraction_scale_invariant(b, h, a_in, alpha_real, s):
    f1 = fov.fov_percent_common(h, fov.d_min(b, h, a_in), alpha_real)
    f2 = fov.fov_percent_common(s * h, fov.d_min(s * b, s * h, a_in), alpha_real)
    assert f2 == pytest.approx(f1, rel=1e-12)


@given(st.floats(0.3, 1.2), st.floats(0.01, 0.05))
def test_sweep_rows_never_dropped(beta, b_m):
    base = fov.AdapterConfig.reference()
    rows = fov.sweep(base, [beta, beta / 2], [b_m, b_m / 4], [0.03])
    assert len(rows) == 4


def test_replace_keeps_validation(ref_cfg):
    with pytest.raises(MirrorOccludesCameraError):
        replace(ref_cfg, b_m_back=0.005)
