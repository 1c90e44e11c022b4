import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from tempdepth.errors import EmptyInputError, PreconditionError, SizeError
from tempdepth.metrics import (
    backward_warp,
    depth_metrics,
    qtc,
    rtc,
    temporal_consistency,
)


def naive_depth_metrics(pred, gt, cap):
    n = 0
    acc = dict(abs_rel=0.0, sq_rel=0.0, se=0.0, d1=0, d2=0, d3=0)
    for p, g in zip(pred.ravel(), gt.ravel()):
        if not (0 < g <= cap) or p <= 0:
            continue
        n += 1
        acc["abs_rel"] += abs(p - g) / g
        acc["sq_rel"] += (p - g) ** 2 / g
        acc["se"] += (p - g) ** 2
        r = max(p / g, g / p)
        acc["d1"] += r < 1.25
        acc["d2"] += r < 1.25**2
        acc["d3"] += r < 1.25**3
    return dict(abs_rel=acc["abs_rel"] / n, sq_rel=acc["sq_rel"] / n, rmse=(acc["se"] / n) ** 0.5,
                delta1=acc["d1"] / n, delta2=acc["d2"] / n, delta3=acc["d3"] / n)


def test_perfect_prediction():
    gt = np.random.default_rng(0).uniform(1, 80, (5, 5))
    m = depth_metrics(gt, gt)
    assert m.abs_rel == 0 and m.rmse == 0 and m.delta1 == 1


def test_twenty_percent_over():
    gt = np.random.default_rng(0).uniform(1, 60, (5, 5))
    m = depth_metrics(1.2 * gt, gt)
    assert m.abs_rel == pytest.approx(0.2, abs=1e-12)
    assert (m.delta1, m.delta2, m.delta3) == (1.0, 1.0, 1.0)


def test_thirty_percent_over():
    gt = np.random.default_rng(0).uniform(1, 60, (5, 5))
    m = depth_metrics(1.3 * gt, gt)
    assert m.delta1 == 0.0 and m.delta2 == 1.0


def test_depth_metrics_match_naive_loop():
    rng = np.random.default_rng(2)
    gt = rng.uniform(0.5, 100, (8, 8))
    pred = gt * rng.uniform(0.6, 1.6, (8, 8))
    m = depth_metrics(pred, gt, cap=80.0).to_dict()
    for k, v in naive_depth_metrics(pred, gt, 80.0).items():
        assert m[k] == pytest.approx(v, abs=1e-12)


def test_depth_metrics_empty():
    with pytest.raises(EmptyInputError):
        depth_metrics(np.ones((2, 2)), np.full((2, 2), 100.0), cap=80.0)


def test_delta_ordering():
    rng = np.random.default_rng(6)
    gt = rng.uniform(1, 80, (10, 10))
    m = depth_metrics(gt * rng.uniform(0.3, 3.0, (10, 10)), gt)
    assert m.delta1 <= m.delta2 <= m.delta3 <= 1


# ---- warping ---------------------------------------------------------------


def test_zero_flow_is_identity():
    prev = np.random.default_rng(0).uniform(1, 9, (4, 5))
    prev[1, 1] = 0.0
    warped, k = backward_warp(prev, np.zeros((2, 4, 5)))
    np.testing.assert_array_equal(k, (prev > 0).astype(np.uint8))
    np.testing.assert_array_equal(warped[k == 1], prev[k == 1])


def test_integer_shift():
    prev = np.array([[1.0, 2.0, 3.0, 4.0]])
    flow = np.zeros((2, 1, 4))
    flow[0] = 1.0
    warped, k = backward_warp(prev, flow)
    assert k.tolist() == [[1, 1, 1, 0]]
    assert warped[0, :3].tolist() == [2.0, 3.0, 4.0]


def test_half_pixel_shift_is_midpoint():
    prev = np.array([[1e-9, 2.0]])
    prev[0, 0] = 0.0
    flow = np.zeros((2, 1, 2))
    flow[0] = 0.5
    warped, k = backward_warp(prev, flow, prev_valid=np.ones((1, 2), bool))
    assert warped[0, 0] == 1.0 and k[0, 0] == 1
    assert k[0, 1] == 0


def test_warp_invalid_source_corner():
    prev = np.array([[1.0, 0.0, 3.0]])
    flow = np.zeros((2, 1, 3))
    flow[0] = 0.5
    _, k = backward_warp(prev, flow)
    assert k.tolist() == [[0, 0, 0]]


def test_warp_shape_check():
    with pytest.raises(SizeError):
        backward_warp(np.ones((3, 3)), np.zeros((2, 3, 4)))


# ---- TC metrics ------------------------------------------------------------


def test_qtc_examples():
    d = np.full((3, 3), 2.0)
    k = np.ones((3, 3))
    assert qtc(d, d, k) == 0.0
    assert qtc(d, np.ones((3, 3)), k) == 0.5
    d4 = np.full((2, 2), 4.0)
    k1 = np.zeros((2, 2))
    k1[1, 0] = 1
    assert qtc(d4, np.full((2, 2), 5.0), k1) == 0.25


def test_rtc_examples():
    k = np.ones((2, 3))
    d = np.random.default_rng(0).uniform(1, 5, (2, 3))
    assert rtc(d, d, k, 1.01) == 1.0
    assert rtc(np.full((2, 3), 2.0), np.ones((2, 3)), k, 1.25) == 0.0
    assert rtc(np.full((2, 3), 1.1), np.ones((2, 3)), k, 1.25) == 1.0


def test_tc_errors():
    with pytest.raises(EmptyInputError):
        qtc(np.ones((2, 2)), np.ones((2, 2)), np.zeros((2, 2)))
    d = np.ones((2, 2))
    d[0, 0] = 0.0
    with pytest.raises(PreconditionError):
        qtc(d, np.ones((2, 2)), np.ones((2, 2)))


pos = hnp.arrays(np.float64, (4, 4), elements=st.floats(0.5, 50.0))


@settings(max_examples=60, deadline=None)
@given(pos, pos, st.floats(1.0, 2.0), st.floats(1.0, 2.0))
def test_rtc_monotone_in_threshold(d, dw, t1, t2):
    k = np.ones((4, 4))
    lo, hi = sorted((t1, t2))
    assert rtc(d, dw, k, lo) <= rtc(d, dw, k, hi)


@settings(max_examples=60, deadline=None)
@given(pos, pos, st.sampled_from([0.25, 0.5, 2.0, 4.0, 8.0]))
def test_tc_joint_scale_invariance(d, dw, c):
    # power-of-two scales are exact in binary floating point
    k = np.ones((4, 4))
    assert qtc(c * d, c * dw, k) == qtc(d, dw, k)
    assert rtc(c * d, c * dw, k) == rtc(d, dw, k)


def test_temporal_consistency_static_scene():
    d = np.random.default_rng(0).uniform(1, 9, (5, 5))
    m = temporal_consistency(d, d, np.zeros((2, 5, 5)))
    assert m.qtc == 0.0 and m.rtc == 1.0
