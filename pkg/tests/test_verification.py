import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seeds import verification as vf
from seeds.climatology import constant_climatology
from seeds.errors import InsufficientDataError, UndefinedCorrelationError

from . import oracles


def ensemble(seed, T=3, M=5, Q=2, P=7):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((T, M, Q, P)), rng.standard_normal((T, Q, P))


def test_rmse_and_acc_match_oracles():
    rng = np.random.default_rng(0)
    a, b, c = rng.standard_normal((3, 4, 2, 9))
    np.testing.assert_allclose(vf.rmse(a, b), oracles.rmse(a, b), atol=1e-13)
    np.testing.assert_allclose(vf.acc(a, b, c), oracles.acc(a, b, c), atol=1e-13)


def test_rmse_hand_case_and_weights():
    a = np.array([[[0.0, 0.0, 0.0, 0.0]]])
    b = np.array([[[1.0, -1.0, 1.0, -1.0]]])
    assert vf.rmse(a, b)[0, 0] == 1.0
    b2 = np.array([[[2.0, 0.0, 0.0, 0.0]]])
    assert vf.rmse(a, b2, weights=[3, 1, 1, 1])[0, 0] == pytest.approx(math.sqrt(12 / 6))


def test_acc_identity_and_sign():
    rng = np.random.default_rng(1)
    c, x = rng.standard_normal((2, 1, 10))
    np.testing.assert_allclose(vf.acc(x, x, c), 1.0, atol=1e-12)
    np.testing.assert_allclose(vf.acc(x, 2 * c - x, c), -1.0, atol=1e-12)


def test_acc_zero_variance_raises():
    c = np.zeros((1, 5))
    with pytest.raises(UndefinedCorrelationError):
        vf.acc(np.ones((1, 5)), np.arange(5.0)[None], c)


def test_crps_matches_oracle_and_hand_case():
    v, ref = ensemble(2)
    np.testing.assert_allclose(vf.crps(v, ref), oracles.crps(v, ref), atol=1e-12)
    # members {0, 2}, truth 1: mean abs error 1, pair term 4 / 8
    out = vf.crps(np.array([[[0.0]], [[2.0]]]), np.array([[1.0]]))
    assert out[0, 0] == pytest.approx(0.5)


def test_crps_single_member_is_absolute_error():
    v = np.array([[[1.5, -2.0]]])
    np.testing.assert_array_equal(vf.crps(v, np.array([[1.0, 1.0]])), [[0.5, 3.0]])


def test_crps_equals_integrated_squared_cdf_difference():
    rng = np.random.default_rng(3)
    members, y = rng.standard_normal(6), 0.3
    grid = np.linspace(-8, 8, 400_001)
    F = (members[:, None] <= grid).mean(axis=0)
    H = (grid >= y).astype(float)
    integral = np.sum((F - H) ** 2) * (grid[1] - grid[0])
    got = vf.crps(members[:, None, None], np.array([[y]]))[0, 0]
    assert got == pytest.approx(integral, abs=1e-3)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 9))
def test_crps_nonnegative_and_translation_invariant(seed, M):
    rng = np.random.default_rng(seed)
    v, ref = rng.standard_normal((M, 1, 4)), rng.standard_normal((1, 4))
    c = vf.crps(v, ref)
    assert np.all(c >= -1e-12)
    np.testing.assert_allclose(vf.crps(v + 3.0, ref + 3.0), c, atol=1e-12)
    np.testing.assert_allclose(vf.crps(v[::-1], ref), c, atol=1e-12)


def test_spread_matches_oracle_and_needs_two_members():
    v, _ = ensemble(4)
    np.testing.assert_allclose(vf.ensemble_spread(v), oracles.spread(v), atol=1e-13)
    with pytest.raises(InsufficientDataError, match="M >= 2"):
        vf.ensemble_spread(v[:, :1])


def test_rank_histogram_matches_oracle_without_ties():
    v, ref = ensemble(5, T=20, M=4)
    np.testing.assert_array_equal(vf.rank_histogram(v, ref), oracles.ranks_no_ties(v, ref))


def test_rank_histogram_ties_are_randomised():
    v = np.zeros((4000, 3, 1, 1))
    ref = np.zeros((4000, 1, 1))
    h = vf.rank_histogram(v, ref, rng=1)[0, 0]
    assert h.sum() == 4000
    np.testing.assert_allclose(h / 4000, 0.25, atol=0.03)
    np.testing.assert_array_equal(h, vf.rank_histogram(v, ref, rng=1)[0, 0])


def test_unreliability_hand_case_and_oracle():
    r = vf.unreliability_delta(np.array([4, 0, 0, 0]))
    assert r.Delta == pytest.approx(9 + 1 + 1 + 1)
    assert r.Delta0 == pytest.approx(4 * 3 / 4)
    assert r.delta == pytest.approx(4.0)
    counts = np.array([3, 7, 5, 2, 8])
    D, D0, d = oracles.unreliability(list(counts))
    r = vf.unreliability_delta(counts)
    assert (r.Delta, r.Delta0, r.delta) == pytest.approx((D, D0, d))
    assert vf.unreliability_delta(np.full(5, 6)).delta == 0


def test_unreliability_rejects_inconsistent_counts():
    with pytest.raises(ValueError):
        vf.unreliability_delta(np.array([[1, 2], [2, 2]]))
    with pytest.raises(InsufficientDataError):
        vf.unreliability_delta(np.zeros(3))


def test_calibrated_ensemble_has_delta_near_one():
    # exchangeable truth and members: E[Delta] = Delta0
    rng = np.random.default_rng(6)
    x = rng.standard_normal((300, 11, 1, 400))
    h = vf.rank_histogram(x[:, 1:], x[:, 0])
    r = vf.unreliability_delta(h)
    assert r.global_delta == pytest.approx(1.0, abs=0.1)
    narrow = vf.unreliability_delta(vf.rank_histogram(0.3 * x[:, 1:], x[:, 0]))
    assert narrow.global_delta > 10


def test_binary_event_spec():
    assert vf.BinaryEventSpec(2).label == "+2sigma"
    assert vf.BinaryEventSpec(-2).direction == "<="
    with pytest.raises(ValueError):
        vf.BinaryEventSpec(0)
    e = vf.BinaryEventSpec(1.0)
    assert e.occurs(3.0, 1.0, 2.0) and not e.occurs(2.9, 1.0, 2.0)
    assert vf.BinaryEventSpec(-1.0).occurs(-1.0, 1.0, 2.0)


@pytest.mark.parametrize("thr", [2.0, -2.0, 0.5])
def test_brier_and_log_loss_match_oracles(thr):
    rng = np.random.default_rng(7)
    v = 2 * rng.standard_normal((3, 8, 2, 10))
    ref = 2 * rng.standard_normal((3, 2, 10))
    mean, std = 0.1 * rng.standard_normal((2, 3, 2, 10))
    std = 1 + np.abs(std)
    e = vf.BinaryEventSpec(thr)
    np.testing.assert_allclose(vf.brier(v, ref, e, mean, std), oracles.brier(v, ref, mean, std, thr), atol=1e-13)
    np.testing.assert_allclose(vf.log_loss(v, ref, e, mean, std), oracles.log_loss(v, ref, mean, std, thr),
                               atol=1e-12)


def test_log_loss_conventions_hand_case():
    # 3 of 4 members exceed, the truth does not
    v = np.array([3.0, 3.0, 3.0, 0.0])[:, None, None]
    ref = np.array([[0.0]])
    e = vf.BinaryEventSpec(2.0)
    m, s = np.zeros((1, 1)), np.ones((1, 1))
    eps = vf.LOG_LOSS_EPS
    assert vf.brier(v, ref, e, m, s)[0] == pytest.approx(0.75**2)
    printed = -(0.75 * math.log(eps) + 0.25 * math.log(1 + eps))
    conventional = -math.log(0.25 + eps)
    assert vf.log_loss(v, ref, e, m, s)[0] == pytest.approx(printed)
    assert vf.log_loss(v, ref, e, m, s, conventional=True)[0] == pytest.approx(conventional)


def test_perfect_deterministic_event_forecast_scores_zero():
    v = np.array([[[5.0, -5.0]]] * 3)
    ref = np.array([[5.0, -5.0]])
    e = vf.BinaryEventSpec(2.0)
    m, s = np.zeros((1, 2)), np.ones((1, 2))
    assert vf.brier(v, ref, e, m, s)[0] == 0
    assert vf.log_loss(v, ref, e, m, s)[0] == pytest.approx(-math.log(1 + vf.LOG_LOSS_EPS))


def test_spread_correlation_of_scaled_ensemble_is_one():
    rng = np.random.default_rng(8)
    v = rng.standard_normal((2, 6, 1, 30)) * rng.uniform(0.5, 2, 30)
    np.testing.assert_allclose(vf.spread_correlation(v, 3 * v + 1), 1.0, atol=1e-12)


def test_summarize_variance_and_stderr():
    s = vf.summarize(np.array([[1.0, 2.0], [3.0, 2.0], [5.0, 2.0]]))
    np.testing.assert_allclose(s.value, [3, 2])
    np.testing.assert_allclose(s.variance, [4, 0])
    np.testing.assert_allclose(s.stderr, [2 / math.sqrt(3), 0])
    assert s.n == 3
    with pytest.raises(InsufficientDataError):
        vf.summarize(np.zeros((0, 2)))


def test_model_climatology_spread():
    rng = np.random.default_rng(9)
    f = rng.standard_normal((4, 5, 1, 3))
    doys = np.array([10, 10, 20, 366])
    mc = vf.model_climatology_spread(f, doys)
    sp = vf.ensemble_spread(f)
    np.testing.assert_allclose(mc.for_doy(10), 0.5 * (sp[0] + sp[1]))
    np.testing.assert_allclose(mc.for_doy(366), sp[3])
    assert mc.count[9] == 2 and np.isnan(mc.spread[0]).all()
    with pytest.raises(InsufficientDataError):
        mc.for_doy(11)


def test_climatology_fields_and_latitude_weights():
    table = constant_climatology(np.full((1, 2), 3.0), np.full((1, 2), 2.0))
    m, s = vf.climatology_fields(table, np.array([1, 2]))
    assert m.shape == (2, 1, 2) and np.all(s == 2.0)
    with pytest.raises(TypeError):
        vf.climatology_fields(object(), 1)
    w = vf.latitude_weights(np.radians([0.0, 60.0]))
    np.testing.assert_allclose(w, [4 / 3, 2 / 3])


def test_metric_report_csv():
    r = vf.MetricReport()
    r.add("rmse", ["t2m", "u850"], 1, vf.summarize(np.array([[1.0, 2.0], [3.0, 4.0]])))
    r.add_value("delta", "t2m", 1, 0.5, n=2)
    lines = r.to_csv().splitlines()
    assert lines[0] == "metric,field,lead,value,stderr,n"
    assert lines[1] == "rmse,t2m,1,2.0,1.0,2"
    assert lines[3].startswith("delta,t2m,1,0.5,nan,2")
    assert r.metrics() == ["delta", "rmse"]


def test_reference_shape_checked():
    v, ref = ensemble(10)
    with pytest.raises(ValueError):
        vf.crps(v, ref[:, :1])
