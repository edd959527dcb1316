import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permattack import metrics
from permattack.errors import ShapeError


def test_r2_perfect_prediction():
    y = np.array([1.0, 2.0, 3.0])
    assert metrics.metric_r2(y, y) == 1.0


def test_r2_mean_prediction_is_zero():
    y = np.array([1.0, 2.0, 3.0, 6.0])
    pred = np.full_like(y, y.mean())
    assert metrics.metric_r2(pred, y) == pytest.approx(0.0, abs=1e-15)


def test_r2_constant_target_degenerate():
    y = np.array([5.0, 5.0, 5.0])
    assert metrics.metric_r2(np.array([5.0, 5.0, 5.0]), y) == 1.0
    assert metrics.metric_r2(np.array([4.0, 5.0, 6.0]), y) == 0.0


def test_suite_perfect():
    y = np.array([1.0, 2.0, 3.0])
    m = metrics.metric_suite(y, y)
    assert m.mse == 0.0 and m.rmse == 0.0 and m.mae == 0.0 and m.mape == 0.0
    assert m.r2 == 1.0


def test_rmse_squared_equals_mse():
    rng = np.random.default_rng(0)
    pred, target = rng.normal(size=200), rng.normal(size=200)
    m = metrics.metric_suite(pred, target)
    assert m.rmse ** 2 == pytest.approx(m.mse, rel=1e-12)


@settings(max_examples=100)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=50),
       st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=2, max_size=50))
def test_mae_never_exceeds_rmse(a, b):
    n = min(len(a), len(b))
    m = metrics.metric_suite(np.array(a[:n]), np.array(b[:n]))
    assert m.mae <= m.rmse + 1e-9


def test_mape_skips_zero_targets():
    pred = np.array([1.0, 2.0, 5.0])
    target = np.array([0.0, 4.0, 5.0])
    # Only targets 4 and 5 count: |4-2|/4 = 0.5, |5-5|/5 = 0.
    assert metrics.metric_mape(pred, target) == pytest.approx(0.25)


def test_mape_all_zero_targets():
    assert metrics.metric_mape(np.array([1.0]), np.array([0.0])) == 0.0


def test_residuals_sign_convention():
    r = metrics.residuals(np.array([2.0]), np.array([5.0]))
    assert r.tolist() == [3.0]  # actual minus predicted


def test_r2_at_most_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        pred, target = rng.normal(size=30), rng.normal(size=30)
        assert metrics.metric_r2(pred, target) <= 1.0


def test_accuracy():
    assert metrics.metric_accuracy(np.array([1, 2, 3]), np.array([1, 0, 3])) == pytest.approx(2 / 3)


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        metrics.metric_mse(np.zeros(3), np.zeros(4))
