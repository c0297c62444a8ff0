import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lesbar.metrics import ScoreReport, cv_average, evaluate_predictions, mapped_rmse, rmse

finite_floats = st.floats(min_value=-100, max_value=100, allow_nan=False)


def test_rmse_hand_values():
    assert rmse([1.0, 3.0], [2.0, 5.0]) == pytest.approx(1.5811388300841898, abs=1e-12)
    assert rmse([4.0], [1.0]) == pytest.approx(3.0, abs=1e-12)
    assert rmse([1.0, 2.0], [1.0, 2.0]) == 0.0


def test_rmse_errors():
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])


@given(st.lists(finite_floats, min_size=1, max_size=30))
def test_rmse_symmetric_and_zero_iff_equal(values):
    y = np.array(values)
    other = y + 0.5
    assert rmse(y, other) == pytest.approx(rmse(other, y), abs=1e-12)
    assert rmse(y, y) == 0.0
    assert rmse(y, other) > 0.0


def test_rmse_permutation_invariant():
    y = np.array([1.0, 2.0, 3.0, 4.0])
    y_pred = np.array([1.5, 1.0, 3.5, 2.0])
    perm = [2, 0, 3, 1]
    assert rmse(y[perm], y_pred[perm]) == pytest.approx(rmse(y, y_pred), abs=1e-12)


def test_mapped_rmse_hand_case():
    mapped, a, b = mapped_rmse([1.0, 2.0, 3.0], [1.0, 1.0, 3.0])
    assert a == pytest.approx(0.75, abs=1e-12)
    assert b == pytest.approx(0.75, abs=1e-12)
    assert mapped == pytest.approx(math.sqrt(1.0 / 6.0), abs=1e-12)


def test_mapped_rmse_removes_affine_error():
    y = np.array([1.0, 2.5, 4.0, 6.0])
    mapped, a, b = mapped_rmse(y, 2.0 * y + 3.0)
    assert mapped == pytest.approx(0.0, abs=1e-12)
    assert a == pytest.approx(0.5, abs=1e-12)
    assert b == pytest.approx(-1.5, abs=1e-12)


def test_mapped_rmse_identity():
    y = np.array([1.0, 2.0, 5.0])
    mapped, a, b = mapped_rmse(y, y)
    assert (mapped, a, b) == pytest.approx((0.0, 1.0, 0.0), abs=1e-12)


def test_mapped_rmse_constant_predictions_rejected():
    with pytest.raises(ValueError):
        mapped_rmse([1.0, 2.0], [3.0, 3.0])


@given(st.lists(st.tuples(finite_floats, finite_floats), min_size=3, max_size=40))
def test_mapped_rmse_never_exceeds_raw(pairs):
    y = np.array([p[0] for p in pairs])
    y_pred = np.array([p[1] for p in pairs])
    if float(np.mean((y_pred - y_pred.mean()) ** 2)) < 1e-9:
        return
    mapped, _, _ = mapped_rmse(y, y_pred)
    assert mapped <= rmse(y, y_pred) + 1e-12


def test_cv_average():
    assert cv_average([0.5, 0.6, 0.7, 0.8, 0.9]) == pytest.approx(0.7, abs=1e-12)
    assert cv_average([0.42]) == pytest.approx(0.42, abs=1e-12)
    assert cv_average([0.9, 0.5, 0.7]) == pytest.approx(cv_average([0.5, 0.7, 0.9]), abs=1e-12)
    with pytest.raises(ValueError):
        cv_average([])


def test_evaluate_predictions_report_fields():
    report = evaluate_predictions([1.0, 2.0, 3.0], [1.1, 2.0, 2.8])
    assert isinstance(report, ScoreReport)
    assert report.n == 3
    assert report.mapped_rmse <= report.rmse + 1e-12
    payload = report.to_json()
    for key in ('"n"', '"rmse"', '"mapped_rmse"', '"a"', '"b"'):
        assert key in payload
