import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from vwsgibbs import diagnostics as diag


def ar1(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / math.sqrt(1 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + e[t]
    return x


# univariate ESS


def test_iid_ess_band_on_average():
    # a single sqrt-rule estimate has ~14% relative spread; its average sits in the band
    R = 10_000
    vals = [diag.ess(np.random.default_rng(s).standard_normal(R)) for s in range(50)]
    assert 0.85 * R <= np.mean(vals) <= 1.05 * R


@pytest.mark.parametrize("seed", range(5))
def test_iid_ess_band_auto(seed):
    R = 10_000
    x = np.random.default_rng(seed).standard_normal(R)
    assert 0.85 * R <= diag.ess(x, batch_size="auto") <= 1.05 * R


@pytest.mark.parametrize("batch_size", ["sqroot", "auto"])
def test_ar1_ess_theory(batch_size):
    R, phi = 100_000, 0.9
    x = ar1(phi, R, 1)
    target = R * (1 - phi) / (1 + phi)
    assert diag.ess(x, batch_size=batch_size) == pytest.approx(target, rel=0.2)


def test_constant_chain():
    val, flag = diag.ess(np.full(500, 3.0), return_flag=True)
    assert val == 0.0 and flag is True
    vals, flags = diag.ess(np.column_stack([np.full(500, 1.0), np.arange(500.0) % 7]), return_flag=True)
    assert vals[0] == 0.0 and list(flags) == [True, False]


def test_ess_clamp_and_length():
    alt = np.tile([1.0, -1.0], 500)
    assert diag.ess(alt) <= 1.05 * alt.size
    with pytest.raises(ValueError):
        diag.ess(np.arange(50.0))


def test_explicit_batch_size():
    x = ar1(0.5, 5000, 2)
    assert diag.ess(x, batch_size=50) > 0
    with pytest.raises(ValueError):
        diag.ess(x, batch_size=4000)


def test_batch_size_matches_ar1_theory():
    R, phi = 100_000, 0.9
    b = diag.optimal_batch_size(ar1(phi, R, 3), max_order=1)
    ratio = 2 * phi / (1 - phi * phi)
    assert b == pytest.approx(ratio ** (2 / 3) * R ** (1 / 3), rel=0.2)


def test_batch_size_for_white_noise_is_small():
    assert diag.optimal_batch_size(np.random.default_rng(4).standard_normal(4000), max_order=1) <= 3


# multivariate ESS


def test_iid_mess_band():
    R = 10_000
    x = np.random.default_rng(5).standard_normal((R, 3)) @ np.array([[1, 0.5, 0], [0, 1, 0.3], [0, 0, 1]])
    assert 0.8 * R <= diag.multivariate_ess(x) <= 1.1 * R
    assert 0.8 * R <= diag.multivariate_ess(x, batch_size="auto") <= 1.1 * R


def test_mess_one_dimension_is_ess():
    x = ar1(0.6, 4000, 6)
    assert diag.multivariate_ess(x[:, None]) == pytest.approx(diag.ess(x), rel=1e-10)


def test_mess_duplicate_column():
    x = np.random.default_rng(7).standard_normal((1000, 2))
    with pytest.raises(diag.SingularCovarianceError):
        diag.multivariate_ess(np.column_stack([x, x[:, 0]]))


def test_mess_needs_enough_draws():
    with pytest.raises(ValueError):
        diag.multivariate_ess(np.random.default_rng(0).standard_normal((20, 5)))


@given(shift=st.floats(-1e3, 1e3), scale=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
@settings(max_examples=30, deadline=None)
def test_affine_invariance(shift, scale, seed):
    x = ar1(0.7, 2000, seed)
    y = np.column_stack([x, ar1(0.3, 2000, seed + 1)])
    for bs in ("sqroot", "auto"):
        assert diag.ess(shift + scale * x, batch_size=bs) == pytest.approx(diag.ess(x, batch_size=bs), rel=1e-8)
        z = y * np.array([scale, 1 / scale]) + shift
        assert diag.multivariate_ess(z, batch_size=bs) == pytest.approx(diag.multivariate_ess(y, batch_size=bs), rel=1e-8)


# autocorrelation


def test_autocorr_lag_zero():
    assert diag.autocorr(ar1(0.5, 300, 8), 0) == 1.0


def test_autocorr_alternating():
    assert diag.autocorr(np.tile([1.0, -1.0], 5000), 1) == pytest.approx(-1.0, abs=1e-3)


@given(x=hnp.arrays(np.float64, st.integers(3, 300), elements=st.floats(-1e3, 1e3)), lag=st.integers(1, 2))
@settings(max_examples=100, deadline=None)
def test_autocorr_two_ways(x, lag):
    val, flag = diag.autocorr(x, lag, return_flag=True)
    if flag:
        assert math.isnan(val)
        return
    c = x - x.mean()
    direct = sum(c[t] * c[t + lag] for t in range(len(x) - lag)) / sum(v * v for v in c)
    assert val == pytest.approx(direct, abs=1e-10)
    assert -1.0 - 1e-12 <= val <= 1.0 + 1e-12


def test_autocorr_constant_flag():
    val, flag = diag.autocorr(np.ones(100), 1, return_flag=True)
    assert math.isnan(val) and flag


def test_autocorr_lag_range():
    with pytest.raises(ValueError):
        diag.autocorr(np.arange(10.0), 10)


# summaries


def test_summary_constant_chain():
    row = diag.summarize(np.full((200, 1), 2.5), ["c"])[0]
    assert row["mean"] == 2.5 and row["sd"] == 0.0 and row["q5"] == 2.5 and row["q95"] == 2.5 and row["ess"] == 0.0


def test_summary_linear_quantile():
    row = diag.summarize(np.arange(1000.0)[:, None], ["x"])[0]
    assert row["q5"] == pytest.approx(49.95, abs=1e-12)
    assert row["q95"] == pytest.approx(949.05, abs=1e-12)


def test_summary_order_and_names():
    x = np.random.default_rng(9).standard_normal((300, 3)) + np.array([10.0, -5.0, 0.0])
    rows = diag.summarize(x, ["b", "a", "c"])
    assert [r["variable"] for r in rows] == ["b", "a", "c"]
    assert [round(r["mean"]) for r in rows] == [10, -5, 0]
    with pytest.raises(ValueError):
        diag.summarize(x, ["only"])


@given(vals=hnp.arrays(np.float64, st.integers(1, 500), elements=st.floats(0, 1e4)))
@settings(max_examples=100, deadline=None)
def test_ess_quantiles_monotone(vals):
    q = diag.ess_quantiles(vals)
    assert q["min"] <= q["q1"] <= q["q2.5"]


def test_csv_and_json_output(tmp_path):
    rows = [{"variable": "a", "mean": 0.1}, {"variable": "b", "mean": 2.0}]
    text = diag.rows_to_csv(rows, tmp_path / "t.csv")
    assert text.splitlines() == ["variable,mean", "a,0.1", "b,2.0"]
    assert (tmp_path / "t.csv").read_text() == text
    blob = diag.to_json({"x": np.arange(3), "y": np.float64(1.5)}, tmp_path / "m.json")
    assert json.loads(blob) == {"x": [0, 1, 2], "y": 1.5}
