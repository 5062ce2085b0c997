import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats as ss

from newsflow.calendar_time import TimeScale
from newsflow.series import CompanyPanel
from newsflow.stats import (CORRELATION_PAIRS, GRANGER_DIRECTIONS, SingularRegressionError,
                            UndefinedCorrelationError, bic_table, bonferroni, granger, ols, run_test_battery,
                            select_lag, spearman, spearman_pvalue)


def _brute_spearman(x, y):
    def ranks(v):
        # average-tie ranks by direct counting
        return np.array([np.sum(v < a) + (np.sum(v == a) + 1) / 2 for a in v])
    rx, ry = ranks(np.asarray(x, float)), ranks(np.asarray(y, float))
    rx, ry = rx - rx.mean(), ry - ry.mean()
    return float(rx @ ry / math.sqrt((rx @ rx) * (ry @ ry)))


def test_spearman_examples():
    assert spearman([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4, 5], [1, 4, 9, 16, 1000]) == pytest.approx(1.0)
    assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        spearman([1, 2], [1, 2])
    with pytest.raises(ValueError):
        spearman([1, 2, np.nan], [1, 2, 3])


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(-5, 5)), min_size=3, max_size=30))
def test_spearman_matches_brute_force(pairs):
    x, y = map(np.array, zip(*pairs))
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    assert spearman(x, y) == pytest.approx(_brute_spearman(x, y), abs=1e-12)
    assert spearman(x, y) == pytest.approx(ss.spearmanr(x, y)[0], abs=1e-12)


def test_permutation_pvalue_properties(rng):
    x = rng.normal(size=60)
    y = x + rng.normal(size=60)
    p1 = spearman_pvalue(x, y, 999, seed=5)
    assert p1 == spearman_pvalue(x, y, 999, seed=5)
    assert p1 == pytest.approx(1 / 1000)  # strong dependence: nothing beats the observed rho
    z = rng.normal(size=60)
    p = spearman_pvalue(x, z, 999, seed=1)
    assert 1 / 1000 <= p <= 1
    assert p == pytest.approx(ss.spearmanr(x, z)[1], abs=0.06)
    assert spearman_pvalue(x, z, method="asymptotic") == pytest.approx(ss.spearmanr(x, z)[1], rel=1e-6)
    with pytest.raises(ValueError):
        spearman_pvalue(x, z, method="exact")


def test_exact_enumeration_small_sample():
    """With n = 6 the permutation distribution can be enumerated exactly."""
    x = np.array([1, 2, 3, 4, 5, 6.0])
    y = np.array([2, 1, 4, 3, 6, 5.0])
    rho = spearman(x, y)
    perms = [spearman(x, np.array(p)) for p in itertools.permutations(y)]
    exact = np.mean(np.abs(perms) >= abs(rho) - 1e-12)
    assert spearman_pvalue(x, y, 20_000, seed=3) == pytest.approx(exact, abs=0.01)


def test_ols_matches_normal_equations(rng):
    X = np.column_stack([np.ones(50), rng.normal(size=(50, 3))])
    y = X @ np.array([1.0, -2.0, 0.5, 3.0]) + rng.normal(size=50)
    fit = ols(X, y)
    beta = np.linalg.solve(X.T @ X, X.T @ y)
    assert np.allclose(fit.coef, beta)
    assert fit.rss == pytest.approx(float(np.sum((y - X @ beta) ** 2)))
    with pytest.raises(SingularRegressionError):
        ols(np.column_stack([X, X[:, 1] * 2]), y)
    with pytest.raises(SingularRegressionError):
        ols(np.column_stack([X, np.zeros(50)]), y)
    with pytest.raises(SingularRegressionError):
        ols(X[:3], y[:3])


def _granger_oracle(x, y, lag):
    n = len(y)
    rows = range(lag, n)
    Y = np.array([y[t] for t in rows])
    R = np.array([[1.0] + [y[t - j] for j in range(1, lag + 1)] for t in rows])
    U = np.array([[1.0] + [y[t - j] for j in range(1, lag + 1)] + [x[t - j] for j in range(1, lag + 1)]
                  for t in rows])
    rss = lambda A: float(np.sum((Y - A @ np.linalg.lstsq(A, Y, rcond=None)[0]) ** 2))
    dfd = len(Y) - 2 * lag - 1
    f = (rss(R) - rss(U)) / lag / (rss(U) / dfd)
    return f, ss.f.sf(f, lag, dfd)


@pytest.mark.parametrize("lag", [1, 2, 4])
def test_granger_matches_oracle(rng, lag):
    x = rng.normal(size=200)
    y = np.zeros(200)
    for t in range(1, 200):
        y[t] = 0.3 * y[t - 1] + 0.2 * x[t - 1] + rng.normal()
    res = granger(x, y, lag, ("X", "Y"))
    f, p = _granger_oracle(x, y, lag)
    assert res.f_stat == pytest.approx(f, rel=1e-9)
    assert res.p_value == pytest.approx(p, rel=1e-7)
    assert res.n_effective == 200 - lag and res.label == "X->Y"


def test_granger_detects_and_respects_direction(rng):
    x = rng.normal(size=500)
    y = np.concatenate([[0.0], 0.5 * x[:-1]]) + rng.normal(size=500)
    assert granger(x, y, 1).p_value < 1e-6
    assert granger(y, x, 1).p_value > 1e-3


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 100), st.floats(-50, 50), st.floats(0.1, 100))
def test_granger_affine_invariance(seed, a, b, c):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=80), rng.normal(size=80)
    base = granger(x, y, 2)
    moved = granger(a * x + b, c * y - b, 2)
    assert moved.f_stat == pytest.approx(base.f_stat, rel=1e-6, abs=1e-9)


def test_granger_errors(rng):
    x = rng.normal(size=12)
    with pytest.raises(ValueError):
        granger(x, x, 0)
    with pytest.raises(ValueError, match="too short"):
        granger(x, x, 3)
    with pytest.raises(SingularRegressionError):
        granger(np.zeros(50), rng.normal(size=50), 1)


def test_granger_null_pvalues_uniform():
    rng = np.random.default_rng(17)
    ps = [granger(rng.normal(size=120), rng.normal(size=120), 2).p_value for _ in range(600)]
    assert ss.kstest(ps, "uniform").pvalue > 1e-3


def test_select_lag(rng):
    x = rng.normal(size=600)
    y = np.zeros(600)
    for t in range(3, 600):
        y[t] = 0.8 * x[t - 3] + 0.3 * rng.normal()
    assert select_lag(x, y, 5) >= 3
    assert select_lag(x, y, 1) == 1
    table = bic_table(x, y, 5)
    assert table.shape == (5,) and int(np.argmin(table)) + 1 == select_lag(x, y, 5)
    with pytest.raises(ValueError):
        select_lag(x, y, 0)


def test_bonferroni_examples():
    assert bonferroni([0.001, 0.0004, 0.0005], 0.05, 100).tolist() == [False, True, False]
    assert bonferroni([0.05], 0.05, 1).tolist() == [False]  # strict inequality
    with pytest.raises(ValueError):
        bonferroni([0.1], 0.0, 10)
    with pytest.raises(ValueError):
        bonferroni([0.1], 0.05, 0)


@given(arrays(float, 20, elements=st.floats(0, 1)), st.integers(1, 50), st.integers(1, 50))
def test_bonferroni_monotone(p, n1, n2):
    lo, hi = sorted((n1, n2))
    strict = bonferroni(p, 0.05, hi)
    loose = bonferroni(p, 0.05, lo)
    assert np.all(~strict | loose)
    assert np.all(~loose | (p < 0.05))


def _panel(company, rng, n=300):
    cols = {k: rng.normal(size=n) for k in ("V", "R", "C", "S", "WS")}
    cols["sigma"] = np.abs(cols["R"])
    return CompanyPanel(company, TimeScale.parse(65), **cols)


def test_battery_structure_and_order_independence(rng):
    panels = [_panel(c, rng) for c in ("CCC", "AAA", "BBB")]
    a = run_test_battery(panels, n_perm=99, seed=3)
    b = run_test_battery(list(reversed(panels)), n_perm=99, seed=3)
    assert a.companies == ["AAA", "BBB", "CCC"]
    assert a.to_json() == b.to_json()
    assert set(a.correlations["AAA"]) == {f"{p}~{q}" for p, q in CORRELATION_PAIRS}
    assert set(a.granger["AAA"]) == {f"{p}->{q}" for p, q in GRANGER_DIRECTIONS}
    assert a.n_tests == 3 and a.bonferroni_level == pytest.approx(0.05 / 3)
    assert a.correlation_matrix().shape == (3, 4) and a.granger_matrix().shape == (3, 9)
    parallel = run_test_battery(panels, n_perm=99, seed=3, workers=2)
    assert parallel.to_json() == a.to_json()


def test_battery_empty_and_failures(rng):
    empty = run_test_battery({}, 65)
    assert empty.companies == [] and empty.n_tests == 1
    flat = _panel("F", rng)
    flat = CompanyPanel("F", flat.scale, flat.V, flat.R, flat.sigma, np.zeros(300), flat.S, np.zeros(300))
    rep = run_test_battery([flat], n_perm=49)
    assert isinstance(rep.correlations["F"]["WS~R"], str)
    assert isinstance(rep.granger["F"]["WS->R"], str)
    assert rep.rejected("granger", "WS->R") == {"F": False}
    assert "error" in rep.to_dict()["granger"]["F"]["WS->R"]
