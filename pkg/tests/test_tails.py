import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as ss

from newsflow.tails import (DegenerateFitWarning, InsufficientTailError, ccdf_points, fit_alpha, fit_table, fit_tail,
                            ks_profile, log_likelihood, power_law_ccdf, power_law_pmf, sample_power_law)


@pytest.mark.parametrize("alpha, x_min", [(0.5, 1), (1.0, 10), (2.5, 3)])
def test_pmf_normalised(alpha, x_min):
    cut = 100_000
    head = power_law_pmf(np.arange(x_min, cut), alpha, x_min).sum()
    assert head + power_law_ccdf(cut, alpha, x_min) == pytest.approx(1.0, rel=1e-12)
    assert power_law_ccdf(x_min, alpha, x_min) == pytest.approx(1.0)
    assert power_law_pmf(x_min - 1, alpha, x_min) == 0


def test_ccdf_examples():
    pts = ccdf_points([1, 1, 2, 3])
    assert pts.tolist() == [[1, 1.0], [2, 0.5], [3, 0.25]]
    scaled = ccdf_points([1, 1, 2, 4], rescale_max=2.0)
    assert scaled[-1].tolist() == [2.0, 0.125]
    with pytest.raises(ValueError):
        ccdf_points([])


def test_sampler_matches_pmf():
    rng = np.random.default_rng(3)
    x = sample_power_law(200_000, 1.2, 4, rng)
    assert x.min() >= 4
    values = np.arange(4, 14)
    observed = np.array([(x == v).sum() for v in values] + [(x >= 14).sum()])
    probs = np.append(power_law_pmf(values, 1.2, 4), power_law_ccdf(14, 1.2, 4))
    _, p = ss.chisquare(observed, probs * len(x))
    assert p > 1e-3


def test_mle_recovers_alpha_and_is_local_max():
    rng = np.random.default_rng(11)
    x = sample_power_law(20_000, 1.5, 5, rng)
    alpha, se = fit_alpha(x, 5)
    assert abs(alpha - 1.5) < 3 * se and se < 0.05
    tail = x[x >= 5].astype(float)
    n, s = float(len(tail)), float(np.log(tail).sum())
    ll = log_likelihood(alpha, n, s, 5)
    for d in (1e-3, -1e-3, 1e-2, -1e-2):
        assert log_likelihood(alpha + d, n, s, 5) < ll


def test_fit_alpha_errors():
    with pytest.raises(InsufficientTailError):
        fit_alpha([5] * 10, 5)
    with pytest.warns(DegenerateFitWarning):
        alpha, _ = fit_alpha([7] * 100, 7)
    assert alpha == pytest.approx(5.0, abs=1e-4)


def test_fit_tail_degenerate_inputs():
    with pytest.raises(InsufficientTailError):
        fit_tail([3] * 500, bootstrap=0)
    with pytest.raises(ValueError):
        fit_tail([0, 1, 2], bootstrap=0)
    with pytest.raises(ValueError):
        fit_tail([1.5, 2, 3], bootstrap=0)


def test_fit_tail_recovers_planted_tail():
    rng = np.random.default_rng(5)
    body = rng.integers(1, 20, 3000)            # flat body below the tail
    tail = sample_power_law(6000, 1.1, 20, rng)
    fit = fit_tail(np.concatenate([body, tail]), bootstrap=20, seed=1)
    assert abs(fit.alpha - 1.1) < 4 * fit.se_alpha + 0.02
    assert 10 <= fit.x_min <= 40
    assert not fit.flagged
    assert fit.xmin_ci[0] <= fit.x_min <= fit.xmin_ci[1]


def test_geometric_data_is_flagged():
    rng = np.random.default_rng(2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFitWarning)
        fit = fit_tail(rng.geometric(0.02, 20_000), bootstrap=0)
    assert fit.flagged


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_fit_tail_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    x = sample_power_law(600, 1.3, 2, rng)
    a = fit_tail(x, bootstrap=5, seed=9)
    b = fit_tail(rng.permutation(x), bootstrap=5, seed=9)
    assert (a.alpha, a.x_min, a.ks, a.n_tail) == (b.alpha, b.x_min, b.ks, b.n_tail)


def test_bootstrap_is_seeded():
    x = sample_power_law(2000, 1.0, 3, np.random.default_rng(0))
    a = fit_tail(x, bootstrap=15, seed=4)
    b = fit_tail(x, bootstrap=15, seed=4)
    assert a == b


def test_ks_profile_and_table():
    x = sample_power_law(3000, 1.0, 2, np.random.default_rng(8))
    prof = ks_profile(x)
    fit = fit_tail(x, bootstrap=0)
    assert list(prof.columns) == ["x_min", "alpha", "ks", "n_tail", "ks_critical"]
    best = prof.loc[prof["ks"].idxmin()]
    assert int(best["x_min"]) == fit.x_min and best["alpha"] == pytest.approx(fit.alpha)
    assert (prof["n_tail"] >= 50).all()
    table = fit_table({"B": fit, "A": fit})
    assert list(table["ticker"]) == ["A", "B"]


@settings(max_examples=25, deadline=None)
@given(st.floats(0.3, 3.0), st.integers(1, 40), st.integers(0, 2**31 - 1))
def test_mle_matches_bounded_scalar_search(alpha, x_min, seed):
    from scipy.optimize import minimize_scalar

    x = sample_power_law(400, alpha, x_min, np.random.default_rng(seed)).astype(float)
    n, s = float(len(x)), float(np.log(x).sum())
    ref = minimize_scalar(lambda a: -float(log_likelihood(a, n, s, x_min)), bounds=(0.1, 5.0), method="bounded",
                          options={"xatol": 1e-10})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateFitWarning)
        got, _ = fit_alpha(x, x_min)
    assert got == pytest.approx(ref.x, abs=2e-6)
