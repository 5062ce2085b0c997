import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special as sp
from scipy import stats as ss

from newsflow.special import betainc, betaincc, f_cdf, f_sf, hurwitz_zeta, t_sf_two_sided


def test_hurwitz_known_values():
    assert hurwitz_zeta(2.0, 1.0) == pytest.approx(math.pi ** 2 / 6, rel=1e-14)
    assert hurwitz_zeta(4.0, 1.0) == pytest.approx(math.pi ** 4 / 90, rel=1e-14)
    assert hurwitz_zeta(2.0, 0.5) == pytest.approx(math.pi ** 2 / 2, rel=1e-14)


def test_hurwitz_brute_force():
    k = np.arange(10_000_000, dtype=float)
    for s, a in [(3.0, 1.0), (2.5, 7.0), (4.2, 0.3)]:
        head = np.sum((k + a) ** -s)
        end = k[-1] + 1 + a
        tail = end ** (1 - s) / (s - 1) + 0.5 * end ** -s  # leading Euler-Maclaurin terms past the cut
        assert hurwitz_zeta(s, a) == pytest.approx(head + tail, rel=1e-12)


@given(st.floats(1.001, 8.0), st.floats(0.01, 1e6))
def test_hurwitz_matches_mpmath(s, a):
    ref = float(mpmath.zeta(s, a))
    assert hurwitz_zeta(s, a) == pytest.approx(ref, rel=1e-12)


def test_hurwitz_vectorised_and_domain():
    s = np.array([1.5, 2.0, 3.0])
    a = np.array([[1.0], [10.0], [1000.0]])
    assert np.allclose(hurwitz_zeta(s, a), sp.zeta(s, a), rtol=1e-12)
    with pytest.raises(ValueError):
        hurwitz_zeta(1.0, 1.0)
    with pytest.raises(ValueError):
        hurwitz_zeta(2.0, 0.0)


@given(st.floats(0.05, 200), st.floats(0.05, 200), st.floats(0.0, 1.0))
def test_betainc_matches_scipy(a, b, x):
    assert betainc(a, b, x) == pytest.approx(sp.betainc(a, b, x), rel=1e-9, abs=1e-14)
    assert betaincc(a, b, x) == pytest.approx(sp.betaincc(a, b, x), rel=1e-9, abs=1e-14)


def _mp_f_sf(f, d1, d2):
    # exact-arithmetic reference; scipy's f.sf loses digits when f is tiny
    with mpmath.workdps(40):
        f = mpmath.mpf(f)
        return float(mpmath.betainc(d2 / 2, d1 / 2, 0, d2 / (d2 + d1 * f), regularized=True))


@given(st.floats(0.0, 50), st.integers(1, 30), st.integers(1, 5000))
def test_f_distribution_matches_reference(f, d1, d2):
    ref = _mp_f_sf(f, d1, d2) if f > 0 else 1.0
    assert f_sf(f, d1, d2) == pytest.approx(ref, rel=1e-8, abs=1e-14)
    assert f_cdf(f, d1, d2) + f_sf(f, d1, d2) == pytest.approx(1.0, abs=1e-12)


def test_f_matches_scipy_in_bulk(rng):
    for f, d1, d2 in zip(rng.uniform(0.01, 20, 200), rng.integers(1, 30, 200), rng.integers(1, 5000, 200)):
        assert f_sf(f, d1, d2) == pytest.approx(ss.f.sf(f, d1, d2), rel=1e-8, abs=1e-14)


@given(st.floats(-20, 20), st.integers(1, 500))
def test_t_two_sided_matches_reference(t, df):
    with mpmath.workdps(40):
        tt = mpmath.mpf(t) ** 2
        ref = float(mpmath.betainc(mpmath.mpf(df) / 2, 0.5, 0, df / (df + tt), regularized=True))
    assert t_sf_two_sided(t, df) == pytest.approx(ref, rel=1e-8, abs=1e-14)
