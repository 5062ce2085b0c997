import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from newsflow.calendar_time import SESSION_LEN, TimeScale, aggregate_bins
from newsflow.series import (CompanyMinutes, DegenerateInputError, SeasonalProfile, build_panel, compute_profiles,
                             deseasonalize, minute_returns, read_panel, seasonal_profile_clicks,
                             seasonal_profile_returns, seasonal_profile_volume, write_panel)


def _minutes(rng, n_days=4, with_clicks=True):
    shape = (n_days, SESSION_LEN)
    vol = rng.integers(1, 1000, shape).astype(float)
    prices = 100 * 10 ** np.cumsum(rng.normal(0, 1e-4, shape).reshape(-1)).reshape(shape)
    prices[rng.random(shape) < 0.1] = np.nan
    prices[0, 0] = 100.0
    clicks = rng.integers(0, 20, shape).astype(float) if with_clicks else np.zeros(shape)
    signs = rng.choice([-1.0, 0.0, 1.0], shape)
    return CompanyMinutes("X", vol, prices, clicks, signs * (clicks > 0), clicks * signs)


def test_volume_profile_examples():
    raw = np.zeros((2, SESSION_LEN))
    raw[0, 0], raw[0, 1] = 30, 10
    raw[1, 0], raw[1, 1] = 10, 30
    z = seasonal_profile_volume(raw).zeta
    assert z[0] == pytest.approx(0.5) and z[1] == pytest.approx(0.5) and z[2:].sum() == 0
    # a zero-volume day is excluded from the average
    raw = np.vstack([raw, np.zeros(SESSION_LEN)])
    assert np.allclose(seasonal_profile_volume(raw).zeta, z)
    with pytest.raises(DegenerateInputError):
        seasonal_profile_volume(np.zeros((2, SESSION_LEN)))


def test_profile_sums_and_means(rng):
    raw = rng.integers(0, 50, (5, SESSION_LEN)).astype(float)
    assert seasonal_profile_clicks(raw).zeta.sum() == pytest.approx(1.0)
    r = rng.normal(0, 1, (5, SESSION_LEN))
    assert seasonal_profile_returns(r).zeta.mean() == pytest.approx(1.0)


@settings(max_examples=30)
@given(arrays(float, 5, elements=st.floats(0.1, 10)), st.integers(0, 2**31 - 1))
def test_multiplicative_pattern_is_recovered(day_levels, seed):
    """x_{d,t} = a_d * b_t gives zeta = b / sum(b) and a flat de-seasonalised day."""
    b = np.random.default_rng(seed).uniform(0.1, 5, SESSION_LEN)
    raw = day_levels[:, None] * b[None, :]
    prof = seasonal_profile_volume(raw)
    assert np.allclose(prof.zeta, b / b.sum())
    flat = deseasonalize(raw, prof)
    assert np.allclose(flat, flat[:, :1])


def test_profile_validation():
    with pytest.raises(ValueError):
        SeasonalProfile("volume", np.ones(10))
    with pytest.raises(ValueError):
        SeasonalProfile("volume", np.zeros(SESSION_LEN))
    z = np.zeros(SESSION_LEN)
    z[0] = 1.0
    out = deseasonalize(np.ones((1, SESSION_LEN)), SeasonalProfile("volume", z))
    assert out[0, 0] == 1 and out[0, 1:].sum() == 0


def test_minute_returns_gaps_and_overnight():
    p = np.full((2, SESSION_LEN), np.nan)
    p[0, 0], p[0, 3], p[1, 1] = 100.0, 1000.0, 100.0
    r = minute_returns(p)
    assert r[0, 0] == 0 and r[0, 1] == 0 and r[0, 2] == 0
    assert r[0, 3] == pytest.approx(1.0)
    assert r[1, 0] == 0 and r[1, 1] == pytest.approx(-1.0)
    # returns telescope to the log ratio of last to first observed price
    assert r.sum() == pytest.approx(0.0)
    with pytest.raises(DegenerateInputError):
        minute_returns(np.full((1, SESSION_LEN), np.nan))
    # minutes before the first observation carry zero
    q = np.full((1, SESSION_LEN), np.nan)
    q[0, 10], q[0, 11] = 5.0, 50.0
    rq = minute_returns(q)
    assert rq[0, :11].sum() == 0 and rq[0, 11] == pytest.approx(1.0)


def test_ws_examples():
    shape = (1, SESSION_LEN)
    clicks = np.zeros(shape)
    weighted = np.zeros(shape)
    # minute 0: 10 clicks on a positive article and 4 on a negative one; minute 1: only negative
    clicks[0, 0], weighted[0, 0] = 14, 10 - 4
    clicks[0, 1], weighted[0, 1] = 5, -5
    m = CompanyMinutes("X", np.ones(shape), np.ones(shape), clicks, np.zeros(shape), weighted)
    daily = build_panel(m, "daily")
    assert daily.C[0] == 19 and daily.WS[0] == 19  # 6 - 5 > 0
    one = build_panel(m, 1)
    assert one.WS[0] > 0 and one.WS[1] < 0 and one.WS[2] == 0
    assert np.allclose(np.abs(one.WS), one.C * (weighted[0] != 0))


def test_daily_scale_is_raw_sum(rng):
    m = _minutes(rng)
    daily = build_panel(m, "daily")
    assert np.allclose(daily.V, m.volume.sum(axis=1))
    assert np.allclose(daily.C, m.clicks.sum(axis=1))
    assert np.allclose(daily.S, m.sentiment.sum(axis=1))
    # close-to-close log10 return
    r = minute_returns(m.prices)
    assert np.allclose(daily.R, r.sum(axis=1))
    assert np.allclose(daily.sigma, np.abs(daily.R))


def test_scale_consistency(rng):
    """Thirteen 10-minute bins sum to one 130-minute bin."""
    m = _minutes(rng)
    prof = compute_profiles(m)
    p10 = build_panel(m, 10, prof)
    p130 = build_panel(m, 130, prof)
    p1 = build_panel(m, 1, prof)
    for name in ("V", "R", "C", "S"):
        assert np.allclose(p10.series(name).reshape(-1, 13).sum(axis=1), p130.series(name))
        assert np.allclose(p1.series(name).reshape(-1, 10).sum(axis=1), p10.series(name))
    assert p130.n_bins == 3 * m.n_days and p1.n_bins == SESSION_LEN * m.n_days


@given(st.sampled_from([1, 10, 30, 65, 130, "daily"]))
def test_aggregate_bins_preserves_total(scale):
    grid = np.arange(2 * SESSION_LEN, dtype=float).reshape(2, SESSION_LEN)
    out = aggregate_bins(grid, TimeScale.parse(scale))
    assert out.sum() == grid.sum()
    assert len(out) == 2 * TimeScale.parse(scale).bins_per_day


def test_no_clicks_panel(rng):
    m = _minutes(rng, with_clicks=False)
    prof = compute_profiles(m)
    assert prof.clicks is None
    p = build_panel(m, 30, prof)
    assert not p.C.any() and not p.WS.any()


def test_panel_round_trip(tmp_path, rng, cal3):
    m = _minutes(rng, n_days=3)
    prof = compute_profiles(m)
    panel = build_panel(m, 65, prof)
    written = write_panel(panel, cal3, tmp_path / "X.csv", prof)
    assert [p.name for p in written] == ["X.csv", "X.profiles.json"]
    back = read_panel(written[0], "X", 65)
    for name in ("V", "R", "sigma", "C", "S", "WS"):
        assert np.allclose(back.series(name), panel.series(name), rtol=1e-12, atol=0)
    df = panel.to_frame(cal3)
    assert df["bin_start_iso"].iloc[0] == "2012-06-04T09:30:00-04:00"
    assert df["bin_start_iso"].iloc[1] == "2012-06-04T10:35:00-04:00"
