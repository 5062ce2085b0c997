import datetime as dt

import numpy as np
import pandas as pd
import pytest

from newsflow.attention import (AttentionCurve, FitFailureError, InsufficientDataError, NoClicksError,
                                WEEK_MINUTES, article_cum_curve, cohort_fits, curves_frame, curves_from_clicks,
                                decile_curves, fit_tau, fits_frame, publish_minutes)
from newsflow.ingest import NewsArticle


def test_cum_curve_examples():
    f = article_cum_curve([0, 10, 400], [1, 1, 1])
    assert f[0] == pytest.approx(1 / 3) and f[9] == pytest.approx(1 / 3)
    assert f[10] == pytest.approx(2 / 3) and f[300] == pytest.approx(2 / 3)
    # clicks before publication and after the first week are ignored
    g = article_cum_curve([-5, 0, WEEK_MINUTES], [7, 2, 9], horizon_minutes=5)
    assert np.allclose(g, 1.0)
    with pytest.raises(NoClicksError):
        article_cum_curve([-1, WEEK_MINUTES + 3], [1, 1])


def test_uniform_ramp():
    f = article_cum_curve(np.arange(600), np.ones(600))
    assert np.allclose(f, (np.arange(301) + 1) / 600)
    assert np.all(np.diff(f) >= 0)


def _exp_curve(tau, amp=1.0, horizon=300):
    m = np.arange(horizon + 1)
    return AttentionCurve(1, m, amp * (1 - np.exp(-m / tau)), 1)


@pytest.mark.parametrize("tau", [30, 60, 90, 120])
def test_noiseless_fit_recovers_tau(tau):
    fit = fit_tau(_exp_curve(tau, 0.8))
    assert fit.tau == pytest.approx(tau, rel=1e-4)
    assert fit.amplitude == pytest.approx(0.8, rel=1e-4)


def test_noisy_fit_within_standard_errors():
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(40):
        c = _exp_curve(70.0, 0.9)
        noisy = AttentionCurve(1, c.minutes, c.mean_cum_fraction + rng.normal(0, 0.01, len(c.minutes)), 1)
        fit = fit_tau(noisy)
        hits += abs(fit.tau - 70.0) < 3 * fit.se_tau
    assert hits >= 37


def test_fit_failures():
    m = np.arange(301)
    with pytest.raises(FitFailureError):
        fit_tau(AttentionCurve(1, m, np.zeros(301), 5))
    with pytest.raises(FitFailureError):
        fit_tau(AttentionCurve(1, m[:5], np.ones(5), 5))
    fits, errors = cohort_fits([AttentionCurve(1, m, np.zeros(301), 5), _exp_curve(50)])
    assert list(errors) == [1] and len(fits) == 1


def test_deciles_and_curves_from_clicks():
    publish = {f"a{i:02d}": 1000 * i for i in range(25)}
    rows = []
    for i in range(25):
        for k in range(i + 1):  # article i gets i+1 clicks at offsets 0..i
            rows.append((f"a{i:02d}", 1000 * i + k, 1))
    rows.append(("zz", 5, 100))  # not an article of the cohort
    publish["silent"] = 0
    clicks = pd.DataFrame(rows, columns=["article_id", "epoch_minute", "clicks"])
    data = curves_from_clicks(publish, clicks, horizon_minutes=30)
    assert data.n_excluded == 1 and len(data.article_ids) == 25
    assert data.curves.shape == (25, 31) and np.allclose(data.curves[:, -1], 1.0)
    deciles = decile_curves(data)
    assert [d.n_articles for d in deciles] == [3, 3, 3, 3, 3, 2, 2, 2, 2, 2]
    # low-click deciles reach 1 sooner
    first_full = [int(np.argmax(d.mean_cum_fraction >= 1 - 1e-12)) for d in deciles]
    assert first_full == sorted(first_full)
    frame = curves_frame(deciles)
    assert list(frame.columns) == ["decile", "minute", "mean_cum_fraction", "n_articles"]
    assert len(frame) == 10 * 31
    with pytest.raises(InsufficientDataError):
        decile_curves(curves_from_clicks({"a00": 0}, clicks))
    assert list(fits_frame([fit_tau(_exp_curve(40))]).columns) == ["decile", "tau", "se_tau"]


def test_publish_minutes_floor():
    when = dt.datetime(2012, 6, 4, 9, 35, 59, tzinfo=dt.timezone(dt.timedelta(hours=-4)))
    art = NewsArticle("x", when, "t", None, frozenset({"A"}))
    expected = int(dt.datetime(2012, 6, 4, 13, 35, tzinfo=dt.timezone.utc).timestamp() // 60)
    assert publish_minutes([art]) == {"x": expected}
