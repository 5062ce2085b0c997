"""Post-publication attention: cumulative click curves, decile averages and
exponential time-scale fits. Minutes here are wall-clock minutes."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

WEEK_MINUTES = 7 * 1440
DEFAULT_HORIZON = 300
N_DECILES = 10


class NoClicksError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class FitFailureError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttentionCurve:
    decile: int
    minutes: np.ndarray
    mean_cum_fraction: np.ndarray
    n_articles: int


@dataclass(frozen=True)
class AttentionFit:
    decile: int
    tau: float
    se_tau: float
    amplitude: float = 1.0
    iterations: int = 0


def article_cum_curve(offsets, clicks, horizon_minutes: int = DEFAULT_HORIZON,
                      window: int = WEEK_MINUTES) -> np.ndarray:
    """F(m) for m = 0..horizon: clicks in [publish, publish+m] over clicks in the first week.

    ``offsets`` are whole minutes since publication (clicks at negative
    offsets are ignored).
    """
    off = np.asarray(offsets, dtype=np.int64)
    c = np.asarray(clicks, dtype=float)
    in_week = (off >= 0) & (off < window)
    total = c[in_week].sum()
    if total <= 0:
        raise NoClicksError("no clicks in the first week after publication")
    hist = np.zeros(horizon_minutes + 1)
    early = in_week & (off <= horizon_minutes)
    np.add.at(hist, off[early], c[early])
    return np.cumsum(hist) / total


@dataclass
class ArticleCurves:
    article_ids: List[str]
    totals: np.ndarray          # clicks in the first week
    curves: np.ndarray          # (n_articles, horizon + 1)
    n_excluded: int = 0


def curves_from_clicks(publish_minute: Mapping[str, int], clicks: pd.DataFrame,
                       horizon_minutes: int = DEFAULT_HORIZON, window: int = WEEK_MINUTES) -> ArticleCurves:
    """Per-article curves from a clicks frame (article_id, epoch_minute, clicks).

    Articles without clicks in their first week are excluded and counted.
    """
    groups = {aid: g for aid, g in clicks[clicks["article_id"].isin(publish_minute)].groupby("article_id")}
    ids, totals, curves = [], [], []
    excluded = 0
    for aid in sorted(publish_minute):
        g = groups.get(aid)
        if g is None:
            excluded += 1
            continue
        off = g["epoch_minute"].to_numpy(dtype=np.int64) - int(publish_minute[aid])
        c = g["clicks"].to_numpy(dtype=float)
        try:
            curve = article_cum_curve(off, c, horizon_minutes, window)
        except NoClicksError:
            excluded += 1
            continue
        ids.append(aid)
        totals.append(c[(off >= 0) & (off < window)].sum())
        curves.append(curve)
    arr = np.vstack(curves) if curves else np.zeros((0, horizon_minutes + 1))
    return ArticleCurves(ids, np.asarray(totals, dtype=float), arr, excluded)


def decile_curves(data: ArticleCurves, n_groups: int = N_DECILES) -> List[AttentionCurve]:
    """Equal-count groups by one-week total clicks (ties in article_id order), pointwise means."""
    n = len(data.article_ids)
    if n < n_groups:
        raise InsufficientDataError(f"{n} articles; need at least {n_groups}")
    order = sorted(range(n), key=lambda i: (data.totals[i], data.article_ids[i]))
    minutes = np.arange(data.curves.shape[1])
    out = []
    for d, idx in enumerate(np.array_split(np.asarray(order), n_groups), start=1):
        out.append(AttentionCurve(d, minutes, data.curves[idx].mean(axis=0), len(idx)))
    return out


def _model(m, amp, tau):
    return amp * (1.0 - np.exp(-m / tau))


def fit_tau(curve: AttentionCurve, max_iter: int = 200, rtol: float = 1e-6) -> AttentionFit:
    """Least-squares fit of F(m) = A (1 - exp(-m / tau)), 0 < A <= 1, tau > 0.

    A log-spaced tau grid (with A solved in closed form) seeds a projected
    Gauss-Newton iteration on (A, log tau); the standard error of tau comes
    from s^2 (J^T J)^-1 at the optimum.
    """
    m = np.asarray(curve.minutes, dtype=float)
    f = np.asarray(curve.mean_cum_fraction, dtype=float)
    if len(m) < 10:
        raise FitFailureError("need at least 10 curve points")
    if not np.all(np.isfinite(f)) or f.max() <= 0:
        raise FitFailureError(f"decile {curve.decile}: curve is flat at zero")

    best = None
    for tau in np.geomspace(0.5, 1e5, 400):
        g = 1.0 - np.exp(-m / tau)
        amp = min(max(float(g @ f) / float(g @ g), 1e-12), 1.0)
        sse = float(np.sum((f - amp * g) ** 2))
        if best is None or sse < best[0]:
            best = (sse, amp, tau)
    _, amp, tau = best

    theta = np.array([amp, math.log(tau)])
    sse = float(np.sum((f - _model(m, amp, tau)) ** 2))
    for it in range(1, max_iter + 1):
        amp, tau = theta[0], math.exp(theta[1])
        e = np.exp(-m / tau)
        resid = f - amp * (1.0 - e)
        jac = np.column_stack([1.0 - e, -amp * e * m / tau])  # d model / d(A, log tau)
        step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
        scale = 1.0
        while True:
            trial = theta + scale * step
            trial[0] = min(max(trial[0], 1e-12), 1.0)
            t_sse = float(np.sum((f - _model(m, trial[0], math.exp(trial[1]))) ** 2))
            if t_sse <= sse or scale < 1e-10:
                break
            scale *= 0.5
        delta = np.abs(trial - theta) / np.maximum(np.abs(theta), 1e-12)
        theta, sse = trial, min(t_sse, sse)
        if np.all(delta < rtol):
            break
    else:
        raise FitFailureError(f"decile {curve.decile}: no convergence after {max_iter} iterations "
                              f"(A={theta[0]:.4g}, tau={math.exp(theta[1]):.4g}, sse={sse:.3g})")
    amp, tau = float(theta[0]), float(math.exp(theta[1]))
    e = np.exp(-m / tau)
    jac = np.column_stack([1.0 - e, -amp * e * m / tau ** 2])  # w.r.t. (A, tau)
    dof = max(len(m) - 2, 1)
    s2 = sse / dof
    try:
        cov = s2 * np.linalg.inv(jac.T @ jac)
        se_tau = float(math.sqrt(max(cov[1, 1], 0.0)))
    except np.linalg.LinAlgError:
        se_tau = float("inf")
    return AttentionFit(curve.decile, tau, se_tau, amp, it)


def curves_frame(curves: Sequence[AttentionCurve]) -> pd.DataFrame:
    rows = [(c.decile, int(mm), float(v), c.n_articles)
            for c in curves for mm, v in zip(c.minutes, c.mean_cum_fraction)]
    return pd.DataFrame(rows, columns=["decile", "minute", "mean_cum_fraction", "n_articles"])


def fits_frame(fits: Sequence[AttentionFit]) -> pd.DataFrame:
    return pd.DataFrame([(f.decile, f.tau, f.se_tau) for f in fits], columns=["decile", "tau", "se_tau"])


def publish_minutes(articles) -> Dict[str, int]:
    """Epoch minute (UTC, floored) of each article's publication."""
    out = {}
    for a in articles:
        ts = a.publish_instant.timestamp()
        out[a.article_id] = int(math.floor(ts / 60.0))
    return out


def cohort_fits(curves: Sequence[AttentionCurve]) -> Tuple[List[AttentionFit], Dict[int, str]]:
    """Fit every decile; failures are returned per decile instead of raised."""
    fits, errors = [], {}
    for c in curves:
        try:
            fits.append(fit_tau(c))
        except FitFailureError as exc:
            errors[c.decile] = str(exc)
    return fits, errors
