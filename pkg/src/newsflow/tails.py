"""Discrete power-law tails for clicks-per-news.

Model: p(x) = x^-(1+alpha) / zeta(1+alpha, x_min) for integers x >= x_min,
where zeta is the Hurwitz zeta function. alpha is fitted by maximum
likelihood and x_min by minimising the Kolmogorov-Smirnov distance.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .special import hurwitz_zeta, hurwitz_zeta_dlog

N_TAIL_MIN = 50
ALPHA_BOUNDS = (0.1, 5.0)
ALPHA_TOL = 1e-6
BOOTSTRAP_REPLICATES = 200
MAX_XMIN_CANDIDATES = 200
KS_LEVEL_COEF = 1.358  # asymptotic 5% Kolmogorov critical value times sqrt(n)
POOR_FRACTION_FLAG = 0.25
_KS_BLOCK = 200_000  # candidate x value cells per Hurwitz call in the KS scan
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

__all__ = [
    "DegenerateFitWarning", "InsufficientTailError", "TailFit", "ccdf_points", "fit_alpha", "fit_tail",
    "hurwitz_zeta", "ks_profile", "log_likelihood", "power_law_ccdf", "power_law_pmf", "sample_power_law",
]


class InsufficientTailError(ValueError):
    pass


class DegenerateFitWarning(RuntimeWarning):
    """The likelihood maximum sits on the alpha search bound."""


@dataclass(frozen=True)
class TailFit:
    alpha: float
    x_min: int
    se_alpha: float
    se_xmin: float
    ks: float
    n_tail: int
    xmin_ci: Tuple[float, float] = (float("nan"), float("nan"))
    at_bound: bool = False
    poor_fraction: float = float("nan")  # share of scanned x_min with KS above its critical value

    @property
    def ks_critical(self) -> float:
        return KS_LEVEL_COEF / math.sqrt(self.n_tail)

    @property
    def poor_fit(self) -> bool:
        """KS distance above the 5% Kolmogorov critical value for the tail size.

        Fitted parameters make this conservative: a flagged fit is a clear
        misfit, an unflagged one is merely not contradicted.
        """
        return self.ks > self.ks_critical

    @property
    def flagged(self) -> bool:
        """Not a credible power law: KS poor across most of the x_min scan, or alpha on a bound."""
        return self.at_bound or bool(self.poor_fraction > POOR_FRACTION_FLAG)

    def row(self, ticker: str) -> dict:
        return {"ticker": ticker, "alpha": self.alpha, "se_alpha": self.se_alpha, "x_min": self.x_min,
                "se_x_min": self.se_xmin, "ks": self.ks, "n_tail": self.n_tail}


def power_law_pmf(x, alpha: float, x_min: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    inside = x >= x_min
    return np.where(inside, np.where(inside, x, 1.0) ** (-1.0 - alpha) / hurwitz_zeta(1.0 + alpha, x_min), 0.0)


def power_law_ccdf(x, alpha: float, x_min: int) -> np.ndarray:
    """P(X >= x) for integer x >= x_min."""
    x = np.maximum(np.asarray(x, dtype=float), x_min)
    return hurwitz_zeta(1.0 + alpha, x) / hurwitz_zeta(1.0 + alpha, x_min)


def log_likelihood(alpha, n: float, sum_log: float, x_min) -> np.ndarray:
    """Log-likelihood from the sufficient statistics (count, sum of log x)."""
    alpha = np.asarray(alpha, dtype=float)
    return -(1.0 + alpha) * sum_log - n * np.log(hurwitz_zeta(1.0 + alpha, x_min))


def _golden_max(fun: Callable[[np.ndarray], np.ndarray], lo: np.ndarray, hi: np.ndarray,
                tol: float) -> np.ndarray:
    # vectorised golden-section search; every lane is unimodal on [lo, hi]
    a, b = lo.astype(float).copy(), hi.astype(float).copy()
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while np.max(b - a) > tol:
        left = fc >= fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _GOLDEN * (b - a)
        new_d = a + _GOLDEN * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        f_new = fun(np.where(left, new_c, new_d))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_next, d_next
    return 0.5 * (a + b)


def score(alpha, n, sum_log, x_min) -> np.ndarray:
    """Derivative of the log-likelihood in alpha; strictly decreasing."""
    _, dlog = hurwitz_zeta_dlog(1.0 + np.asarray(alpha, dtype=float), x_min)
    return -sum_log - n * dlog


def _mle(n: np.ndarray, sum_log: np.ndarray, x_min: np.ndarray, bounds, tol) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised root of the score inside ``bounds``.

    The log-likelihood is concave in alpha (an exponential family in
    log x), so the score is monotone. Secant steps start from the
    continuous-approximation estimate; a step leaving the current sign
    bracket is replaced by bisection. Lanes that fail to settle fall back
    to a golden-section search on the likelihood.
    """
    lo_b, hi_b = float(bounds[0]), float(bounds[1])
    lo = np.full(n.shape, lo_b)
    hi = np.full(n.shape, hi_b)
    with np.errstate(divide="ignore", invalid="ignore"):
        guess = n / (sum_log - n * np.log(x_min - 0.5))
    x_prev = np.clip(np.where(np.isfinite(guess) & (guess > 0), guess, 1.0), lo_b, hi_b)
    x_cur = np.where(x_prev + 0.01 <= hi_b, x_prev + 0.01, x_prev - 0.01)
    f_prev = score(x_prev, n, sum_log, x_min)
    f_cur = score(x_cur, n, sum_log, x_min)
    done = np.zeros(n.shape, dtype=bool)
    for _ in range(100):
        for x, f in ((x_prev, f_prev), (x_cur, f_cur)):
            lo = np.where(f > 0, np.maximum(lo, x), lo)
            hi = np.where(f <= 0, np.minimum(hi, x), hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            prop = x_cur - f_cur * (x_cur - x_prev) / (f_cur - f_prev)
        inside = np.isfinite(prop) & (prop > lo) & (prop < hi)
        prop = np.where(inside, prop, 0.5 * (lo + hi))
        collapsed = ~done & (hi - lo < tol)
        x_cur = np.where(collapsed, 0.5 * (lo + hi), x_cur)
        done = done | collapsed | (np.abs(prop - x_cur) < 0.01 * tol)
        prop = np.where(done, x_cur, prop)
        if done.all():
            break
        x_prev, f_prev = x_cur, f_cur
        x_cur = prop
        f_cur = np.where(done, f_cur, score(x_cur, n, sum_log, x_min))
    alpha = x_cur.copy()
    if not done.all():
        bad = ~done
        alpha[bad] = _golden_max(lambda a: log_likelihood(a, n[bad], sum_log[bad], x_min[bad]),
                                 np.full(int(bad.sum()), lo_b), np.full(int(bad.sum()), hi_b), tol)
    # a root pinned against a bound: report the bound itself
    alpha = np.where(alpha - lo_b < 10 * tol, lo_b, np.where(hi_b - alpha < 10 * tol, hi_b, alpha))
    at_bound = (alpha - lo_b < 10 * tol) | (hi_b - alpha < 10 * tol)
    return alpha, at_bound


def _observed_se(alpha: float, n: float, sum_log: float, x_min: float, h: float = 1e-3) -> float:
    ll = lambda a: float(log_likelihood(a, n, sum_log, x_min))
    lo = max(alpha - h, 1e-3)
    hi = lo + 2 * h
    mid = lo + h
    curv = -(ll(hi) - 2.0 * ll(mid) + ll(lo)) / (h * h)
    return 1.0 / math.sqrt(curv) if curv > 0 else float("inf")


def fit_alpha(samples: Sequence[int], x_min: int, *, n_tail_min: int = N_TAIL_MIN,
              bounds: Tuple[float, float] = ALPHA_BOUNDS, tol: float = ALPHA_TOL) -> Tuple[float, float]:
    """Maximum-likelihood alpha for the samples >= x_min, with its standard error.

    The error is the inverse square root of the observed information, by
    central differences. A maximum on the search bound (e.g. no spread in
    the tail) raises DegenerateFitWarning.
    """
    x = np.asarray(samples, dtype=float)
    tail = x[x >= x_min]
    if len(tail) < n_tail_min:
        raise InsufficientTailError(f"{len(tail)} samples >= x_min={x_min}; need {n_tail_min}")
    n = np.array([float(len(tail))])
    s = np.array([float(np.log(tail).sum())])
    alpha, at_bound = _mle(n, s, np.array([float(x_min)]), bounds, tol)
    a = float(alpha[0])
    if at_bound[0]:
        warnings.warn(f"alpha={a:.6g} at the search bound {bounds}; tail is degenerate", DegenerateFitWarning)
    return a, _observed_se(a, n[0], s[0], float(x_min))


def _candidates(values: np.ndarray, counts_at_or_above: np.ndarray, n_tail_min: int, cap: int) -> np.ndarray:
    ok = np.flatnonzero(counts_at_or_above >= n_tail_min)
    if len(ok) <= cap:
        return ok
    # keep roughly log-spaced candidates, always including the smallest value
    grid = np.geomspace(values[ok[0]], values[ok[-1]], cap)
    picks = np.searchsorted(values[ok], grid)
    return np.unique(ok[np.minimum(picks, len(ok) - 1)])


def _profile(x: np.ndarray, n_tail_min: int, bounds, tol, cap: int):
    """KS distance and MLE alpha at every x_min candidate."""
    x = np.sort(np.asarray(x, dtype=float))
    values, first, counts = np.unique(x, return_index=True, return_counts=True)
    n_total = len(x)
    at_or_above = n_total - first
    idx = _candidates(values, at_or_above, n_tail_min, cap)
    if len(idx) == 0:
        raise InsufficientTailError(f"no x_min candidate leaves {n_tail_min} tail points")
    logs = np.log(x)
    cum_log = np.concatenate([[0.0], np.cumsum(logs)])
    n_tail = at_or_above[idx].astype(float)
    sum_log = cum_log[-1] - cum_log[first[idx]]
    xmins = values[idx]
    alpha, at_bound = _mle(n_tail, sum_log, xmins, bounds, tol)

    # KS distance of every candidate at once, in blocks of candidates
    ks = np.empty(len(idx))
    cum_counts = np.cumsum(counts).astype(float)
    below = np.concatenate([[0.0], cum_counts])[idx]  # sample count under each candidate
    z_min = hurwitz_zeta(1.0 + alpha, xmins)
    step = max(1, _KS_BLOCK // len(values))
    for b in range(0, len(idx), step):
        sl = slice(b, b + step)
        model = 1.0 - hurwitz_zeta(1.0 + alpha[sl, None], values[None, :] + 1.0) / z_min[sl, None]
        emp = (cum_counts[None, :] - below[sl, None]) / n_tail[sl, None]
        dist = np.where(values[None, :] >= xmins[sl, None], np.abs(emp - model), 0.0)
        ks[sl] = dist.max(axis=1)
    return xmins, alpha, ks, n_tail, at_bound, sum_log


def _scan(x: np.ndarray, n_tail_min: int, bounds, tol, cap: int):
    """Return (alpha, x_min, ks, n_tail, at_bound, sum_log) for the KS-optimal candidate."""
    xmins, alpha, ks, n_tail, at_bound, sum_log = _profile(x, n_tail_min, bounds, tol, cap)
    best = int(np.argmin(ks))  # first minimum: smallest x_min on ties
    return float(alpha[best]), int(xmins[best]), float(ks[best]), int(n_tail[best]), bool(at_bound[best]), \
        float(sum_log[best])


def ks_profile(samples: Sequence[int], *, n_tail_min: int = N_TAIL_MIN, bounds: Tuple[float, float] = ALPHA_BOUNDS,
               tol: float = ALPHA_TOL, max_candidates: int = MAX_XMIN_CANDIDATES) -> pd.DataFrame:
    """The x_min scan behind fit_tail: one row per candidate with alpha, ks,
    n_tail and the 5% Kolmogorov critical value."""
    xmins, alpha, ks, n_tail, _, _ = _profile(np.asarray(samples, dtype=float), n_tail_min, bounds, tol,
                                              max_candidates)
    return pd.DataFrame({"x_min": xmins.astype(np.int64), "alpha": alpha, "ks": ks, "n_tail": n_tail.astype(np.int64),
                         "ks_critical": KS_LEVEL_COEF / np.sqrt(n_tail)})


def fit_tail(samples: Sequence[int], *, n_tail_min: int = N_TAIL_MIN, bootstrap: int = BOOTSTRAP_REPLICATES,
             seed: int = 0, bounds: Tuple[float, float] = ALPHA_BOUNDS, tol: float = ALPHA_TOL,
             max_candidates: int = MAX_XMIN_CANDIDATES) -> TailFit:
    """Fit alpha and x_min; x_min minimises the KS distance of the tail.

    Candidates are the distinct sample values leaving at least
    ``n_tail_min`` points at or above them; when there are more than
    ``max_candidates`` a log-spaced subset is scanned. se_xmin (and the
    95% percentile interval ``xmin_ci``) come from ``bootstrap``
    resamples, each seeded from a pre-spawned SeedSequence.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0 or np.any(x < 1) or np.any(x != np.round(x)):
        raise ValueError("samples must be positive integers")
    if len(np.unique(x)) < 2 or len(x) < n_tail_min:
        raise InsufficientTailError("not enough data for a tail fit")
    prof = _profile(x, n_tail_min, bounds, tol, max_candidates)
    best = int(np.argmin(prof[2]))  # first minimum: smallest x_min on ties
    alpha, x_min, ks = float(prof[1][best]), int(prof[0][best]), float(prof[2][best])
    n_tail, at_bound, sum_log = int(prof[3][best]), bool(prof[4][best]), float(prof[5][best])
    poor = float(np.mean(prof[2] > KS_LEVEL_COEF / np.sqrt(prof[3])))
    if at_bound:
        warnings.warn(f"alpha={alpha:.6g} at the search bound {bounds}", DegenerateFitWarning)
    se_alpha = _observed_se(alpha, float(n_tail), sum_log, float(x_min))

    se_xmin, ci = float("nan"), (float("nan"), float("nan"))
    if bootstrap > 0:
        children = np.random.SeedSequence(seed).spawn(bootstrap)
        xmins = []
        for child in children:
            rng = np.random.default_rng(child)
            resample = x[rng.integers(0, len(x), len(x))]
            try:
                xmins.append(_scan(resample, n_tail_min, bounds, tol, max_candidates)[1])
            except InsufficientTailError:
                continue
        if len(xmins) > 1:
            arr = np.asarray(xmins, dtype=float)
            se_xmin = float(np.std(arr, ddof=1))
            ci = (float(np.percentile(arr, 2.5)), float(np.percentile(arr, 97.5)))
    return TailFit(alpha, x_min, se_alpha, se_xmin, ks, n_tail, ci, at_bound, poor)


def ccdf_points(samples: Sequence[float], rescale_max: Optional[float] = None) -> np.ndarray:
    """Empirical P(X >= x) at each distinct value, as an (k, 2) array.

    With ``rescale_max`` both coordinates are multiplied by
    rescale_max / max(x), which moves the curve without changing its
    log-log slope.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValueError("ccdf of an empty sample")
    values, first = np.unique(x, return_index=True)
    prob = (len(x) - first) / len(x)
    pts = np.column_stack([values, prob])
    if rescale_max is not None:
        pts = pts * (float(rescale_max) / values[-1])
    return pts


def sample_power_law(n: int, alpha: float, x_min: int, rng: np.random.Generator,
                     x_cap: float = 1e15) -> np.ndarray:
    """Exact draws from the discrete model by inverting its CCDF."""
    if alpha <= 0 or x_min < 1:
        raise ValueError("need alpha > 0 and x_min >= 1")
    u = rng.random(n)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    z0 = hurwitz_zeta(1.0 + alpha, float(x_min))
    ccdf = lambda v: hurwitz_zeta(1.0 + alpha, v) / z0
    guess = np.floor((x_min - 0.5) * u ** (-1.0 / alpha) + 0.5)
    lo = np.full(n, float(x_min))  # ccdf(lo) >= u
    hi = np.clip(np.maximum(2.0 * guess, x_min + 1.0), None, x_cap)
    need = ccdf(hi) >= u
    while need.any():
        hi[need] = np.minimum(hi[need] * 2.0, x_cap)
        still = ccdf(hi[need]) >= u[need]
        if np.all(hi[need] >= x_cap):
            break
        need[need] = still
    # integer bisection keeping ccdf(lo) >= u > ccdf(hi); the draw is lo
    while True:
        gap = hi - lo > 1
        if not gap.any():
            break
        mid = np.floor(0.5 * (lo + hi))
        ok = ccdf(np.where(gap, mid, lo)) >= u
        lo = np.where(gap & ok, mid, lo)
        hi = np.where(gap & ~ok, mid, hi)
    return lo.astype(np.int64)


def fit_table(fits: dict) -> pd.DataFrame:
    """ticker,alpha,se_alpha,x_min,se_x_min,ks,n_tail rows, sorted by ticker."""
    cols = ["ticker", "alpha", "se_alpha", "x_min", "se_x_min", "ks", "n_tail"]
    return pd.DataFrame([fits[t].row(t) for t in sorted(fits)], columns=cols)
