"""De-seasonalised per-company series V, R, sigma, C, S, WS at any time scale.

All work happens on (n_days, 390) minute grids first; bins at coarser scales
are sums of minute values.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .calendar_time import SESSION_LEN, TimeScale, TradingCalendar, aggregate_bins
from .ingest import ClickSeries, NewsArticle

logger = logging.getLogger(__name__)

SERIES_NAMES = ("V", "R", "sigma", "C", "S", "WS")


class DegenerateInputError(ValueError):
    """Raised when a normaliser is zero on every day (nothing to average)."""


@dataclass(frozen=True)
class SeasonalProfile:
    kind: str  # volume | returns | clicks
    zeta: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.zeta, dtype=float)
        if z.shape != (SESSION_LEN,):
            raise ValueError(f"profile must have {SESSION_LEN} entries")
        if not np.all(np.isfinite(z)) or np.any(z < 0) or not np.any(z > 0):
            raise ValueError("profile must be finite, non-negative and not all zero")
        z.setflags(write=False)
        object.__setattr__(self, "zeta", z)

    @classmethod
    def identity(cls, kind: str) -> "SeasonalProfile":
        return cls(kind, np.ones(SESSION_LEN))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "zeta": [float(x) for x in self.zeta]}


def _share_profile(raw: np.ndarray, kind: str) -> SeasonalProfile:
    raw = np.asarray(raw, dtype=float)
    totals = raw.sum(axis=1)
    good = totals > 0
    if not good.any():
        raise DegenerateInputError(f"every day has zero total {kind}")
    shares = raw[good] / totals[good, None]
    return SeasonalProfile(kind, shares.mean(axis=0))


def seasonal_profile_volume(raw: np.ndarray) -> SeasonalProfile:
    """Average over days of each minute's share of the daily volume.

    Days with zero total volume are left out of the average.
    """
    return _share_profile(raw, "volume")


def seasonal_profile_clicks(raw: np.ndarray) -> SeasonalProfile:
    return _share_profile(raw, "clicks")


def seasonal_profile_returns(r: np.ndarray) -> SeasonalProfile:
    """Average over days of |r_{d,t}| divided by that day's mean |r|.

    Flat days (mean |r| of zero) are left out.
    """
    a = np.abs(np.asarray(r, dtype=float))
    xi = a.mean(axis=1)
    good = xi > 0
    if not good.any():
        raise DegenerateInputError("every day has zero absolute return")
    return SeasonalProfile("returns", (a[good] / xi[good, None]).mean(axis=0))


def deseasonalize(raw: np.ndarray, profile: SeasonalProfile) -> np.ndarray:
    """Divide each minute by its profile factor; minutes with a zero factor map to 0."""
    raw = np.asarray(raw, dtype=float)
    z = profile.zeta
    out = np.zeros_like(raw)
    pos = z > 0
    out[:, pos] = raw[:, pos] / z[pos]
    return out


deseasonalize_volume = deseasonalize


def minute_returns(prices: np.ndarray) -> np.ndarray:
    """Base-10 log returns on a (n_days, 390) grid of last prices (NaN = no trade).

    Prices are carried forward across gaps and across the overnight break, so
    each day's first minute is measured against the previous close. Minutes
    before the first observed price, and the very first minute, get 0.
    """
    p = np.asarray(prices, dtype=float)
    flat = p.reshape(-1)
    seen = np.isfinite(flat)
    if not seen.any():
        raise DegenerateInputError("no price was ever observed")
    idx = np.where(seen, np.arange(flat.size), -1)
    np.maximum.accumulate(idx, out=idx)
    filled = np.where(idx >= 0, flat[np.maximum(idx, 0)], np.nan)
    r = np.zeros_like(flat)
    with np.errstate(invalid="ignore", divide="ignore"):
        r[1:] = np.log10(filled[1:] / filled[:-1])
    r[~np.isfinite(r)] = 0.0
    return r.reshape(p.shape)


def _sign(x: np.ndarray) -> np.ndarray:
    return np.sign(x).astype(float)


@dataclass(frozen=True)
class CompanyMinutes:
    """Raw minute grids for one company; the input to build_panel."""

    company: str
    volume: np.ndarray       # raw traded volume
    prices: np.ndarray       # last price in the minute, NaN if none
    clicks: np.ndarray       # raw clicks summed over the company's articles
    sentiment: np.ndarray    # sum of signs of articles published in the minute
    weighted: np.ndarray     # sum over articles of clicks * sign (WS-bar)

    @property
    def n_days(self) -> int:
        return self.volume.shape[0]


@dataclass(frozen=True)
class Profiles:
    volume: SeasonalProfile
    returns: SeasonalProfile
    clicks: Optional[SeasonalProfile]

    def to_dict(self) -> dict:
        return {k: (None if v is None else v.to_dict())
                for k, v in (("volume", self.volume), ("returns", self.returns), ("clicks", self.clicks))}


@dataclass(frozen=True)
class CompanyPanel:
    company: str
    scale: TimeScale
    V: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    C: np.ndarray
    S: np.ndarray
    WS: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.V)

    def series(self, name: str) -> np.ndarray:
        return getattr(self, name)

    def to_frame(self, cal: Optional[TradingCalendar] = None) -> pd.DataFrame:
        data = {name: getattr(self, name) for name in SERIES_NAMES}
        if cal is not None:
            return pd.DataFrame({"bin_start_iso": cal.bin_starts_iso(self.scale), **data})
        return pd.DataFrame(data)


def company_minutes(company: str, market: pd.DataFrame, clicks: Optional[ClickSeries],
                    articles: Sequence[NewsArticle], signs: Mapping[str, int],
                    cal: TradingCalendar) -> CompanyMinutes:
    """Lay one company's raw inputs onto the (n_days, 390) grid.

    ``market`` holds that company's bars (parse_market columns); ``signs``
    maps article_id to its headline sign.
    """
    shape = (cal.n_days, SESSION_LEN)
    volume = np.zeros(shape)
    prices = np.full(shape, np.nan)
    if len(market):
        d = market["day_index"].to_numpy()
        t = market["minute"].to_numpy()
        volume[d, t] = market["volume"].to_numpy(dtype=float)
        prices[d, t] = market["last_price"].to_numpy(dtype=float)

    clk = np.zeros(shape)
    weighted = np.zeros(shape)
    if clicks is not None and len(clicks.rows):
        rows = clicks.rows
        d = rows["day_index"].to_numpy()
        t = rows["minute"].to_numpy()
        c = rows["clicks"].to_numpy(dtype=float)
        s = rows["article_id"].map(lambda a: signs.get(a, 0)).to_numpy(dtype=float)
        np.add.at(clk, (d, t), c)
        np.add.at(weighted, (d, t), c * s)

    sentiment = np.zeros(shape)
    for a in articles:
        if company not in a.tagged_companies:
            continue
        loc = cal.minute_index(a.publish_instant)
        if loc is not None:
            sentiment[loc] += signs.get(a.article_id, 0)
    return CompanyMinutes(company, volume, prices, clk, sentiment, weighted)


def compute_profiles(minutes: CompanyMinutes) -> Profiles:
    r = minute_returns(minutes.prices)
    try:
        click_profile = seasonal_profile_clicks(minutes.clicks)
    except DegenerateInputError:
        click_profile = None  # no clicks at all: C is identically zero
    try:
        return_profile = seasonal_profile_returns(r)
    except DegenerateInputError:
        logger.warning("%s: price never moves; using a flat returns profile", minutes.company)
        return_profile = SeasonalProfile.identity("returns")
    return Profiles(seasonal_profile_volume(minutes.volume), return_profile, click_profile)


def build_panel(minutes: CompanyMinutes, scale: Union[TimeScale, str, int],
                profiles: Optional[Profiles] = None) -> CompanyPanel:
    """Aggregate a company's minute grids into the six series at ``scale``.

    Intraday scales sum de-seasonalised minute values; the daily scale sums
    raw values (no intraday pattern to remove), so daily R is the
    close-to-close log10 return. WS = sign(sum of clicks*sign) * C per bin.
    """
    scale = TimeScale.parse(scale)
    r = minute_returns(minutes.prices)
    if scale.is_daily:
        v, rr, c = minutes.volume, r, minutes.clicks
    else:
        profiles = profiles or compute_profiles(minutes)
        v = deseasonalize(minutes.volume, profiles.volume)
        rr = deseasonalize(r, profiles.returns)
        c = minutes.clicks if profiles.clicks is None else deseasonalize(minutes.clicks, profiles.clicks)
    V = aggregate_bins(v, scale)
    R = aggregate_bins(rr, scale)
    C = aggregate_bins(c, scale)
    S = aggregate_bins(minutes.sentiment, scale)
    WS = _sign(aggregate_bins(minutes.weighted, scale)) * C
    return CompanyPanel(minutes.company, scale, V, R, np.abs(R), C, S, WS)


def write_panel(panel: CompanyPanel, cal: TradingCalendar, path: Union[str, Path],
                profiles: Optional[Profiles] = None) -> list:
    """Write the panel CSV (and a profile JSON sidecar); returns written paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panel.to_frame(cal).to_csv(path, index=False, lineterminator="\n")
    written = [path]
    if profiles is not None:
        side = path.with_suffix(".profiles.json")
        side.write_text(json.dumps(profiles.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
        written.append(side)
    return written


def read_panel(path: Union[str, Path], company: str, scale: Union[TimeScale, str, int]) -> CompanyPanel:
    df = pd.read_csv(path)
    return CompanyPanel(company, TimeScale.parse(scale),
                        *(df[name].to_numpy(dtype=float) for name in SERIES_NAMES))


def build_all_minutes(market: pd.DataFrame, click_series: Mapping[str, ClickSeries],
                      articles: Sequence[NewsArticle], signs: Mapping[str, int],
                      cal: TradingCalendar) -> Dict[str, CompanyMinutes]:
    """CompanyMinutes for every ticker present in the market data."""
    out = {}
    by_company = {c: g for c, g in market.groupby("company", sort=True)}
    per_company_articles: Dict[str, list] = {}
    for a in articles:
        for c in a.tagged_companies:
            per_company_articles.setdefault(c, []).append(a)
    for company in sorted(by_company):
        out[company] = company_minutes(company, by_company[company], click_series.get(company),
                                       per_company_articles.get(company, []), signs, cal)
    return out
