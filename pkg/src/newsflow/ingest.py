"""Parsers for the raw market, click, news and alias inputs, plus the tag filters."""
from __future__ import annotations

import csv
import datetime as dt
import json
import logging
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .calendar_time import TradingCalendar

logger = logging.getLogger(__name__)

MARKET_HEADER = ["ticker", "timestamp_iso8601", "last_price", "volume"]
CLICKS_HEADER = ["article_id", "timestamp_iso8601", "clicks"]
MAX_TAGS = 4

_OFFSET = re.compile(r"(?:Z|[+-]\d\d:?\d\d)$")


class IngestError(ValueError):
    """Malformed input; message carries file and line."""


class DataError(ValueError):
    """Well-formed input that violates a data invariant (e.g. duplicates)."""


@dataclass(frozen=True)
class MarketBar:
    company: str
    day_index: int
    minute: int
    last_price: float
    volume: float


@dataclass(frozen=True)
class ClickMinute:
    article_id: str
    day_index: int
    minute: int
    clicks: int


@dataclass(frozen=True)
class NewsArticle:
    article_id: str
    publish_instant: dt.datetime
    title: str
    first_paragraph: Optional[str]
    tagged_companies: FrozenSet[str]

    def with_tags(self, tags: Iterable[str]) -> "NewsArticle":
        return replace(self, tagged_companies=frozenset(tags))


@dataclass
class ClickSeries:
    """Click rows attributable to one company, on the trading grid."""

    company: str
    rows: pd.DataFrame  # article_id, day_index, minute, clicks
    unknown_rows: int = 0
    out_of_session_rows: int = 0

    def minute_totals(self, n_days: int) -> np.ndarray:
        grid = np.zeros((n_days, 390))
        if len(self.rows):
            np.add.at(grid, (self.rows["day_index"].to_numpy(), self.rows["minute"].to_numpy()),
                      self.rows["clicks"].to_numpy(dtype=float))
        return grid


def _read_csv_strict(path: Union[str, Path], header: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        first = fh.readline().rstrip("\r\n")
    if [h.strip() for h in first.split(",")] != list(header):
        raise IngestError(f"{path}:1: expected header {','.join(header)!r}, got {first!r}")
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    except pd.errors.ParserError as exc:
        m = re.search(r"line (\d+)", str(exc))
        where = f"{path}:{m.group(1)}" if m else str(path)
        raise IngestError(f"{where}: {exc}") from None
    df.columns = list(header)
    blank = df.isna().all(axis=1).to_numpy()
    return df[~blank].fillna("")


def _stripped(col: pd.Series) -> np.ndarray:
    codes, uniq = pd.factorize(col, sort=False)
    return np.array([u.strip() for u in uniq], dtype=object)[codes]


def _first_bad(mask: np.ndarray) -> Optional[int]:
    idx = np.flatnonzero(mask)
    return int(idx[0]) if len(idx) else None


def _line(df: pd.DataFrame, i: int) -> int:
    # index is the 0-based data row, blank lines included; header is line 1
    return int(df.index[i]) + 2


def _parse_instants(df: pd.DataFrame, col: str, path) -> Tuple[np.ndarray, pd.Series]:
    """(codes, distinct instants): row i holds instant ``distinct[codes[i]]``.

    Timestamps repeat across tickers and articles, so each distinct string
    is parsed once.
    """
    codes, uniq = pd.factorize(df[col], sort=False)
    text = pd.Series(uniq, dtype=object).str.strip()
    bad_u = (~text.str.contains(_OFFSET)).to_numpy()
    if bad_u.any():
        bad = _first_bad(bad_u[codes])
        raise IngestError(f"{path}:{_line(df, bad)}: timestamp {df[col].iloc[bad]!r} lacks a UTC offset")
    ts_u = pd.to_datetime(text, format="ISO8601", utc=True, errors="coerce")
    if ts_u.isna().any():
        bad = _first_bad(ts_u.isna().to_numpy()[codes])
        raise IngestError(f"{path}:{_line(df, bad)}: unparseable timestamp {df[col].iloc[bad]!r}")
    return codes, ts_u.reset_index(drop=True)


def _numeric(df: pd.DataFrame, col: str, path, *, positive=False, integer=False) -> np.ndarray:
    vals = pd.to_numeric(df[col], errors="coerce").to_numpy(dtype=float)
    if np.isnan(vals).any():
        vals = pd.to_numeric(df[col].str.strip(), errors="coerce").to_numpy(dtype=float)
    bad = ~np.isfinite(vals)
    bad |= (vals <= 0) if positive else (vals < 0)
    if integer:
        bad |= np.isfinite(vals) & (vals != np.round(vals))
    i = _first_bad(bad)
    if i is not None:
        kind = "positive" if positive else "non-negative"
        raise IngestError(f"{path}:{_line(df, i)}: {col} must be a {kind} number, got {df[col].iloc[i]!r}")
    return vals


def parse_market(path: Union[str, Path], cal: TradingCalendar) -> pd.DataFrame:
    """Parse the market CSV into in-session bars.

    Returns a frame with the MarketBar fields as columns, sorted by
    (company, day_index, minute). Off-session rows are dropped.
    """
    df = _read_csv_strict(path, MARKET_HEADER)
    tickers = _stripped(df["ticker"])
    if (tickers == "").any():
        i = _first_bad(tickers == "")
        raise IngestError(f"{path}:{_line(df, i)}: empty ticker")
    codes, instants = _parse_instants(df, "timestamp_iso8601", path)
    price = _numeric(df, "last_price", path, positive=True)
    volume = _numeric(df, "volume", path)
    day_u, minute_u, mask_u = cal.locate_instants(instants)
    day, minute, mask = day_u[codes], minute_u[codes], mask_u[codes]
    out = pd.DataFrame({
        "company": tickers[mask],
        "day_index": day[mask].astype(np.int64),
        "minute": minute[mask].astype(np.int64),
        "last_price": price[mask],
        "volume": volume[mask],
    })
    dropped = int((~mask).sum())
    if dropped:
        logger.info("%s: dropped %d off-session rows", path, dropped)
    dup = out.duplicated(["company", "day_index", "minute"], keep=False)
    if dup.any():
        row = out[dup].iloc[0]
        raise DataError(f"{path}: duplicate bar for {row.company} day {row.day_index} minute {row.minute}")
    return out.sort_values(["company", "day_index", "minute"], kind="mergesort").reset_index(drop=True)


def market_bars(frame: pd.DataFrame) -> List[MarketBar]:
    return [MarketBar(*r) for r in frame[["company", "day_index", "minute", "last_price", "volume"]]
            .itertuples(index=False, name=None)]


def parse_clicks(path: Union[str, Path]) -> pd.DataFrame:
    """Parse the clicks CSV, flooring to the minute and aggregating.

    Returns columns article_id, epoch_minute (UTC minutes since 1970), clicks,
    sorted by (article_id, epoch_minute). Off-session rows are kept here;
    the trading-grid mapping happens per company.
    """
    df = _read_csv_strict(path, CLICKS_HEADER)
    codes, instants = _parse_instants(df, "timestamp_iso8601", path)
    clicks = _numeric(df, "clicks", path, integer=True).astype(np.int64)
    epoch_min = instants.dt.tz_convert(None).to_numpy().astype("datetime64[m]").astype(np.int64)[codes]
    out = pd.DataFrame({"article_id": _stripped(df["article_id"]),
                        "epoch_minute": epoch_min, "clicks": clicks})
    out = out.groupby(["article_id", "epoch_minute"], sort=True, as_index=False)["clicks"].sum()
    return out


def _parse_published(value, path, lineno) -> dt.datetime:
    if not isinstance(value, str) or not _OFFSET.search(value.strip()):
        raise IngestError(f"{path}:{lineno}: 'published' must be ISO-8601 with a UTC offset")
    try:
        return dt.datetime.fromisoformat(value.strip().replace("Z", "+00:00"))
    except ValueError:
        raise IngestError(f"{path}:{lineno}: bad 'published' {value!r}") from None


def parse_news(path: Union[str, Path]) -> List[NewsArticle]:
    articles = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(f"{path}:{lineno}: {exc.msg}") from None
            missing = {"article_id", "published", "title", "tickers"} - set(obj)
            if missing:
                raise IngestError(f"{path}:{lineno}: missing keys {sorted(missing)}")
            aid = str(obj["article_id"])
            if aid in seen:
                raise DataError(f"{path}:{lineno}: duplicate article_id {aid!r}")
            seen.add(aid)
            tickers = obj["tickers"]
            if not isinstance(tickers, list) or not all(isinstance(t, str) for t in tickers):
                raise IngestError(f"{path}:{lineno}: 'tickers' must be an array of strings")
            fp = obj.get("first_paragraph")
            articles.append(NewsArticle(
                article_id=aid,
                publish_instant=_parse_published(obj["published"], path, lineno),
                title=str(obj["title"] or ""),
                first_paragraph=None if fp is None else str(fp),
                tagged_companies=frozenset(t.strip() for t in tickers if t.strip()),
            ))
    return articles


def load_aliases(path: Union[str, Path]) -> Dict[str, Tuple[str, ...]]:
    aliases: Dict[str, Tuple[str, ...]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            if not row or not "".join(row).strip() or row[0].startswith("#"):
                continue
            if len(row) != 2:
                raise IngestError(f"{path}:{lineno}: expected 'ticker,alias1|alias2|...'")
            ticker = row[0].strip()
            aliases[ticker] = tuple(a.strip() for a in row[1].split("|") if a.strip())
    return aliases


def _mentioned(ticker: str, aliases: Mapping[str, Sequence[str]], text: str) -> bool:
    hay = text.lower()
    return any(name.lower() in hay for name in (ticker, *aliases.get(ticker, ())))


def filter_tags(article: NewsArticle, aliases: Mapping[str, Sequence[str]] = None,
                max_tags: int = MAX_TAGS) -> Optional[NewsArticle]:
    """Apply the tag filters; None means the article is rejected.

    Articles with more than ``max_tags`` tags are rejected. Multi-tag articles
    keep only companies whose ticker or an alias occurs (case-insensitively)
    in the title or first paragraph; the title alone is searched when the
    first paragraph is missing.
    """
    aliases = aliases or {}
    tags = article.tagged_companies
    if not tags or len(tags) > max_tags:
        return None
    if len(tags) == 1:
        return article
    text = article.title if article.first_paragraph is None else f"{article.title}\n{article.first_paragraph}"
    kept = frozenset(t for t in tags if _mentioned(t, aliases, text))
    if not kept:
        return None
    return article.with_tags(kept)


@dataclass
class FilterSummary:
    n_input: int = 0
    n_kept: int = 0
    n_rejected_too_many_tags: int = 0
    n_rejected_unmentioned: int = 0
    n_tags_dropped: int = 0


def filter_articles(articles: Iterable[NewsArticle], aliases=None, max_tags: int = MAX_TAGS
                    ) -> Tuple[List[NewsArticle], FilterSummary]:
    summary = FilterSummary()
    kept = []
    for a in articles:
        summary.n_input += 1
        out = filter_tags(a, aliases, max_tags)
        if out is None:
            if len(a.tagged_companies) > max_tags:
                summary.n_rejected_too_many_tags += 1
            else:
                summary.n_rejected_unmentioned += 1
            continue
        summary.n_tags_dropped += len(a.tagged_companies) - len(out.tagged_companies)
        kept.append(out)
    summary.n_kept = len(kept)
    return kept, summary


def epoch_minutes_to_grid(epoch_minute: np.ndarray, cal: TradingCalendar):
    """(day_index, minute, mask) for UTC epoch minutes."""
    instants = pd.Series(pd.to_datetime(np.asarray(epoch_minute, dtype=np.int64), unit="m", utc=True))
    return cal.locate_instants(instants)


def attribute_clicks(articles: Sequence[NewsArticle], clicks: pd.DataFrame, cal: TradingCalendar,
                     rejected_ids: Iterable[str] = ()) -> Tuple[Dict[str, ClickSeries], Dict[str, int]]:
    """Split in-session click rows by company for all retained articles.

    Clicks on articles published earlier still count. Rows whose article
    was rejected by the tag filters (``rejected_ids``) are dropped and
    counted as expected; rows referencing any other unknown id are dropped
    with a warning.
    """
    owners: Dict[str, FrozenSet[str]] = {a.article_id: a.tagged_companies for a in articles}
    known_mask = clicks["article_id"].isin(owners).to_numpy()
    rejected_mask = clicks["article_id"].isin(set(rejected_ids)).to_numpy() & ~known_mask
    counts = {"unknown_rows": int((~known_mask & ~rejected_mask).sum()),
              "rejected_article_rows": int(rejected_mask.sum())}
    if counts["unknown_rows"]:
        logger.warning("%d click rows reference unknown articles; dropped", counts["unknown_rows"])
    sub = clicks[known_mask]
    day, minute, mask = epoch_minutes_to_grid(sub["epoch_minute"].to_numpy(), cal)
    counts["out_of_session_rows"] = int((~mask).sum())
    grid = pd.DataFrame({"article_id": sub["article_id"].to_numpy()[mask], "day_index": day[mask],
                         "minute": minute[mask], "clicks": sub["clicks"].to_numpy()[mask]})
    grid = grid.groupby(["article_id", "day_index", "minute"], sort=True, as_index=False)["clicks"].sum()
    by_article = {aid: g for aid, g in grid.groupby("article_id", sort=True)}
    members: Dict[str, List[str]] = {}
    for a in articles:
        for c in a.tagged_companies:
            members.setdefault(c, []).append(a.article_id)
    series = {}
    for company in sorted(members):
        parts = [by_article[aid] for aid in sorted(members[company]) if aid in by_article]
        rows = (pd.concat(parts, ignore_index=True) if parts
                else pd.DataFrame({"article_id": [], "day_index": [], "minute": [], "clicks": []}))
        series[company] = ClickSeries(company, rows.astype({"day_index": np.int64, "minute": np.int64,
                                                            "clicks": np.int64}))
    return series, counts


def company_click_series(articles: Sequence[NewsArticle], clicks: pd.DataFrame, company: str,
                         cal: TradingCalendar) -> ClickSeries:
    """Per-minute click rows (by article) for one company, in trading sessions only."""
    mine = [a for a in articles if company in a.tagged_companies]
    ids = {a.article_id for a in articles}
    unknown = int((~clicks["article_id"].isin(ids)).sum())
    own = clicks[clicks["article_id"].isin({a.article_id for a in mine})]
    series, counts = attribute_clicks(mine, own, cal)
    out = series.get(company, ClickSeries(company, pd.DataFrame(
        {"article_id": pd.Series([], dtype=str), "day_index": pd.Series([], dtype=np.int64),
         "minute": pd.Series([], dtype=np.int64), "clicks": pd.Series([], dtype=np.int64)})))
    out.unknown_rows = unknown
    out.out_of_session_rows = counts["out_of_session_rows"]
    return out


def click_minutes(series: ClickSeries) -> List[ClickMinute]:
    return [ClickMinute(*r) for r in series.rows[["article_id", "day_index", "minute", "clicks"]]
            .itertuples(index=False, name=None)]


__all__ = [
    "ClickMinute", "ClickSeries", "DataError", "FilterSummary", "IngestError", "MarketBar", "NewsArticle",
    "attribute_clicks", "company_click_series", "filter_articles", "filter_tags", "load_aliases",
    "parse_clicks", "parse_market", "parse_news",
]
