"""Glue from input files to per-company panels."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import pandas as pd

from .calendar_time import TimeScale, TradingCalendar
from .ingest import (ClickSeries, FilterSummary, NewsArticle, attribute_clicks, filter_articles, load_aliases,
                     parse_clicks, parse_market, parse_news)
from .sentiment import Lexicon, builtin_lexicon, score_title
from .series import CompanyMinutes, CompanyPanel, Profiles, build_all_minutes, build_panel, compute_profiles

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InputPaths:
    market: Path
    clicks: Path
    news: Path
    calendar: Path
    aliases: Optional[Path] = None

    @classmethod
    def from_dir(cls, root: Union[str, Path]) -> "InputPaths":
        """Standard file names inside one directory (as written by the generator)."""
        root = Path(root)
        aliases = root / "aliases.csv"
        return cls(root / "market.csv", root / "clicks.csv", root / "news.jsonl", root / "trading_days.txt",
                   aliases if aliases.exists() else None)


@dataclass
class Dataset:
    calendar: TradingCalendar
    market: pd.DataFrame
    articles: List[NewsArticle]
    signs: Dict[str, int]
    clicks: Dict[str, ClickSeries]
    minutes: Dict[str, CompanyMinutes]
    filter_summary: FilterSummary
    counts: Dict[str, int] = field(default_factory=dict)

    @property
    def companies(self) -> List[str]:
        return sorted(self.minutes)

    def summary(self) -> dict:
        return {"n_days": self.calendar.n_days, "n_companies": len(self.minutes),
                "n_market_rows": int(len(self.market)), "n_articles": len(self.articles),
                "filter": asdict(self.filter_summary), **self.counts}


def load_dataset(paths: InputPaths, lexicon: Optional[Lexicon] = None) -> Dataset:
    cal = TradingCalendar.load(paths.calendar)
    market = parse_market(paths.market, cal)
    raw_articles = parse_news(paths.news)
    aliases = load_aliases(paths.aliases) if paths.aliases else None
    articles, fsum = filter_articles(raw_articles, aliases)
    lex = lexicon or builtin_lexicon("merged")
    signs = {a.article_id: score_title(a.title, lex).sign for a in articles}
    clicks = parse_clicks(paths.clicks)
    kept = {a.article_id for a in articles}
    rejected = [a.article_id for a in raw_articles if a.article_id not in kept]
    series, counts = attribute_clicks(articles, clicks, cal, rejected)
    minutes = build_all_minutes(market, series, articles, signs, cal)
    logger.info("loaded %d companies, %d articles kept of %d", len(minutes), len(articles), len(raw_articles))
    return Dataset(cal, market, articles, signs, series, minutes, fsum, counts)


def build_panels(data: Dataset, scale: Union[TimeScale, str, int],
                 profiles: Optional[Dict[str, Profiles]] = None) -> Dict[str, CompanyPanel]:
    scale = TimeScale.parse(scale)
    if profiles is None and not scale.is_daily:
        profiles = {c: compute_profiles(m) for c, m in data.minutes.items()}
    return {c: build_panel(m, scale, None if scale.is_daily else profiles[c]) for c, m in data.minutes.items()}
