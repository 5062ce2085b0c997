"""Synthetic market / news / click data with planted ground truth.

The generator writes exactly the ingest input formats plus
``ground_truth.json``. Every company is simulated from its own spawned
seed, so output does not depend on generation order.

Model, per company:

* articles arrive Poisson(articles_per_day) per trading day; total clicks
  per article follow the discrete power law of :mod:`newsflow.tails`;
* each article's clicks spread over wall-clock minutes with density
  proportional to exp(-m / tau_i) times the intraday pattern (a flat
  ``off_session_weight`` outside trading hours); tau_i grows with the
  article's total clicks;
* minute log10 returns are Gaussian with seasonal scale; causal companies
  also receive ``causal_strength`` times the normalised minute
  weighted-sentiment signal ``causal_lag * causal_lag_unit`` minutes
  earlier;
* volumes follow the intraday pattern with lognormal noise, independent
  of everything else.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
import math
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .calendar_time import EXCHANGE_TZ, SESSION_LEN, SESSION_OPEN, TimeScale, TradingCalendar, \
    aggregate_bins, weekday_calendar
from .sentiment import Lexicon, builtin_lexicon, score_title
from .tails import sample_power_law

_NEUTRAL_WORDS = ("announces", "update", "schedule", "reports", "quarterly", "meeting", "filing",
                  "comments", "statement", "review", "plans", "talks", "outlook", "session", "note")
_PARAGRAPH_WORDS = ("said", "on", "the", "company", "in", "a", "filing", "today", "according", "to",
                    "people", "familiar", "with", "matter", "analysts", "expected")


class SynthConfigError(ValueError):
    pass


def u_shaped_pattern(depth: float = 2.0) -> np.ndarray:
    """Intraday U shape: 1 + depth * ((t - mid) / mid)^2 over the 390 session minutes."""
    t = np.arange(SESSION_LEN)
    mid = (SESSION_LEN - 1) / 2.0
    return 1.0 + depth * ((t - mid) / mid) ** 2


@dataclass
class SynthConfig:
    n_companies: int = 100
    n_days: int = 60
    seed: int = 0
    start_date: str = "2012-06-04"
    click_alpha: float = 1.15
    click_alpha_sd: float = 0.0
    click_xmin: int = 10
    articles_per_day: float = 3.0
    intraday_pattern: Optional[List[float]] = None
    causal_fraction: float = 0.0
    causal_strength: float = 0.0
    causal_lag: int = 1
    causal_lag_unit: int = 1  # minutes per lag step; set to a bin width to plant a bin-level lag
    noise_scales: Dict[str, float] = field(default_factory=lambda: {"returns": 2e-4, "volume": 0.5})
    base_volume: Tuple[float, float] = (500.0, 5000.0)
    tau_base: float = 40.0
    tau_exponent: float = 0.15
    tau_bounds: Tuple[float, float] = (15.0, 300.0)
    sentiment_probs: Tuple[float, float, float] = (0.4, 0.4, 0.2)  # +, -, 0
    off_session_publish: float = 0.15
    off_session_weight: float = 0.3
    casual_tag_fraction: float = 0.1
    crowded_fraction: float = 0.03
    missing_paragraph_fraction: float = 0.1
    gap_probability: float = 0.01

    def __post_init__(self):
        self.validate()

    @property
    def pattern(self) -> np.ndarray:
        return u_shaped_pattern() if self.intraday_pattern is None else np.asarray(self.intraday_pattern, float)

    def validate(self) -> None:
        if self.n_companies < 1 or self.n_days < 2:
            raise SynthConfigError("need at least one company and two days")
        if not 0.0 <= self.causal_fraction <= 1.0:
            raise SynthConfigError("causal_fraction must lie in [0, 1]")
        if self.causal_lag < 1 or self.causal_lag_unit < 1:
            raise SynthConfigError("causal_lag and causal_lag_unit must be >= 1")
        if self.click_alpha <= 0 or self.click_xmin < 1:
            raise SynthConfigError("click_alpha must be > 0 and click_xmin >= 1")
        p = self.pattern
        if p.shape != (SESSION_LEN,) or not np.all(p > 0) or not np.all(np.isfinite(p)):
            raise SynthConfigError("intraday_pattern must hold 390 positive values")
        probs = np.asarray(self.sentiment_probs, float)
        if probs.shape != (3,) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0):
            raise SynthConfigError("sentiment_probs must be three probabilities summing to 1")
        for name in ("off_session_publish", "casual_tag_fraction", "crowded_fraction",
                     "missing_paragraph_fraction", "gap_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise SynthConfigError(f"{name} must lie in [0, 1]")
        if not self.off_session_weight > 0:
            raise SynthConfigError("off_session_weight must be positive")
        if any(v <= 0 for v in self.noise_scales.values()):
            raise SynthConfigError("noise scales must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["base_volume"] = list(self.base_volume)
        d["tau_bounds"] = list(self.tau_bounds)
        d["sentiment_probs"] = list(self.sentiment_probs)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SynthConfigError(f"unknown synth settings {sorted(unknown)}")
        kw = dict(d)
        for key in ("base_volume", "tau_bounds", "sentiment_probs"):
            if key in kw:
                kw[key] = tuple(kw[key])
        return cls(**kw)


# --------------------------------------------------------------------------- time grid

@dataclass(frozen=True)
class _Clock:
    """Wall-clock minute axis covering the sample plus one trailing week."""

    cal: TradingCalendar
    base: int               # epoch minute of local midnight before the first trading day
    weight: np.ndarray      # relative click intensity per wall-clock minute
    session_epoch: np.ndarray  # (n_days, 390) epoch minute of each session minute
    grid_of: np.ndarray     # flat session index per wall-clock minute, -1 off-session

    @property
    def n_minutes(self) -> int:
        return len(self.weight)


def _local_epoch_minute(day: dt.date, minute_of_day: int) -> int:
    local = dt.datetime(day.year, day.month, day.day, minute_of_day // 60, minute_of_day % 60,
                        tzinfo=EXCHANGE_TZ)
    return int(local.timestamp() // 60)


def _make_clock(cal: TradingCalendar, pattern: np.ndarray, off_weight: float) -> _Clock:
    first, last = cal.trading_days[0], cal.trading_days[-1]
    base = _local_epoch_minute(first, 0)
    end = _local_epoch_minute(last + dt.timedelta(days=8), 0)
    n = end - base
    weight = np.full(n, float(off_weight))
    grid_of = np.full(n, -1, dtype=np.int64)
    session_epoch = np.zeros((cal.n_days, SESSION_LEN), dtype=np.int64)
    rel = pattern / pattern.mean()
    for d, day in enumerate(cal.trading_days):
        start = _local_epoch_minute(day, SESSION_OPEN)
        session_epoch[d] = start + np.arange(SESSION_LEN)
        weight[start - base:start - base + SESSION_LEN] = rel
        grid_of[start - base:start - base + SESSION_LEN] = d * SESSION_LEN + np.arange(SESSION_LEN)
    return _Clock(cal, base, weight, session_epoch, grid_of)


# --------------------------------------------------------------------------- naming

def _tickers(n: int, rng: np.random.Generator) -> List[str]:
    letters = np.array(list(string.ascii_uppercase))
    seen, out = set(), []
    while len(out) < n:
        t = "Z" + "".join(rng.choice(letters, 3))
        if t not in seen:
            seen.add(t)
            out.append(t)
    return out


def _alias(ticker: str) -> str:
    return f"{ticker.capitalize()} Holdings"


# --------------------------------------------------------------------------- articles & clicks

@dataclass
class Article:
    article_id: str
    publish_epoch_minute: int
    publish_second: int
    companies: Tuple[str, ...]      # all tags
    attributed: Tuple[str, ...]     # tags that survive the filters
    sign: int
    total_clicks: int
    tau: float
    title: str
    first_paragraph: Optional[str]
    click_minutes: np.ndarray = field(repr=False, default=None)   # epoch minutes
    click_counts: np.ndarray = field(repr=False, default=None)

    def published_iso(self) -> str:
        ts = dt.datetime.fromtimestamp(self.publish_epoch_minute * 60 + self.publish_second, tz=EXCHANGE_TZ)
        return ts.isoformat()


def _tau_for(total: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    tau = cfg.tau_base * (np.asarray(total, float) / cfg.click_xmin) ** cfg.tau_exponent
    return np.clip(tau, *cfg.tau_bounds)


def _spread_clicks(publish: int, total: int, tau: float, clock: _Clock, rng: np.random.Generator
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """Multinomial allocation of an article's clicks over wall-clock minutes."""
    horizon = int(min(math.ceil(15 * tau), 7 * 1440))
    start = publish - clock.base
    stop = min(start + horizon, clock.n_minutes)
    k = np.arange(stop - start, dtype=float)
    mass = np.exp(-k / tau) * (1.0 - math.exp(-1.0 / tau)) * clock.weight[start:stop]
    counts = rng.multinomial(int(total), mass / mass.sum())
    nz = np.flatnonzero(counts)
    return (publish + nz).astype(np.int64), counts[nz].astype(np.int64)


def _title(sign: int, names: Sequence[str], lex_pos: Sequence[str], lex_neg: Sequence[str],
           rng: np.random.Generator) -> str:
    filler = list(rng.choice(_NEUTRAL_WORDS, 2, replace=False))
    if sign > 0:
        words = list(rng.choice(lex_pos, int(rng.integers(1, 3)), replace=False))
    elif sign < 0:
        words = list(rng.choice(lex_neg, int(rng.integers(1, 3)), replace=False))
    else:
        words = []
    body = filler[:1] + words + filler[1:]
    return " and ".join(names) + " " + " ".join(body)


def _paragraph(names: Sequence[str], rng: np.random.Generator) -> str:
    words = list(rng.choice(_PARAGRAPH_WORDS, 8))
    return " and ".join(names) + " " + " ".join(words) + "."


def _publish_minute(day: int, clock: _Clock, cfg: SynthConfig, rng: np.random.Generator) -> Tuple[int, int]:
    date = clock.cal.trading_days[day]
    if rng.random() < cfg.off_session_publish:
        # before the open (6:00-9:29) or after the close (16:00-21:59)
        mod = int(rng.integers(360, 570)) if rng.random() < 0.5 else int(rng.integers(960, 1320))
        return _local_epoch_minute(date, mod), int(rng.integers(0, 60))
    return int(clock.session_epoch[day, rng.integers(0, SESSION_LEN)]), int(rng.integers(0, 60))


# --------------------------------------------------------------------------- per company simulation

@dataclass
class CompanyTruth:
    ticker: str
    alias: str
    causal: bool
    click_alpha: float
    base_volume: float
    start_price: float
    signal_scale: float
    articles: List[Article]
    volume: np.ndarray = field(repr=False, default=None)      # (n_days, 390) raw volume, 0 = no trade
    log_price: np.ndarray = field(repr=False, default=None)   # (n_days, 390) log10 price
    traded: np.ndarray = field(repr=False, default=None)      # (n_days, 390) bool
    clicks: np.ndarray = field(repr=False, default=None)      # (n_days, 390) in-session clicks
    weighted: np.ndarray = field(repr=False, default=None)    # (n_days, 390) clicks * sign
    signal: np.ndarray = field(repr=False, default=None)      # (n_days, 390) planted driver

    def summary(self) -> dict:
        return {"ticker": self.ticker, "alias": self.alias, "causal": self.causal,
                "click_alpha": self.click_alpha, "base_volume": self.base_volume,
                "start_price": self.start_price, "signal_scale": self.signal_scale,
                "n_articles": len(self.articles)}


def _simulate_company(index: int, ticker: str, causal: bool, seq: np.random.SeedSequence, cfg: SynthConfig,
                      clock: _Clock, others: Sequence[str], lex: Lexicon) -> CompanyTruth:
    rng = np.random.default_rng(seq)
    n_days = clock.cal.n_days
    pattern = cfg.pattern
    alias = _alias(ticker)
    alpha = float(cfg.click_alpha + cfg.click_alpha_sd * rng.standard_normal()) if cfg.click_alpha_sd else \
        float(cfg.click_alpha)
    alpha = min(max(alpha, 0.3), 3.0)

    lex_pos, lex_neg = lex.positive_words(), lex.negative_words()
    counts = rng.poisson(cfg.articles_per_day, n_days)
    n_art = int(counts.sum())
    totals = sample_power_law(n_art, alpha, cfg.click_xmin, rng) if n_art else np.zeros(0, np.int64)
    taus = _tau_for(totals, cfg)
    signs = rng.choice(np.array([1, -1, 0]), n_art, p=np.asarray(cfg.sentiment_probs, float))

    flat_clicks = np.zeros(n_days * SESSION_LEN)
    flat_weighted = np.zeros(n_days * SESSION_LEN)
    articles = []
    j = 0
    for day in range(n_days):
        for _ in range(int(counts[day])):
            publish, second = _publish_minute(day, clock, cfg, rng)
            tags = [ticker]
            if others and rng.random() < cfg.casual_tag_fraction:
                extra = rng.choice(len(others), int(rng.integers(1, 3)), replace=False)
                tags += [others[k] for k in sorted(extra)]
            sign = int(signs[j])
            title = _title(sign, [alias], lex_pos, lex_neg, rng)
            para = None if rng.random() < cfg.missing_paragraph_fraction else _paragraph([alias], rng)
            minutes, cnt = _spread_clicks(publish, int(totals[j]), float(taus[j]), clock, rng)
            art = Article(f"{ticker}-{j:05d}", publish, second, tuple(tags), (ticker,), sign, int(totals[j]),
                          float(taus[j]), title, para, minutes, cnt)
            articles.append(art)
            g = clock.grid_of[minutes - clock.base]
            on = g >= 0
            np.add.at(flat_clicks, g[on], cnt[on])
            np.add.at(flat_weighted, g[on], cnt[on] * sign)
            j += 1

    # planted driver: minute weighted sentiment, de-seasonalised with the true
    # click profile, sign(WS-bar) * C as in the pipeline's WS definition
    zeta_c = pattern / pattern.sum()
    de_clicks = flat_clicks / np.tile(zeta_c, n_days)
    signal = np.sign(flat_weighted) * de_clicks
    scale = float(np.mean(np.abs(signal)))
    signal_scale = scale if scale > 0 else 1.0

    sd_r = cfg.noise_scales.get("returns", 2e-4)
    vol_shape = np.tile(np.sqrt(pattern / pattern.mean()), n_days)
    r = sd_r * vol_shape * rng.standard_normal(n_days * SESSION_LEN)
    if causal and cfg.causal_strength:
        shift = cfg.causal_lag * cfg.causal_lag_unit
        lagged = np.zeros_like(signal)
        lagged[shift:] = signal[:-shift]
        r = r + cfg.causal_strength * sd_r * lagged / signal_scale
    start_price = float(50.0 * math.exp(0.5 * rng.standard_normal()))
    log_price = math.log10(start_price) + np.cumsum(r)

    base_volume = float(rng.uniform(*cfg.base_volume))
    sd_v = cfg.noise_scales.get("volume", 0.5)
    vol = base_volume * np.tile(pattern / pattern.mean(), n_days) * rng.lognormal(-0.5 * sd_v ** 2, sd_v,
                                                                                  n_days * SESSION_LEN)
    vol = np.maximum(np.round(vol), 1.0)
    traded = rng.random(n_days * SESSION_LEN) >= cfg.gap_probability
    traded[0] = True
    vol = np.where(traded, vol, 0.0)

    shape = (n_days, SESSION_LEN)
    return CompanyTruth(ticker, alias, causal, alpha, base_volume, start_price, signal_scale, articles,
                        vol.reshape(shape), log_price.reshape(shape), traded.reshape(shape),
                        flat_clicks.reshape(shape), flat_weighted.reshape(shape), signal.reshape(shape))


@dataclass
class SynthWorld:
    config: SynthConfig
    calendar: TradingCalendar
    companies: List[CompanyTruth]
    crowded: List[Article]
    clock: _Clock = field(repr=False, default=None)


def _company_plan(cfg: SynthConfig):
    root = np.random.SeedSequence(cfg.seed)
    naming, planting, crowd, *per_company = root.spawn(3 + cfg.n_companies)
    tickers = _tickers(cfg.n_companies, np.random.default_rng(naming))
    n_causal = int(round(cfg.causal_fraction * cfg.n_companies))
    causal_idx = set(np.random.default_rng(planting).choice(cfg.n_companies, n_causal, replace=False).tolist())
    return tickers, causal_idx, crowd, per_company


def simulate(cfg: SynthConfig, lexicon: Optional[Lexicon] = None) -> SynthWorld:
    cfg.validate()
    lex = lexicon or builtin_lexicon("merged")
    cal = weekday_calendar(dt.date.fromisoformat(cfg.start_date), cfg.n_days)
    clock = _make_clock(cal, cfg.pattern, cfg.off_session_weight)
    tickers, causal_idx, crowd_seq, per_company = _company_plan(cfg)
    companies = []
    for i, ticker in enumerate(tickers):
        others = [t for t in tickers if t != ticker]
        companies.append(_simulate_company(i, ticker, i in causal_idx, per_company[i], cfg, clock, others, lex))

    # articles tagged with too many companies: rejected downstream
    rng = np.random.default_rng(crowd_seq)
    n_crowded = int(round(cfg.crowded_fraction * sum(len(c.articles) for c in companies)))
    crowded = []
    if cfg.n_companies >= 5:
        lex_pos, lex_neg = lex.positive_words(), lex.negative_words()
        totals = sample_power_law(n_crowded, cfg.click_alpha, cfg.click_xmin, rng) if n_crowded else []
        for j in range(n_crowded):
            k = int(rng.integers(5, min(8, cfg.n_companies) + 1))
            tags = tuple(sorted(rng.choice(tickers, k, replace=False).tolist()))
            day = int(rng.integers(0, cal.n_days))
            publish, second = _publish_minute(day, clock, cfg, rng)
            sign = int(rng.choice([1, -1, 0]))
            names = [_alias(t) for t in tags]
            tau = float(_tau_for(np.array([totals[j]]), cfg)[0])
            minutes, cnt = _spread_clicks(publish, int(totals[j]), tau, clock, rng)
            crowded.append(Article(f"MULTI-{j:05d}", publish, second, tags, (), sign, int(totals[j]), tau,
                                   _title(sign, names, lex_pos, lex_neg, rng), _paragraph(names, rng),
                                   minutes, cnt))
    return SynthWorld(cfg, cal, companies, crowded, clock)


# --------------------------------------------------------------------------- writing

def _iso_minutes(epoch_minutes: np.ndarray) -> np.ndarray:
    """ISO-8601 exchange-local strings with a +HH:MM offset for epoch minutes."""
    uniq, inv = np.unique(np.asarray(epoch_minutes, dtype=np.int64), return_inverse=True)
    stamps = pd.to_datetime(uniq, unit="m", utc=True).tz_convert(EXCHANGE_TZ).strftime("%Y-%m-%dT%H:%M:%S%z")
    text = np.array([s[:-2] + ":" + s[-2:] for s in stamps], dtype=object)
    return text[inv]


def _all_articles(world: SynthWorld) -> List[Article]:
    arts = [a for c in world.companies for a in c.articles] + list(world.crowded)
    return sorted(arts, key=lambda a: a.article_id)


def write_world(world: SynthWorld, out_dir: Union[str, Path]) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cal = world.calendar
    paths = {name: out / fname for name, fname in (
        ("market", "market.csv"), ("clicks", "clicks.csv"), ("news", "news.jsonl"),
        ("aliases", "aliases.csv"), ("calendar", "trading_days.txt"), ("ground_truth", "ground_truth.json"))}

    cal.dump(paths["calendar"])
    session_iso = _iso_minutes(world.clock.session_epoch.reshape(-1))
    frames = []
    for c in sorted(world.companies, key=lambda c: c.ticker):
        mask = c.traded.reshape(-1)
        frames.append(pd.DataFrame({
            "ticker": c.ticker,
            "timestamp_iso8601": session_iso[mask],
            "last_price": np.char.mod("%.6f", 10.0 ** c.log_price.reshape(-1)[mask]),
            "volume": c.volume.reshape(-1)[mask].astype(np.int64),
        }))
    pd.concat(frames, ignore_index=True).to_csv(paths["market"], index=False, lineterminator="\n")

    articles = _all_articles(world)
    ids = np.concatenate([np.repeat(a.article_id, len(a.click_minutes)) for a in articles]) if articles else []
    minutes = np.concatenate([a.click_minutes for a in articles]) if articles else np.zeros(0, np.int64)
    counts = np.concatenate([a.click_counts for a in articles]) if articles else np.zeros(0, np.int64)
    pd.DataFrame({"article_id": ids, "timestamp_iso8601": _iso_minutes(minutes), "clicks": counts}).to_csv(
        paths["clicks"], index=False, lineterminator="\n")

    with open(paths["news"], "w", encoding="utf-8", newline="\n") as fh:
        for a in articles:
            fh.write(json.dumps({"article_id": a.article_id, "published": a.published_iso(), "title": a.title,
                                 "first_paragraph": a.first_paragraph, "tickers": list(a.companies)}) + "\n")

    with open(paths["aliases"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# ticker,alias1|alias2|...\n")
        for c in sorted(world.companies, key=lambda c: c.ticker):
            fh.write(f"{c.ticker},{c.alias}\n")

    truth = ground_truth(world)
    paths["ground_truth"].write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return paths


def ground_truth(world: SynthWorld) -> dict:
    return {
        "format": "newsflow-ground-truth/1",
        "config": world.config.to_dict(),
        "trading_days": [d.isoformat() for d in world.calendar.trading_days],
        "companies": [c.summary() for c in sorted(world.companies, key=lambda c: c.ticker)],
        "causal_companies": sorted(c.ticker for c in world.companies if c.causal),
        "articles": [{"article_id": a.article_id, "sign": a.sign, "total_clicks": a.total_clicks, "tau": a.tau,
                      "tags": list(a.companies), "attributed": list(a.attributed)}
                     for a in _all_articles(world)],
    }


def generate(cfg: SynthConfig, out_dir: Union[str, Path], lexicon: Optional[Lexicon] = None) -> Dict[str, Path]:
    """Simulate and write market.csv, clicks.csv, news.jsonl, aliases.csv,
    trading_days.txt and ground_truth.json into ``out_dir``."""
    return write_world(simulate(cfg, lexicon), out_dir)


# --------------------------------------------------------------------------- oracles

def true_panel_series(truth: CompanyTruth, pattern: np.ndarray, scale: Union[TimeScale, str, int]) -> Dict[str, np.ndarray]:
    """Bin-level R and WS built from the planted minute arrays with the true
    seasonal factors (no estimation, no file round trip)."""
    scale = TimeScale.parse(scale)
    logp = truth.log_price.reshape(-1)
    traded = truth.traded.reshape(-1)
    idx = np.where(traded, np.arange(logp.size), -1)
    np.maximum.accumulate(idx, out=idx)
    last = logp[idx]
    r = np.zeros_like(last)
    r[1:] = np.diff(last)
    r = r.reshape(truth.log_price.shape)
    zeta_r = np.sqrt(pattern / pattern.mean())
    zeta_r = zeta_r / zeta_r.mean()
    zeta_c = pattern / pattern.sum()
    if scale.is_daily:
        rr, cc = r, truth.clicks
    else:
        rr, cc = r / zeta_r, truth.clicks / zeta_c
    R = aggregate_bins(rr, scale)
    C = aggregate_bins(cc, scale)
    WS = np.sign(aggregate_bins(truth.weighted, scale)) * C
    return {"R": R, "WS": WS, "C": C}


def oracle_power(cfg: SynthConfig, scale: Union[TimeScale, str, int] = 65, level: float = 0.05,
                 n_companies: Optional[int] = None, max_lag: int = 5) -> float:
    """Predicted per-company WS->R detection rate for causal companies.

    Simulates ``n_companies`` causal companies from the generator's own
    minute arrays and tests WS -> R on true-profile bins.
    """
    from .stats import SingularRegressionError, granger, select_lag

    probe = dataclasses.replace(cfg, n_companies=n_companies or cfg.n_companies, causal_fraction=1.0,
                                crowded_fraction=0.0, seed=cfg.seed + 7919)
    world = simulate(probe)
    hits = 0
    for c in world.companies:
        s = true_panel_series(c, probe.pattern, scale)
        try:
            lag = select_lag(s["WS"], s["R"], max_lag)
            hits += granger(s["WS"], s["R"], lag).p_value < level
        except (SingularRegressionError, ValueError):
            pass
    return hits / len(world.companies)


def load_ground_truth(path: Union[str, Path]) -> dict:
    truth = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(truth, dict) or truth.get("format") != "newsflow-ground-truth/1":
        raise SynthConfigError(f"{path} is not a newsflow ground-truth file")
    return truth


def click_count_cohort(n_companies: int, n_articles: int, alpha_mean: float, alpha_sd: float, x_min: int,
                       seed: int) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    """Clicks-per-news samples for a cohort with per-company alpha ~ N(mean, sd)."""
    children = np.random.SeedSequence(seed).spawn(n_companies)
    samples, alphas = {}, {}
    for i, child in enumerate(children):
        rng = np.random.default_rng(child)
        a = float(min(max(alpha_mean + alpha_sd * rng.standard_normal(), 0.3), 3.0))
        name = f"CO{i:03d}"
        alphas[name] = a
        samples[name] = sample_power_law(n_articles, a, x_min, rng)
    return samples, alphas


def attention_cohort(n_articles: int, cfg: Optional[SynthConfig] = None, seed: int = 0
                     ) -> Tuple[Dict[str, int], pd.DataFrame, Dict[str, float]]:
    """Articles with clicks only, for attention-curve checks.

    Returns (publish epoch minute by id, clicks frame with article_id /
    epoch_minute / clicks, true tau by id).
    """
    cfg = cfg or SynthConfig(n_companies=1, n_days=20)
    cal = weekday_calendar(dt.date.fromisoformat(cfg.start_date), cfg.n_days)
    clock = _make_clock(cal, cfg.pattern, cfg.off_session_weight)
    rng = np.random.default_rng(seed)
    totals = sample_power_law(n_articles, cfg.click_alpha, cfg.click_xmin, rng)
    taus = _tau_for(totals, cfg)
    publish, tau_of, frames = {}, {}, []
    for i in range(n_articles):
        aid = f"A{i:06d}"
        day = int(rng.integers(0, cal.n_days))
        minute = int(clock.session_epoch[day, rng.integers(0, SESSION_LEN)])
        mins, cnt = _spread_clicks(minute, int(totals[i]), float(taus[i]), clock, rng)
        publish[aid] = minute
        tau_of[aid] = float(taus[i])
        frames.append(pd.DataFrame({"article_id": aid, "epoch_minute": mins, "clicks": cnt}))
    return publish, pd.concat(frames, ignore_index=True), tau_of
