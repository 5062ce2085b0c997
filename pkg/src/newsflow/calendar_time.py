"""Trading-time grid: trading days, the 9:30-16:00 session and multi-scale bins."""
from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union
from zoneinfo import ZoneInfo

import numpy as np
import pandas as pd

EXCHANGE_TZ = ZoneInfo("America/New_York")
SESSION_OPEN = 570  # 9:30 as minute-of-day
SESSION_LEN = 390
INTRADAY_WIDTHS = (1, 10, 30, 65, 130)
DAILY = "daily"
_EPOCH_ORDINAL = dt.date(1970, 1, 1).toordinal()


class CalendarError(ValueError):
    pass


@dataclass(frozen=True)
class TimeScale:
    """Bin width in minutes, or DAILY."""

    width: Union[int, str]

    def __post_init__(self):
        if self.width == DAILY:
            return
        if not isinstance(self.width, (int, np.integer)) or isinstance(self.width, bool):
            raise CalendarError(f"bad time scale {self.width!r}")
        if self.width <= 0 or SESSION_LEN % self.width:
            raise CalendarError(f"width {self.width} does not divide the {SESSION_LEN}-minute session")

    @classmethod
    def parse(cls, text: Union[str, int, "TimeScale"]) -> "TimeScale":
        if isinstance(text, TimeScale):
            return text
        if isinstance(text, str):
            t = text.strip().lower()
            if t in (DAILY, "d", "day"):
                return cls(DAILY)
            return cls(int(t))
        return cls(int(text))

    @property
    def is_daily(self) -> bool:
        return self.width == DAILY

    @property
    def bins_per_day(self) -> int:
        return 1 if self.is_daily else SESSION_LEN // int(self.width)

    @property
    def label(self) -> str:
        return DAILY if self.is_daily else str(self.width)

    def __str__(self) -> str:
        return self.label


STANDARD_SCALES = tuple(TimeScale(w) for w in INTRADAY_WIDTHS) + (TimeScale(DAILY),)


@dataclass(frozen=True)
class TradingCalendar:
    trading_days: Tuple[dt.date, ...]
    session_open: int = SESSION_OPEN
    session_len: int = SESSION_LEN
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        days = tuple(self.trading_days)
        if any(b <= a for a, b in zip(days, days[1:])):
            raise CalendarError("trading days must be strictly increasing")
        if self.session_len != SESSION_LEN:
            raise CalendarError("only full 390-minute sessions are supported")
        object.__setattr__(self, "trading_days", days)
        object.__setattr__(self, "_index", {d: i for i, d in enumerate(days)})

    @classmethod
    def from_dates(cls, dates: Iterable[Union[str, dt.date]]) -> "TradingCalendar":
        out = []
        for d in dates:
            out.append(d if isinstance(d, dt.date) else dt.date.fromisoformat(str(d).strip()))
        return cls(tuple(out))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TradingCalendar":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        dates = []
        for lineno, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                dates.append(dt.date.fromisoformat(line.strip()))
            except ValueError as exc:
                raise CalendarError(f"{path}:{lineno}: bad date {line!r}") from exc
        return cls.from_dates(dates)

    def dump(self, path: Union[str, Path]) -> None:
        text = "".join(f"{d.isoformat()}\n" for d in self.trading_days)
        Path(path).write_text(text, encoding="utf-8", newline="\n")

    @property
    def n_days(self) -> int:
        return len(self.trading_days)

    def day_index(self, date: dt.date) -> Optional[int]:
        return self._index.get(date)

    def minute_index(self, timestamp: Union[dt.datetime, str]) -> Optional[Tuple[int, int]]:
        """Map an instant to its (day_index, intraday_minute), or None if outside any session.

        Naive datetimes are read as exchange-local time.
        """
        if isinstance(timestamp, str):
            timestamp = dt.datetime.fromisoformat(timestamp)
        if timestamp.tzinfo is not None:
            timestamp = timestamp.astimezone(EXCHANGE_TZ)
        d = self._index.get(timestamp.date())
        if d is None:
            return None
        t = timestamp.hour * 60 + timestamp.minute - self.session_open
        if not 0 <= t < self.session_len:
            return None
        return d, t

    def locate(self, local_dates: np.ndarray, minute_of_day: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised minute_index over exchange-local dates and minutes-of-day.

        Returns (day_index, intraday_minute, in_session mask); out-of-session
        entries carry -1.
        """
        ordinals = np.array([d.toordinal() for d in self.trading_days], dtype=np.int64)
        local = np.asarray(local_dates, dtype=np.int64)
        pos = np.searchsorted(ordinals, local)
        if len(ordinals) == 0:
            empty = np.full(local.shape, -1, dtype=np.int64)
            return empty, empty.copy(), np.zeros(local.shape, dtype=bool)
        pos_c = np.minimum(pos, len(ordinals) - 1)
        on_day = ordinals[pos_c] == local
        t = np.asarray(minute_of_day, dtype=np.int64) - self.session_open
        mask = on_day & (t >= 0) & (t < self.session_len)
        day = np.where(mask, pos_c, -1)
        return day, np.where(mask, t, -1), mask

    def locate_instants(self, instants: pd.Series) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorised minute_index for a tz-aware pandas datetime Series."""
        local = instants.dt.tz_convert(EXCHANGE_TZ)
        naive = local.dt.tz_localize(None).to_numpy().astype("datetime64[D]")
        ordinals = naive.astype(np.int64) + _EPOCH_ORDINAL
        mod = np.asarray(local.dt.hour * 60 + local.dt.minute, dtype=np.int64)
        return self.locate(ordinals, mod)

    def bin_start(self, scale: TimeScale, bin_index: int) -> dt.datetime:
        """Exchange-local start instant of a global bin."""
        per_day = scale.bins_per_day
        d, b = divmod(int(bin_index), per_day)
        minute = self.session_open + (0 if scale.is_daily else b * int(scale.width))
        day = self.trading_days[d]
        return dt.datetime(day.year, day.month, day.day, minute // 60, minute % 60, tzinfo=EXCHANGE_TZ)

    def bin_starts_iso(self, scale: TimeScale) -> list:
        return [self.bin_start(scale, k).isoformat() for k in range(self.n_days * scale.bins_per_day)]


def bin_of(t: int, scale: TimeScale) -> int:
    """Intraday bin index of minute t at an intraday scale."""
    if scale.is_daily:
        raise CalendarError("daily scale has no intraday bins; use the day index")
    if not 0 <= t < SESSION_LEN:
        raise CalendarError(f"intraday minute {t} outside [0, {SESSION_LEN})")
    return t // int(scale.width)


def weekday_calendar(start: dt.date, n_days: int, holidays: Sequence[dt.date] = ()) -> TradingCalendar:
    """Consecutive weekdays from start, skipping the given holidays."""
    skip = set(holidays)
    days = []
    d = start
    while len(days) < n_days:
        if d.weekday() < 5 and d not in skip:
            days.append(d)
        d += dt.timedelta(days=1)
    return TradingCalendar(tuple(days))


def aggregate_bins(minute_grid: np.ndarray, scale: TimeScale) -> np.ndarray:
    """Sum a (n_days, 390) minute grid into a flat array of bins at `scale`."""
    grid = np.asarray(minute_grid, dtype=float)
    n_days = grid.shape[0]
    per_day = scale.bins_per_day
    width = SESSION_LEN if scale.is_daily else int(scale.width)
    return grid.reshape(n_days, per_day, width).sum(axis=2).reshape(-1)


__all__ = [
    "CalendarError", "DAILY", "EXCHANGE_TZ", "INTRADAY_WIDTHS", "SESSION_LEN", "SESSION_OPEN",
    "STANDARD_SCALES", "TimeScale", "TradingCalendar", "aggregate_bins", "bin_of", "weekday_calendar",
]
