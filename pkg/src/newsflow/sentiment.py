"""Lexicon-based headline scoring: one sign in {-1, 0, +1} per article title."""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, List, Mapping, Sequence, Union

_TOKEN = re.compile(r"[^\W_]+", re.UNICODE)


class LexiconError(ValueError):
    pass


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, int]
    provenance: str = "general"

    def __post_init__(self):
        clean = {}
        for token, valence in dict(self.entries).items():
            if not token or token != token.lower() or any(ch.isspace() for ch in token):
                raise LexiconError(f"lexicon token must be a single lowercase word: {token!r}")
            if int(valence) == 0:
                raise LexiconError(f"zero valence for {token!r}")
            clean[token] = int(valence)
        object.__setattr__(self, "entries", MappingProxyType(clean))

    def __len__(self) -> int:
        return len(self.entries)

    def negated(self) -> "Lexicon":
        return Lexicon({k: -v for k, v in self.entries.items()}, self.provenance)

    def positive_words(self) -> List[str]:
        return sorted(k for k, v in self.entries.items() if v > 0)

    def negative_words(self) -> List[str]:
        return sorted(k for k, v in self.entries.items() if v < 0)


@dataclass(frozen=True)
class SentimentScore:
    sign: int
    pos_hits: int
    neg_hits: int


def _parse_lexicon(text: str, source: str, provenance: str) -> Lexicon:
    entries = {}
    rows = csv.reader(io.StringIO(text))
    for lineno, row in enumerate(rows, 1):
        if not row or not "".join(row).strip() or row[0].lstrip().startswith("#"):
            continue
        if len(row) != 2:
            raise LexiconError(f"{source}:{lineno}: expected 'token,valence'")
        token, valence = row[0].strip().lower(), row[1].strip()
        if token == "token" and valence == "valence":
            continue
        try:
            entries[token] = int(valence)
        except ValueError:
            raise LexiconError(f"{source}:{lineno}: valence {valence!r} is not an integer") from None
        if entries[token] == 0:
            raise LexiconError(f"{source}:{lineno}: valence must be nonzero")
    return Lexicon(entries, provenance)


def load_lexicon(path: Union[str, Path], provenance: str = "general") -> Lexicon:
    return _parse_lexicon(Path(path).read_text(encoding="utf-8"), str(path), provenance)


def builtin_lexicon(name: str = "merged") -> Lexicon:
    """Bundled demonstration lexicons: 'general', 'financial' or 'merged'."""
    if name == "merged":
        return merge_lexicons(builtin_lexicon("general"), builtin_lexicon("financial"))
    if name not in ("general", "financial"):
        raise LexiconError(f"unknown builtin lexicon {name!r}")
    text = resources.files("newsflow").joinpath(f"data/{name}_lexicon.csv").read_text(encoding="utf-8")
    return _parse_lexicon(text, f"<builtin {name}>", name)


def tokenize(title: str) -> List[str]:
    return [m.group(0).lower() for m in _TOKEN.finditer(title or "")]


def score_title(title: str, lex: Lexicon) -> SentimentScore:
    pos = neg = 0
    for token in tokenize(title):
        v = lex.entries.get(token)
        if v is None:
            continue
        if v > 0:
            pos += 1
        else:
            neg += 1
    diff = pos - neg
    return SentimentScore((diff > 0) - (diff < 0), pos, neg)


def merge_lexicons(general: Lexicon, financial: Lexicon) -> Lexicon:
    """Union of both lexicons; the financial valence wins on conflicts."""
    entries = dict(general.entries)
    entries.update(financial.entries)
    return Lexicon(entries, "merged")


@dataclass(frozen=True)
class AgreementReport:
    n: int
    agreement: float
    neutral_a_signed_by_b: float
    neutral_b_signed_by_a: float


def dictionary_agreement(lex_a: Lexicon, lex_b: Lexicon, titles: Sequence[str]) -> AgreementReport:
    """Compare two lexicons on a headline corpus.

    ``neutral_a_signed_by_b`` is the fraction of titles neutral under ``lex_a``
    that ``lex_b`` scores as positive or negative (and symmetrically).
    """
    a = [score_title(t, lex_a).sign for t in titles]
    b = [score_title(t, lex_b).sign for t in titles]
    n = len(a)
    if n == 0:
        return AgreementReport(0, float("nan"), float("nan"), float("nan"))
    same = sum(x == y for x, y in zip(a, b))
    neutral_a = [y for x, y in zip(a, b) if x == 0]
    neutral_b = [x for x, y in zip(a, b) if y == 0]

    def frac(vals: Iterable[int]) -> float:
        vals = list(vals)
        return sum(v != 0 for v in vals) / len(vals) if vals else float("nan")

    return AgreementReport(n, same / n, frac(neutral_a), frac(neutral_b))
