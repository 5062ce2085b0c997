"""Spearman correlation with permutation significance, pairwise Granger causality,
Bonferroni correction and the per-company test battery."""
from __future__ import annotations

import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .calendar_time import TimeScale
from .special import f_sf, t_sf_two_sided

logger = logging.getLogger(__name__)

CORRELATION_PAIRS: Tuple[Tuple[str, str], ...] = (("WS", "R"), ("C", "sigma"), ("C", "V"))
GRANGER_DIRECTIONS: Tuple[Tuple[str, str], ...] = (
    ("S", "R"), ("R", "S"), ("R", "WS"), ("WS", "R"),
    ("V", "C"), ("C", "V"), ("C", "sigma"), ("sigma", "C"),
)
DEFAULT_PERMUTATIONS = 1000
DEFAULT_MAX_LAG = 5
COND_LIMIT = 1e12


class UndefinedCorrelationError(ValueError):
    pass


class SingularRegressionError(ValueError):
    pass


def pair_label(pair: Sequence[str]) -> str:
    return f"{pair[0]}~{pair[1]}"


def direction_label(direction: Sequence[str]) -> str:
    return f"{direction[0]}->{direction[1]}"


# --------------------------------------------------------------------------- Spearman

def _centered_ranks(x: np.ndarray) -> np.ndarray:
    r = rankdata(x, method="average")
    r = r - r.mean()
    norm = math.sqrt(float(r @ r))
    if norm == 0.0:
        raise UndefinedCorrelationError("series is constant; Spearman correlation undefined")
    return r / norm


def _check_pair(x, y) -> Tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    if len(x) < 3:
        raise UndefinedCorrelationError("need at least 3 observations")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("series must be finite")
    return x, y


def spearman(x, y) -> float:
    """Spearman's rho: Pearson correlation of average-tie ranks."""
    x, y = _check_pair(x, y)
    rho = float(_centered_ranks(x) @ _centered_ranks(y))
    return max(-1.0, min(1.0, rho))


def spearman_pvalue(x, y, n_perm: int = DEFAULT_PERMUTATIONS, seed=0, method: str = "permutation") -> float:
    """Two-sided p-value for zero Spearman correlation.

    ``method="permutation"`` shuffles ``y`` ``n_perm`` times and returns
    (1 + #{|rho_perm| >= |rho_obs|}) / (n_perm + 1). ``method="asymptotic"``
    uses the t approximation with n - 2 degrees of freedom.
    """
    x, y = _check_pair(x, y)
    zx, zy = _centered_ranks(x), _centered_ranks(y)
    rho = float(zx @ zy)
    if method == "asymptotic":
        n = len(x)
        if abs(rho) >= 1.0:
            return 0.0
        return t_sf_two_sided(rho * math.sqrt((n - 2) / (1.0 - rho * rho)), n - 2)
    if method != "permutation":
        raise ValueError(f"unknown method {method!r}")
    rng = np.random.default_rng(seed)
    target = abs(rho) * (1.0 - 1e-12)
    n = len(x)
    # If one series is mostly one tied value (clicks in most minutes are 0),
    # the statistic only depends on where its k other positions land, so a
    # draw of k distinct indices replaces a full shuffle of n.
    (base_x, idx_x), (base_y, idx_y) = _tie_split(zx), _tie_split(zy)
    if len(idx_x) <= len(idx_y):
        sparse, base, idx, dense = zx, base_x, idx_x, zy
    else:
        sparse, base, idx, dense = zy, base_y, idx_y, zx
    k = len(idx)
    use_sparse = 2 * k <= n and k * 1000 < n * n_perm  # rough break-even of the two samplers
    hits = 0
    done = 0
    if use_sparse:
        w = sparse[idx] - base
        offset = base * float(dense.sum())
        chunk = max(1, min(n_perm, 25_000_000 // n))
        while done < n_perm:
            m = min(chunk, n_perm - done)
            stats = dense[_distinct_draws(rng, n, m, k)] @ w + offset
            hits += int(np.count_nonzero(np.abs(stats) >= target))
            done += m
    else:
        chunk = max(1, min(n_perm, 2_000_000 // n))
        while done < n_perm:
            m = min(chunk, n_perm - done)
            perms = rng.permuted(np.broadcast_to(zy, (m, n)), axis=1)
            hits += int(np.count_nonzero(np.abs(perms @ zx) >= target))
            done += m
    return (hits + 1) / (n_perm + 1)


def _tie_split(z: np.ndarray) -> Tuple[float, np.ndarray]:
    """Most frequent value of z and the positions holding anything else."""
    vals, counts = np.unique(z, return_counts=True)
    base = float(vals[int(np.argmax(counts))])
    return base, np.flatnonzero(z != base)


def _distinct_draws(rng: np.random.Generator, n: int, m: int, k: int) -> np.ndarray:
    """m rows of k distinct indices in [0, n), each row a uniform ordered sample.

    Columns are filled in turn; a draw that repeats an index already in its
    row is redrawn (sequential sampling without replacement).
    """
    out = np.empty((k, m), dtype=np.intp)
    seen = np.zeros(m * n, dtype=bool)
    base = np.arange(m) * n
    for t in range(k):
        v = rng.integers(0, n, m)
        idx = base + v
        clash = np.flatnonzero(seen[idx])
        while len(clash):
            v[clash] = rng.integers(0, n, len(clash))
            idx[clash] = base[clash] + v[clash]
            clash = clash[seen[idx[clash]]]
        seen[idx] = True
        out[t] = v
    out = out.T
    return out


@dataclass(frozen=True)
class CorrelationResult:
    pair: str
    rho: float
    p_value: float
    n: int


# --------------------------------------------------------------------------- OLS / Granger

@dataclass(frozen=True)
class OLSFit:
    coef: np.ndarray
    rss: float
    n: int
    k: int


def ols(design: np.ndarray, y: np.ndarray) -> OLSFit:
    """Least squares through a QR factorisation, with a conditioning guard.

    The condition number is taken after scaling columns to unit norm, so it
    reflects collinearity rather than units.
    """
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, k = design.shape
    if n <= k:
        raise SingularRegressionError(f"{n} observations for {k} regressors")
    norms = np.linalg.norm(design, axis=0)
    if np.any(norms == 0):
        raise SingularRegressionError("design has an all-zero column")
    q, r = np.linalg.qr(design / norms)
    sv = np.linalg.svd(r, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise SingularRegressionError("design matrix is rank deficient")
    qty = q.T @ y
    beta = np.linalg.solve(r, qty) / norms
    resid = y - design @ beta
    return OLSFit(beta, float(resid @ resid), n, k)


def lag_matrix(x: np.ndarray, lag: int, start: int) -> np.ndarray:
    """Columns x_{t-1}, ..., x_{t-lag} for t = start .. len(x) - 1."""
    n = len(x)
    return np.column_stack([x[start - j:n - j] for j in range(1, lag + 1)])


@dataclass(frozen=True)
class GrangerResult:
    direction: Tuple[str, str]
    lag: int
    f_stat: float
    p_value: float
    n_effective: int
    rss_restricted: float = float("nan")
    rss_unrestricted: float = float("nan")

    @property
    def label(self) -> str:
        return direction_label(self.direction)


def _granger_fits(x: np.ndarray, y: np.ndarray, lag: int, start: int) -> Tuple[OLSFit, OLSFit]:
    target = y[start:]
    ones = np.ones((len(target), 1))
    ylags = lag_matrix(y, lag, start)
    restricted = ols(np.hstack([ones, ylags]), target)
    unrestricted = ols(np.hstack([ones, ylags, lag_matrix(x, lag, start)]), target)
    return restricted, unrestricted


def granger(x, y, lag: int, direction: Tuple[str, str] = ("X", "Y")) -> GrangerResult:
    """F-test of "x Granger-causes y" at a fixed lag.

    Restricted: y_t on intercept and y_{t-1..t-lag}; unrestricted adds
    x_{t-1..t-lag}. F has (lag, n_eff - 2 lag - 1) degrees of freedom.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("series must be 1-D and of equal length")
    n = len(y)
    if n <= 3 * lag + 5:
        raise ValueError(f"series too short ({n}) for lag {lag}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("series must be finite")
    restricted, unrestricted = _granger_fits(x, y, lag, lag)
    n_eff = n - lag
    dfd = n_eff - 2 * lag - 1
    if unrestricted.rss <= 0:
        raise SingularRegressionError("unrestricted model fits exactly")
    num = max(restricted.rss - unrestricted.rss, 0.0) / lag
    f = num / (unrestricted.rss / dfd)
    return GrangerResult(tuple(direction), lag, f, f_sf(f, lag, dfd), n_eff, restricted.rss, unrestricted.rss)


def bic_table(x, y, max_lag: int) -> np.ndarray:
    """BIC of the unrestricted model for lags 1..max_lag on a common sample.

    Columns are ordered 1, y_{t-1}, x_{t-1}, y_{t-2}, x_{t-2}, ... so that the
    model at each lag is a prefix of the largest one, and a single QR gives
    every residual sum of squares. Lags whose regression is singular get +inf.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n_c = len(y) - max_lag
    out = np.full(max_lag, np.inf)
    target = y[max_lag:]
    cols = [np.ones(n_c)]
    for j in range(1, max_lag + 1):
        cols += [y[max_lag - j:len(y) - j], x[max_lag - j:len(x) - j]]
    design = np.column_stack(cols)
    norms = np.linalg.norm(design, axis=0)
    if n_c <= design.shape[1] or np.any(norms == 0):
        return _bic_table_slow(x, y, max_lag)
    q, r = np.linalg.qr(design / norms)
    qty = q.T @ target
    resid = target - q @ qty
    base = float(resid @ resid)
    for lag in range(1, max_lag + 1):
        c = 2 * lag + 1
        sv = np.linalg.svd(r[:c, :c], compute_uv=False)
        if sv[-1] == 0 or sv[0] / sv[-1] > COND_LIMIT:
            continue
        rss = base + float(qty[c:] @ qty[c:])
        if rss > 0:
            out[lag - 1] = n_c * math.log(rss / n_c) + c * math.log(n_c)
    return out


def _bic_table_slow(x: np.ndarray, y: np.ndarray, max_lag: int) -> np.ndarray:
    n_c = len(y) - max_lag
    out = np.full(max_lag, np.inf)
    for lag in range(1, max_lag + 1):
        try:
            _, fit = _granger_fits(x, y, lag, max_lag)
        except SingularRegressionError:
            continue
        if fit.rss > 0:
            out[lag - 1] = n_c * math.log(fit.rss / n_c) + (2 * lag + 1) * math.log(n_c)
    return out


def select_lag(x, y, max_lag: int = DEFAULT_MAX_LAG) -> int:
    """Lag in 1..max_lag minimising BIC of the unrestricted model; ties go to the smallest."""
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag == 1:
        return 1
    table = bic_table(x, y, max_lag)
    if not np.isfinite(table).any():
        return 1
    return int(np.argmin(table)) + 1


# --------------------------------------------------------------------------- Bonferroni

def bonferroni(p_values, level: float, n_tests: int) -> np.ndarray:
    """Reject where p < level / n_tests (strict)."""
    if not 0 < level < 1:
        raise ValueError("level must lie in (0, 1)")
    if n_tests < 1:
        raise ValueError("n_tests must be >= 1")
    return np.asarray(p_values, dtype=float) < level / n_tests


# --------------------------------------------------------------------------- battery

@dataclass(frozen=True)
class BatteryConfig:
    level: float = 0.05
    n_perm: int = DEFAULT_PERMUTATIONS
    max_lag: int = DEFAULT_MAX_LAG
    lag: Optional[int] = None  # fixed lag overrides BIC selection
    seed: int = 0
    correlation_method: str = "permutation"


def _pair_seed(seed: int, company: str, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFF, zlib.crc32(company.encode("utf-8")), index])


def company_tests(company: str, series: Mapping[str, np.ndarray], cfg: BatteryConfig) -> dict:
    """All correlation pairs and Granger directions for one company.

    Returns {"correlations": {label: CorrelationResult | error str},
             "granger": {label: GrangerResult | error str}}.
    """
    corr: Dict[str, Union[CorrelationResult, str]] = {}
    for i, pair in enumerate(CORRELATION_PAIRS):
        label = pair_label(pair)
        x, y = series[pair[0]], series[pair[1]]
        try:
            rho = spearman(x, y)
            p = spearman_pvalue(x, y, cfg.n_perm, _pair_seed(cfg.seed, company, i), cfg.correlation_method)
            corr[label] = CorrelationResult(label, rho, p, len(x))
        except (UndefinedCorrelationError, ValueError) as exc:
            corr[label] = f"{type(exc).__name__}: {exc}"
    gr: Dict[str, Union[GrangerResult, str]] = {}
    for direction in GRANGER_DIRECTIONS:
        label = direction_label(direction)
        x, y = series[direction[0]], series[direction[1]]
        try:
            lag = cfg.lag if cfg.lag is not None else select_lag(x, y, cfg.max_lag)
            gr[label] = granger(x, y, lag, direction)
        except (SingularRegressionError, ValueError) as exc:
            gr[label] = f"{type(exc).__name__}: {exc}"
    return {"correlations": corr, "granger": gr}


def _panel_series(panel) -> Dict[str, np.ndarray]:
    return {name: np.asarray(panel.series(name), dtype=float) for name in ("V", "R", "sigma", "C", "S", "WS")}


def _run_one(args):
    company, series, cfg = args
    return company, company_tests(company, series, cfg)


@dataclass
class TestReport:
    scale: str
    level: float
    n_tests: int
    companies: List[str]
    correlations: Dict[str, Dict[str, Union[CorrelationResult, str]]] = field(default_factory=dict)
    granger: Dict[str, Dict[str, Union[GrangerResult, str]]] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    __test__ = False  # not a pytest class

    @property
    def bonferroni_level(self) -> float:
        return self.level / self.n_tests

    def _p(self, table, company, label) -> float:
        res = table.get(company, {}).get(label)
        return res.p_value if hasattr(res, "p_value") else float("nan")

    def rejected(self, kind: str, label: str, bonferroni_corrected: bool = False) -> Dict[str, bool]:
        """Per-company rejection flags for one pair ("correlation") or direction ("granger")."""
        table = self.correlations if kind == "correlation" else self.granger
        cut = self.bonferroni_level if bonferroni_corrected else self.level
        out = {}
        for c in self.companies:
            p = self._p(table, c, label)
            out[c] = bool(np.isfinite(p) and p < cut)
        return out

    def rejection_rate(self, kind: str, label: str, bonferroni_corrected: bool = False) -> float:
        flags = self.rejected(kind, label, bonferroni_corrected)
        return float(np.mean(list(flags.values()))) if flags else float("nan")

    def summary(self) -> dict:
        """Percentages of companies rejecting, raw and Bonferroni-corrected."""
        out = {"correlation": {}, "granger": {}}
        for kind, labels in (("correlation", [pair_label(p) for p in CORRELATION_PAIRS]),
                             ("granger", [direction_label(d) for d in GRANGER_DIRECTIONS])):
            for label in labels:
                out[kind][label] = {
                    "raw_pct": 100.0 * self.rejection_rate(kind, label) if self.companies else float("nan"),
                    "bonferroni_pct": (100.0 * self.rejection_rate(kind, label, True)
                                       if self.companies else float("nan")),
                }
        return out

    def to_dict(self) -> dict:
        def enc(res):
            return {"error": res} if isinstance(res, str) else asdict(res)

        return {
            "scale": self.scale,
            "level": self.level,
            "n_tests": self.n_tests,
            "bonferroni_level": self.bonferroni_level,
            "config": self.config,
            "companies": list(self.companies),
            "correlations": {c: {k: enc(v) for k, v in self.correlations[c].items()} for c in self.companies},
            "granger": {c: {k: enc(v) for k, v in self.granger[c].items()} for c in self.companies},
            "flags": {
                "correlation": {pair_label(p): {"raw": self.rejected("correlation", pair_label(p)),
                                                "bonferroni": self.rejected("correlation", pair_label(p), True)}
                                for p in CORRELATION_PAIRS},
                "granger": {direction_label(d): {"raw": self.rejected("granger", direction_label(d)),
                                                 "bonferroni": self.rejected("granger", direction_label(d), True)}
                            for d in GRANGER_DIRECTIONS},
            },
            "summary": self.summary(),
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=1) + "\n"

    def correlation_matrix(self) -> pd.DataFrame:
        cols = [pair_label(p) for p in CORRELATION_PAIRS]
        rows = []
        for c in self.companies:
            row = {"company": c}
            for label in cols:
                res = self.correlations[c].get(label)
                row[label] = res.rho if isinstance(res, CorrelationResult) else float("nan")
            rows.append(row)
        return pd.DataFrame(rows, columns=["company", *cols])

    def granger_matrix(self) -> pd.DataFrame:
        cols = [direction_label(d) for d in GRANGER_DIRECTIONS]
        flags = {label: self.rejected("granger", label) for label in cols}
        rows = [{"company": c, **{label: int(flags[label][c]) for label in cols}} for c in self.companies]
        return pd.DataFrame(rows, columns=["company", *cols])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_test_battery(panels, scale: Union[TimeScale, str, int, None] = None, level: float = 0.05, *,
                     n_perm: int = DEFAULT_PERMUTATIONS, max_lag: int = DEFAULT_MAX_LAG,
                     lag: Optional[int] = None, seed: int = 0, correlation_method: str = "permutation",
                     n_tests: Optional[int] = None, workers: int = 1) -> TestReport:
    """Run the three correlation pairs and eight Granger directions for every company.

    ``panels`` maps company -> CompanyPanel (or a sequence of panels). The
    Bonferroni divisor defaults to the number of companies, one test per
    company for each pair/direction. Per-company failures are recorded as
    error strings in the report.
    """
    if isinstance(panels, Mapping):
        items = dict(panels)
    else:
        items = {p.company: p for p in panels}
    companies = sorted(items)
    if scale is None:
        scale = next(iter(items.values())).scale if items else "65"
    scale = TimeScale.parse(scale)
    cfg = BatteryConfig(level, n_perm, max_lag, lag, seed, correlation_method)
    jobs = [(c, _panel_series(items[c]), cfg) for c in companies]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = dict(map(_run_one, jobs))
    report = TestReport(scale.label, level, n_tests or max(len(companies), 1), companies,
                        config=asdict(cfg))
    for c in companies:
        report.correlations[c] = results[c]["correlations"]
        report.granger[c] = results[c]["granger"]
    return report
