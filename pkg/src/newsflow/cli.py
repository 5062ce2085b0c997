"""Command-line interface: ``newsflow <subcommand>``.

Subcommands: synth, ingest, analyze, validate, tails, attention.
Settings come from an optional TOML file (``--config``) and flags; flags
win. ``NEWSFLOW_WORKERS`` bounds process parallelism of the test battery.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import warnings
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .attention import cohort_fits, curves_frame, curves_from_clicks, decile_curves, fits_frame, publish_minutes
from .calendar_time import STANDARD_SCALES, TimeScale
from .ingest import parse_clicks
from .pipeline import Dataset, InputPaths, build_panels, load_dataset
from .sentiment import builtin_lexicon, load_lexicon, merge_lexicons
from .series import compute_profiles, write_panel
from .stats import CORRELATION_PAIRS, GRANGER_DIRECTIONS, CorrelationResult, GrangerResult, TestReport, \
    direction_label, pair_label, run_test_battery
from .synth import SynthConfig, generate, load_ground_truth
from .tails import DegenerateFitWarning, InsufficientTailError, ccdf_points, fit_table, fit_tail

logger = logging.getLogger("newsflow")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VALIDATION = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    data_dir: Optional[str] = None
    market: Optional[str] = None
    clicks: Optional[str] = None
    news: Optional[str] = None
    calendar: Optional[str] = None
    aliases: Optional[str] = None
    lexicon: List[str] = field(default_factory=lambda: ["merged"])
    scales: List[str] = field(default_factory=lambda: [s.label for s in STANDARD_SCALES])
    level: float = 0.05
    perms: int = 1000
    max_lag: int = 5
    lag: Optional[int] = None
    seed: int = 0
    correlation_method: str = "permutation"
    n_tests: Optional[int] = None
    bootstrap: int = 200
    horizon: int = 300
    out: str = "newsflow-out"

    def inputs(self) -> InputPaths:
        if self.data_dir:
            base = InputPaths.from_dir(self.data_dir)
            return InputPaths(Path(self.market or base.market), Path(self.clicks or base.clicks),
                              Path(self.news or base.news), Path(self.calendar or base.calendar),
                              Path(self.aliases) if self.aliases else base.aliases)
        missing = [k for k in ("market", "clicks", "news", "calendar") if not getattr(self, k)]
        if missing:
            raise ConfigError(f"missing input paths: {', '.join(missing)} (or give --data)")
        return InputPaths(Path(self.market), Path(self.clicks), Path(self.news), Path(self.calendar),
                          Path(self.aliases) if self.aliases else None)


def _read_toml(path: Optional[str]) -> dict:
    """Load the config file. A manifest.json from an earlier run is accepted
    too; its config echo is used as the [analysis] table."""
    if not path:
        return {}
    if str(path).endswith(".json"):
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("config"), dict):
            raise ConfigError(f"{path}: not a newsflow manifest")
        return {"analysis": doc["config"]}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def run_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults < [input]/[analysis]/[output] tables of the TOML file < flags."""
    doc = _read_toml(getattr(args, "config", None))
    merged: dict = {}
    for section in ("input", "analysis", "output"):
        table = doc.get(section, {})
        if not isinstance(table, dict):
            raise ConfigError(f"[{section}] must be a table")
        merged.update(table)
    known = {f.name for f in fields(RunConfig)}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys {sorted(unknown)}")
    merged = {k: v for k, v in merged.items() if v is not None}
    for name in known:
        value = getattr(args, name, None)
        if value is not None:
            merged[name] = value
    if isinstance(merged.get("lexicon"), str):
        merged["lexicon"] = [merged["lexicon"]]
    if isinstance(merged.get("scales"), (str, int)):
        merged["scales"] = [merged["scales"]]
    cfg = RunConfig(**merged)
    try:
        cfg.scales = [TimeScale.parse(s).label for s in cfg.scales]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not 0 < cfg.level < 1:
        raise ConfigError("level must lie in (0, 1)")
    if cfg.perms < 1 or cfg.max_lag < 1 or (cfg.lag is not None and cfg.lag < 1):
        raise ConfigError("perms, max_lag and lag must be positive")
    return cfg


def _lexicon(specs: Sequence[str]):
    lexes = [builtin_lexicon(s) if s in ("general", "financial", "merged") else load_lexicon(s) for s in specs]
    out = lexes[0]
    for lex in lexes[1:]:
        out = merge_lexicons(out, lex)
    return out


def _workers() -> int:
    raw = os.environ.get("NEWSFLOW_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"NEWSFLOW_WORKERS must be an integer, got {raw!r}") from None


# --------------------------------------------------------------------------- writers

def _write_csv(df: pd.DataFrame, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.10g")


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _long_tables(report: TestReport):
    corr_rows, gr_rows = [], []
    cut = report.bonferroni_level
    for c in report.companies:
        for p in CORRELATION_PAIRS:
            label = pair_label(p)
            res = report.correlations[c].get(label)
            if isinstance(res, CorrelationResult):
                corr_rows.append((c, label, res.rho, res.p_value, res.n, int(res.p_value < report.level),
                                  int(res.p_value < cut), ""))
            else:
                corr_rows.append((c, label, np.nan, np.nan, 0, 0, 0, res))
        for d in GRANGER_DIRECTIONS:
            label = direction_label(d)
            res = report.granger[c].get(label)
            if isinstance(res, GrangerResult):
                gr_rows.append((c, label, res.lag, res.f_stat, res.p_value, res.n_effective,
                                int(res.p_value < report.level), int(res.p_value < cut), ""))
            else:
                gr_rows.append((c, label, 0, np.nan, np.nan, 0, 0, 0, res))
    corr = pd.DataFrame(corr_rows, columns=["company", "pair", "rho", "p_value", "n", "reject_raw",
                                            "reject_bonferroni", "error"])
    gr = pd.DataFrame(gr_rows, columns=["company", "direction", "lag", "f_stat", "p_value", "n_effective",
                                        "reject_raw", "reject_bonferroni", "error"])
    return corr, gr


def _summary_tables(reports: Dict[str, TestReport]):
    """Percent of companies rejecting, one row per scale (raw and Bonferroni)."""
    corr_rows, gr_rows = [], []
    for label, rep in reports.items():
        s = rep.summary()
        corr_rows.append({"scale": label, **{f"{k} raw_pct": v["raw_pct"] for k, v in s["correlation"].items()},
                          **{f"{k} bonferroni_pct": v["bonferroni_pct"] for k, v in s["correlation"].items()}})
        gr_rows.append({"scale": label, **{f"{k} raw_pct": v["raw_pct"] for k, v in s["granger"].items()},
                        **{f"{k} bonferroni_pct": v["bonferroni_pct"] for k, v in s["granger"].items()}})
    return pd.DataFrame(corr_rows), pd.DataFrame(gr_rows)


def _company_seed(seed: int, company: str) -> int:
    return (int(seed) * 1_000_003 + zlib.crc32(company.encode("utf-8"))) % (2 ** 32)


def article_click_totals(data: Dataset, clicks: pd.DataFrame) -> Dict[str, np.ndarray]:
    """Total clicks per retained article, grouped by company (articles with no clicks are skipped)."""
    totals = clicks.groupby("article_id", sort=True)["clicks"].sum()
    per: Dict[str, List[int]] = {}
    for a in data.articles:
        n = int(totals.get(a.article_id, 0))
        if n > 0:
            for c in a.tagged_companies:
                per.setdefault(c, []).append(n)
    return {c: np.asarray(sorted(v), dtype=np.int64) for c, v in sorted(per.items())}


def run_tails(data: Dataset, clicks: pd.DataFrame, cfg: RunConfig, out: Path) -> List[Path]:
    samples = article_click_totals(data, clicks)
    fits, ccdf_rows = {}, []
    for company, x in samples.items():
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", DegenerateFitWarning)
                fits[company] = fit_tail(x, bootstrap=cfg.bootstrap, seed=_company_seed(cfg.seed, company))
        except (InsufficientTailError, ValueError) as exc:
            logger.info("tails: %s skipped (%s)", company, exc)
            continue
        pts = ccdf_points(x)
        ccdf_rows.append(pd.DataFrame({"ticker": company, "x": pts[:, 0], "ccdf": pts[:, 1]}))
    paths = [out / "tails" / "fits.csv", out / "tails" / "ccdf.csv"]
    _write_csv(fit_table(fits), paths[0])
    _write_csv(pd.concat(ccdf_rows, ignore_index=True) if ccdf_rows
               else pd.DataFrame(columns=["ticker", "x", "ccdf"]), paths[1])
    return paths


def run_attention(data: Dataset, clicks: pd.DataFrame, cfg: RunConfig, out: Path) -> List[Path]:
    curves = curves_from_clicks(publish_minutes(data.articles), clicks, cfg.horizon)
    deciles = decile_curves(curves)
    fits, errors = cohort_fits(deciles)
    for d, msg in errors.items():
        logger.warning("attention decile %d: %s", d, msg)
    paths = [out / "attention" / "curves.csv", out / "attention" / "fits.csv"]
    _write_csv(curves_frame(deciles), paths[0])
    _write_csv(fits_frame(fits), paths[1])
    return paths


def write_manifest(out: Path, cfg: RunConfig) -> Path:
    """sha256 of every output file (manifest excluded), plus the run config."""
    digests = {}
    for p in sorted(out.rglob("*")):
        if p.is_file() and p.name != "manifest.json":
            digests[p.relative_to(out).as_posix()] = hashlib.sha256(p.read_bytes()).hexdigest()
    cfg_dict = {k: v for k, v in cfg.__dict__.items() if k != "out"}
    path = out / "manifest.json"
    _write_json({"version": __version__, "config": cfg_dict, "files": digests}, path)
    return path


# --------------------------------------------------------------------------- commands

def _load(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.inputs(), _lexicon(cfg.lexicon))


def cmd_synth(args, cfg_doc: dict) -> int:
    settings = dict(cfg_doc.get("synth", {}))
    for name in ("n_companies", "n_days", "seed", "causal_fraction", "causal_strength", "causal_lag",
                 "causal_lag_unit", "click_alpha", "click_alpha_sd", "click_xmin"):
        value = getattr(args, name, None)
        if value is not None:
            settings[name] = value
    synth_cfg = SynthConfig.from_dict(settings)
    out = Path(args.out or "synth-data")
    paths = generate(synth_cfg, out)
    print(f"wrote synthetic data for {synth_cfg.n_companies} companies x {synth_cfg.n_days} days to {out}")
    for name, p in sorted(paths.items()):
        print(f"  {name}: {p}")
    return EXIT_OK


def cmd_ingest(args, cfg: RunConfig) -> int:
    data = _load(cfg)
    out = Path(cfg.out)
    for label in cfg.scales:
        scale = TimeScale.parse(label)
        profiles = {c: compute_profiles(m) for c, m in data.minutes.items()}
        for company, panel in build_panels(data, scale, profiles).items():
            write_panel(panel, data.calendar, out / "panels" / f"scale_{label}" / f"{company}.csv",
                        None if scale.is_daily else profiles[company])
    _write_json(data.summary(), out / "summary.json")
    write_manifest(out, cfg)
    print(json.dumps(data.summary(), sort_keys=True))
    return EXIT_OK


def cmd_analyze(args, cfg: RunConfig) -> int:
    data = _load(cfg)
    out = Path(cfg.out)
    workers = _workers()
    _write_json(data.summary(), out / "summary.json")
    profiles = {c: compute_profiles(m) for c, m in data.minutes.items()}
    reports = {}
    for label in cfg.scales:
        panels = build_panels(data, label, profiles)
        rep = run_test_battery(panels, label, cfg.level, n_perm=cfg.perms, max_lag=cfg.max_lag, lag=cfg.lag,
                               seed=cfg.seed, correlation_method=cfg.correlation_method, n_tests=cfg.n_tests,
                               workers=workers)
        reports[label] = rep
        d = out / f"scale_{label}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "report.json").write_text(rep.to_json(), encoding="utf-8")
        corr, gr = _long_tables(rep)
        _write_csv(corr, d / "correlations.csv")
        _write_csv(gr, d / "granger.csv")
        _write_csv(rep.correlation_matrix(), d / "correlation_matrix.csv")
        _write_csv(rep.granger_matrix(), d / "granger_matrix.csv")
        logger.info("scale %s: %d companies tested", label, len(rep.companies))
    corr_tab, gr_tab = _summary_tables(reports)
    _write_csv(corr_tab, out / "table_correlations.csv")
    _write_csv(gr_tab, out / "table_granger.csv")
    clicks = parse_clicks(cfg.inputs().clicks)
    if not args.skip_tails:
        run_tails(data, clicks, cfg, out)
    if not args.skip_attention:
        run_attention(data, clicks, cfg, out)
    manifest = write_manifest(out, cfg)
    print(f"analysis written to {out} ({len(cfg.scales)} scales, {len(data.companies)} companies); "
          f"manifest {manifest}")
    return EXIT_OK


def null_band(level: float, n: int, k_sigma: float = 2.0):
    """level +/- k_sigma binomial standard deviations for n companies."""
    sd = float(np.sqrt(level * (1.0 - level) / n))
    return max(0.0, level - k_sigma * sd), min(1.0, level + k_sigma * sd)


def validate_results(results: Path, truth: dict, scale: str, min_power: float = 0.8, max_fp: float = 0.1,
                     direction: str = "WS->R") -> dict:
    """Compare a report with ground truth.

    Without planted companies every test's raw rejection rate must fall in
    the null band (level +/- 2 binomial sd). With planted companies the
    ``direction`` detections must reach ``min_power`` on planted companies
    and stay at or below ``max_fp`` on the others.
    """
    path = results / f"scale_{scale}" / "report.json"
    report = json.loads(path.read_text(encoding="utf-8"))
    truth_companies = sorted(c["ticker"] for c in truth.get("companies", []))
    if sorted(report["companies"]) != truth_companies:
        missing = sorted(set(truth_companies) ^ set(report["companies"]))[:5]
        raise ConfigError(f"ground truth does not match {path}: company sets differ (e.g. {missing})")
    causal = set(truth["causal_companies"])
    n = len(report["companies"])
    checks = []
    if not causal:
        lo, hi = null_band(report["level"], n)
        for kind in ("correlation", "granger"):
            for label, flags in sorted(report["flags"][kind].items()):
                rate = float(np.mean(list(flags["raw"].values())))
                checks.append({"test": label, "value": rate, "low": lo, "high": hi, "passed": lo <= rate <= hi})
    else:
        flags = report["flags"]["granger"][direction]["raw"]
        planted = [c for c in sorted(flags) if c in causal]
        other = [c for c in sorted(flags) if c not in causal]
        power = float(np.mean([flags[c] for c in planted]))
        checks.append({"test": f"{direction} power", "value": power, "low": min_power, "high": 1.0,
                       "passed": power >= min_power})
        if other:
            fp = float(np.mean([flags[c] for c in other]))
            checks.append({"test": f"{direction} false positives", "value": fp, "low": 0.0, "high": max_fp,
                           "passed": fp <= max_fp})
    return {"scale": scale, "n_companies": n, "n_planted": len(causal), "checks": checks,
            "passed": all(c["passed"] for c in checks)}


def cmd_validate(args, cfg_doc: dict) -> int:
    truth = load_ground_truth(args.truth)
    res = validate_results(Path(args.results), truth, TimeScale.parse(args.scale).label, args.min_power, args.max_fp)
    mode = "null calibration" if not res["n_planted"] else f"{res['n_planted']} planted companies"
    print(f"scale {res['scale']}, {res['n_companies']} companies, {mode}")
    for c in res["checks"]:
        print(f"  {c['test']:<20} {c['value']:.3f} in [{c['low']:.3f}, {c['high']:.3f}] "
              f"{'ok' if c['passed'] else 'FAIL'}")
    print("PASS" if res["passed"] else "FAIL")
    return EXIT_OK if res["passed"] else EXIT_VALIDATION


def cmd_tails(args, cfg: RunConfig) -> int:
    data = _load(cfg)
    paths = run_tails(data, parse_clicks(cfg.inputs().clicks), cfg, Path(cfg.out))
    print(f"tail fits written to {paths[0]}")
    return EXIT_OK


def cmd_attention(args, cfg: RunConfig) -> int:
    data = _load(cfg)
    paths = run_attention(data, parse_clicks(cfg.inputs().clicks), cfg, Path(cfg.out))
    print(f"attention curves written to {paths[0]}, fits to {paths[1]}")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def _input_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inputs")
    g.add_argument("--data", dest="data_dir", help="directory with market.csv, clicks.csv, news.jsonl, "
                                                   "trading_days.txt and optional aliases.csv")
    g.add_argument("--market")
    g.add_argument("--clicks")
    g.add_argument("--news")
    g.add_argument("--calendar", help="trading-day file, one ISO date per line")
    g.add_argument("--aliases")
    g.add_argument("--lexicon", action="append",
                   help="general, financial, merged or a CSV path; repeat to merge (default merged)")


def _analysis_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", dest="scales", action="append",
                   help="time scale in minutes (1, 10, 30, 65, 130) or 'daily'; repeatable (default all)")
    p.add_argument("--level", type=float)
    p.add_argument("--perms", type=int, help="permutations per correlation test")
    p.add_argument("--max-lag", type=int)
    p.add_argument("--lag", type=int, help="fixed Granger lag (default: BIC choice up to --max-lag)")
    p.add_argument("--n-tests", type=int, help="Bonferroni divisor (default: number of companies)")
    p.add_argument("--correlation-method", choices=["permutation", "asymptotic"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="newsflow", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML file with [input], [analysis], [output] and [synth] tables")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")

    p = sub.add_parser("synth", help="generate synthetic inputs with planted ground truth")
    common(p)
    p.add_argument("--n-companies", type=int)
    p.add_argument("--n-days", type=int)
    p.add_argument("--causal-fraction", type=float)
    p.add_argument("--causal-strength", type=float)
    p.add_argument("--causal-lag", type=int)
    p.add_argument("--causal-lag-unit", type=int)
    p.add_argument("--click-alpha", type=float)
    p.add_argument("--click-alpha-sd", type=float)
    p.add_argument("--click-xmin", type=int)

    p = sub.add_parser("ingest", help="parse inputs and cache per-company panels")
    common(p)
    _input_flags(p)
    p.add_argument("--scale", dest="scales", action="append")

    p = sub.add_parser("analyze", help="run the full pipeline and write reports")
    common(p)
    _input_flags(p)
    _analysis_flags(p)
    p.add_argument("--bootstrap", type=int, help="bootstrap replicates for x_min uncertainty")
    p.add_argument("--skip-tails", action="store_true")
    p.add_argument("--skip-attention", action="store_true")

    p = sub.add_parser("validate", help="compare analyze output with synthetic ground truth")
    p.add_argument("--config")
    p.add_argument("--results", required=True, help="analyze output directory")
    p.add_argument("--truth", required=True, help="ground_truth.json from synth")
    p.add_argument("--scale", default="65")
    p.add_argument("--min-power", type=float, default=0.8)
    p.add_argument("--max-fp", type=float, default=0.1)

    p = sub.add_parser("tails", help="power-law fits of clicks per article")
    common(p)
    _input_flags(p)
    p.add_argument("--bootstrap", type=int)

    p = sub.add_parser("attention", help="decile attention curves and time-scale fits")
    common(p)
    _input_flags(p)
    p.add_argument("--horizon", type=int, help="minutes after publication (default 300)")
    return parser


_COMMANDS = {"ingest": cmd_ingest, "analyze": cmd_analyze, "tails": cmd_tails, "attention": cmd_attention}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args, _read_toml(args.config))
        if args.command == "validate":
            return cmd_validate(args, _read_toml(args.config))
        return _COMMANDS[args.command](args, run_config(args))
    except (ConfigError, ValueError) as exc:
        # IngestError, DataError, CalendarError and config errors all derive from ValueError
        print(f"newsflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigError) else EXIT_DATA
    except FileNotFoundError as exc:
        print(f"newsflow: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
