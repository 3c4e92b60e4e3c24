"""Quote-file ingestion and run configuration.

Quote files are UTF-8 CSV with the header
``expiry_date,strike,type,iv,open_interest`` (an optional trailing
``trade_date`` column overrides the market trade date per row).  Implied
vols are fractions, not percents.  Year fractions use ACT/365.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

from .calibration import FitConfig, Quote, QuoteSet, select_liquid
from .errors import QuoteFormatError
from .pricing import MarketContext, OptionType

_REQUIRED_COLUMNS = ("expiry_date", "strike", "type", "iv", "open_interest")
_MAX_IV = 5.0
DAYS_PER_YEAR = 365.0


@dataclass(frozen=True)
class MarketConfig:
    spot: float
    rate: float
    trade_date: dt.date

    def context(self) -> MarketContext:
        return MarketContext(s0=self.spot, r=self.rate, t0=0.0)


def year_fraction(start: dt.date, end: dt.date) -> float:
    return (end - start).days / DAYS_PER_YEAR


def load_quotes(path, market: MarketConfig) -> QuoteSet:
    """Parse a quote CSV, compute ACT/365 expiries, keep the liquid quotes."""
    path = Path(path)
    quotes: list[Quote] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise QuoteFormatError("empty quote file")
        missing = [c for c in _REQUIRED_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise QuoteFormatError(f"missing columns: {', '.join(missing)}")
        for row in reader:
            line = reader.line_num
            quotes.append(_parse_row(row, market, line))
    if not quotes:
        raise QuoteFormatError("quote file contains no data rows")
    raw = QuoteSet(tuple(quotes), market.context())
    return select_liquid(raw)


def _parse_row(row: dict, market: MarketConfig, line: int) -> Quote:
    try:
        expiry_date = dt.date.fromisoformat(row["expiry_date"].strip())
        strike = float(row["strike"])
        kind = OptionType.parse(row["type"])
        iv = float(row["iv"])
        open_interest = int(row["open_interest"])
        trade_raw = (row.get("trade_date") or "").strip()
        trade_date = dt.date.fromisoformat(trade_raw) if trade_raw else market.trade_date
    except (KeyError, ValueError, TypeError) as exc:
        raise QuoteFormatError(str(exc), line=line) from exc
    if strike <= 0:
        raise QuoteFormatError(f"strike must be positive, got {strike}", line=line)
    if iv <= 0:
        raise QuoteFormatError(f"iv must be positive, got {iv}", line=line)
    if iv > _MAX_IV:
        raise QuoteFormatError(
            f"iv {iv} looks like a percentage; quotes must be fractions", line=line
        )
    if expiry_date <= trade_date:
        raise QuoteFormatError(
            f"expiry {expiry_date} must be after the trade date {trade_date}", line=line
        )
    if open_interest < 0:
        raise QuoteFormatError(f"open interest must be nonnegative, got {open_interest}", line=line)
    return Quote(
        expiry=year_fraction(trade_date, expiry_date),
        strike=strike,
        iv=iv,
        kind=kind,
        open_interest=open_interest,
    )


@dataclass(frozen=True)
class RunConfig:
    """Flat key-value configuration for the command line."""

    market: MarketConfig
    fit: FitConfig = field(default_factory=FitConfig)
    m_max: float = 0.5
    grid_lo: float = 0.3
    grid_hi: float = 3.0
    grid_points: int = 201


_CONFIG_KEYS = {
    "spot",
    "rate",
    "trade_date",
    "model",
    "randomizer",
    "n_q",
    "beta",
    "engine",
    "budget",
    "multistart",
    "seed",
    "m_max",
    "grid_lo",
    "grid_hi",
    "grid_points",
}


def parse_config(path) -> RunConfig:
    """Parse a ``key = value`` config file; '#' starts a comment."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _CONFIG_KEYS:
            raise ValueError(f"config line {lineno}: unknown key {key!r}")
        entries[key] = value.strip()

    for required in ("spot", "rate", "trade_date"):
        if required not in entries:
            raise ValueError(f"config is missing the required key {required!r}")
    market = MarketConfig(
        spot=float(entries["spot"]),
        rate=float(entries["rate"]),
        trade_date=dt.date.fromisoformat(entries["trade_date"]),
    )
    fixed = {"beta": float(entries.get("beta", 0.9))}
    fit = FitConfig(
        model=entries.get("model", "sabr"),
        randomizer=entries.get("randomizer", "gamma-gamma"),
        n_q=int(entries.get("n_q", 2)),
        fixed=fixed,
        engine=entries.get("engine"),
        budget=int(entries.get("budget", 2000)),
        multistart=int(entries.get("multistart", 8)),
        seed=int(entries.get("seed", 0)),
    )
    return RunConfig(
        market=market,
        fit=fit,
        m_max=float(entries.get("m_max", 0.5)),
        grid_lo=float(entries.get("grid_lo", 0.3)),
        grid_hi=float(entries.get("grid_hi", 3.0)),
        grid_points=int(entries.get("grid_points", 201)),
    )
