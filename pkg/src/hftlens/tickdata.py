"""Tick records, CSV parsing/serialization, and synthetic labeled markets.

Timestamps are integer nanoseconds since midnight ET. The market-hours
filter [09:30, 16:00) is applied by downstream feature code, never here.
CSV is the only tick interchange format; schemas are documented in
`TRADE_COLUMNS` / `QUOTE_COLUMNS` below.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

NS_PER_SEC = 1_000_000_000
DAY_NS = 86_400 * NS_PER_SEC
SESSION_OPEN_NS = 34_200 * NS_PER_SEC  # 09:30:00 ET
SESSION_CLOSE_NS = 57_600 * NS_PER_SEC  # 16:00:00 ET

PROFILES = ("HH", "HN", "NH", "NN")
_PROFILE_CODE = {p: i for i, p in enumerate(PROFILES)}

TRADE_COLUMNS = ("stock", "date", "ts_ns", "price", "size", "iso", "venue")
LABELED_TRADE_COLUMNS = TRADE_COLUMNS + ("profile",)
QUOTE_COLUMNS = ("stock", "date", "ts_ns", "bid", "bid_sz", "ask", "ask_sz")


class TickDataError(Exception):
    """Base class for tick-data failures."""


class SchemaError(TickDataError):
    """CSV header does not match the documented schema."""


class NonMonotoneError(TickDataError):
    """Timestamps regress within a (stock, date) group."""


class UndefinedTargetError(TickDataError):
    """Target fractions are undefined (no trades)."""


class ConfigError(TickDataError):
    """Invalid synthetic-market configuration."""


def subpenny_remainder(price: float) -> float:
    """Remainder of price modulo one cent, computed in integer micro-dollars.

    Prices carry at most 6 fraction digits (CSV schema), so ``round(price*1e6)``
    is exact and avoids float-mod artifacts near penny boundaries.
    """
    return (round(price * 1_000_000) % 10_000) / 1_000_000


@dataclass(frozen=True)
class Trade:
    """One trade print."""

    ts_ns: int
    price: float
    size: int
    iso_flag: bool = False
    venue_code: str = "Q"

    def __post_init__(self):
        if not 0 <= self.ts_ns < DAY_NS:
            raise ValueError(f"ts_ns {self.ts_ns} outside [0, 86400e9)")
        if not self.price > 0:
            raise ValueError(f"price must be positive, got {self.price}")
        if not self.size > 0:
            raise ValueError(f"size must be positive, got {self.size}")
        if len(self.venue_code) != 1:
            raise ValueError(f"venue_code must be a single character, got {self.venue_code!r}")

    @property
    def subpenny(self) -> float:
        return subpenny_remainder(self.price)


@dataclass(frozen=True)
class LabeledTrade(Trade):
    """Trade with the NASDAQ-style liquidity profile of its two parties."""

    liquidity_profile: str = "NN"

    def __post_init__(self):
        super().__post_init__()
        if self.liquidity_profile not in PROFILES:
            raise ValueError(f"liquidity_profile must be one of {PROFILES}")


@dataclass(frozen=True)
class Quote:
    """One NBBO update. Crossed books (bid >= ask) are permitted but flagged."""

    ts_ns: int
    bid: float
    ask: float
    bid_sz: int = 0
    ask_sz: int = 0

    def __post_init__(self):
        if not 0 <= self.ts_ns < DAY_NS:
            raise ValueError(f"ts_ns {self.ts_ns} outside [0, 86400e9)")
        if not (self.bid > 0 and self.ask > 0):
            raise ValueError("bid and ask must be positive")
        if self.bid_sz < 0 or self.ask_sz < 0:
            raise ValueError("quote sizes must be non-negative")

    @property
    def mid(self) -> float:
        return (self.bid + self.ask) / 2.0

    @property
    def crossed(self) -> bool:
        return self.bid >= self.ask


class TradeColumns:
    """Column-oriented trade store for one stock-day (immutable arrays)."""

    __slots__ = ("ts_ns", "price", "size", "iso", "venue", "profile")

    def __init__(self, ts_ns, price, size, iso, venue, profile=None):
        self.ts_ns = np.ascontiguousarray(ts_ns, dtype=np.int64)
        self.price = np.ascontiguousarray(price, dtype=np.float64)
        self.size = np.ascontiguousarray(size, dtype=np.int64)
        self.iso = np.ascontiguousarray(iso, dtype=np.bool_)
        self.venue = np.asarray(venue, dtype="U1")
        self.profile = None if profile is None else np.ascontiguousarray(profile, dtype=np.int8)
        n = len(self.ts_ns)
        for name in ("price", "size", "iso", "venue"):
            if len(getattr(self, name)) != n:
                raise ValueError("trade columns have mismatched lengths")
        if self.profile is not None and len(self.profile) != n:
            raise ValueError("trade columns have mismatched lengths")
        if n:
            if self.ts_ns[0] < 0 or self.ts_ns[-1] >= DAY_NS:
                raise ValueError("trade ts_ns outside [0, 86400e9)")
            if np.any(np.diff(self.ts_ns) < 0):
                raise ValueError("trade timestamps are not non-decreasing")
            if np.any(self.price <= 0) or np.any(self.size <= 0):
                raise ValueError("trade prices and sizes must be positive")
            if self.profile is not None and (self.profile.min() < 0 or self.profile.max() > 3):
                raise ValueError("trade profile codes must be in 0..3")
        for a in (self.ts_ns, self.price, self.size, self.iso, self.profile):
            if a is not None:
                a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ts_ns)

    @property
    def labeled(self) -> bool:
        return self.profile is not None

    def record(self, i: int) -> Trade:
        """Row view as a scalar record (labeled when profiles are present)."""
        base = dict(
            ts_ns=int(self.ts_ns[i]),
            price=float(self.price[i]),
            size=int(self.size[i]),
            iso_flag=bool(self.iso[i]),
            venue_code=str(self.venue[i]),
        )
        if self.profile is None:
            return Trade(**base)
        return LabeledTrade(liquidity_profile=PROFILES[self.profile[i]], **base)

    @classmethod
    def from_records(cls, trades) -> "TradeColumns":
        trades = list(trades)
        labeled = any(isinstance(t, LabeledTrade) for t in trades)
        if labeled and not all(isinstance(t, LabeledTrade) for t in trades):
            raise ValueError("cannot mix labeled and unlabeled trades")
        return cls(
            ts_ns=[t.ts_ns for t in trades],
            price=[t.price for t in trades],
            size=[t.size for t in trades],
            iso=[t.iso_flag for t in trades],
            venue=[t.venue_code for t in trades],
            profile=[_PROFILE_CODE[t.liquidity_profile] for t in trades] if labeled else None,
        )

    def equals(self, other: "TradeColumns") -> bool:
        if len(self) != len(other) or self.labeled != other.labeled:
            return False
        same = (
            np.array_equal(self.ts_ns, other.ts_ns)
            and np.array_equal(self.price, other.price)
            and np.array_equal(self.size, other.size)
            and np.array_equal(self.iso, other.iso)
            and np.array_equal(self.venue, other.venue)
        )
        if same and self.labeled:
            same = np.array_equal(self.profile, other.profile)
        return same


class QuoteColumns:
    """Column-oriented NBBO store for one stock-day (immutable arrays)."""

    __slots__ = ("ts_ns", "bid", "bid_sz", "ask", "ask_sz")

    def __init__(self, ts_ns, bid, bid_sz, ask, ask_sz):
        self.ts_ns = np.ascontiguousarray(ts_ns, dtype=np.int64)
        self.bid = np.ascontiguousarray(bid, dtype=np.float64)
        self.bid_sz = np.ascontiguousarray(bid_sz, dtype=np.int64)
        self.ask = np.ascontiguousarray(ask, dtype=np.float64)
        self.ask_sz = np.ascontiguousarray(ask_sz, dtype=np.int64)
        n = len(self.ts_ns)
        for name in ("bid", "bid_sz", "ask", "ask_sz"):
            if len(getattr(self, name)) != n:
                raise ValueError("quote columns have mismatched lengths")
        if n:
            if self.ts_ns[0] < 0 or self.ts_ns[-1] >= DAY_NS:
                raise ValueError("quote ts_ns outside [0, 86400e9)")
            if np.any(np.diff(self.ts_ns) < 0):
                raise ValueError("quote timestamps are not non-decreasing")
            if np.any(self.bid <= 0) or np.any(self.ask <= 0):
                raise ValueError("bid and ask must be positive")
            if np.any(self.bid_sz < 0) or np.any(self.ask_sz < 0):
                raise ValueError("quote sizes must be non-negative")
        for a in (self.ts_ns, self.bid, self.bid_sz, self.ask, self.ask_sz):
            a.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ts_ns)

    @property
    def mid(self) -> np.ndarray:
        return (self.bid + self.ask) / 2.0

    @property
    def crossed(self) -> np.ndarray:
        return self.bid >= self.ask

    def record(self, i: int) -> Quote:
        return Quote(
            ts_ns=int(self.ts_ns[i]),
            bid=float(self.bid[i]),
            ask=float(self.ask[i]),
            bid_sz=int(self.bid_sz[i]),
            ask_sz=int(self.ask_sz[i]),
        )

    @classmethod
    def from_records(cls, quotes) -> "QuoteColumns":
        quotes = list(quotes)
        return cls(
            ts_ns=[q.ts_ns for q in quotes],
            bid=[q.bid for q in quotes],
            bid_sz=[q.bid_sz for q in quotes],
            ask=[q.ask for q in quotes],
            ask_sz=[q.ask_sz for q in quotes],
        )

    def equals(self, other: "QuoteColumns") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.ts_ns, other.ts_ns)
            and np.array_equal(self.bid, other.bid)
            and np.array_equal(self.bid_sz, other.bid_sz)
            and np.array_equal(self.ask, other.ask)
            and np.array_equal(self.ask_sz, other.ask_sz)
        )


_EMPTY_TRADES = None
_EMPTY_QUOTES = None


def _empty_trades() -> TradeColumns:
    global _EMPTY_TRADES
    if _EMPTY_TRADES is None:
        _EMPTY_TRADES = TradeColumns([], [], [], [], [])
    return _EMPTY_TRADES


def _empty_quotes() -> QuoteColumns:
    global _EMPTY_QUOTES
    if _EMPTY_QUOTES is None:
        _EMPTY_QUOTES = QuoteColumns([], [], [], [], [])
    return _EMPTY_QUOTES


@dataclass
class TickSeries:
    """Time-ordered trades and NBBO quotes for one stock-day."""

    stock_id: str
    date: dt.date
    trades: TradeColumns = field(default_factory=_empty_trades)
    quotes: QuoteColumns = field(default_factory=_empty_quotes)

    @classmethod
    def from_records(cls, stock_id, date, trades=(), quotes=()) -> "TickSeries":
        return cls(
            stock_id=stock_id,
            date=date,
            trades=TradeColumns.from_records(trades),
            quotes=QuoteColumns.from_records(quotes),
        )

    def equals(self, other: "TickSeries") -> bool:
        return (
            self.stock_id == other.stock_id
            and self.date == other.date
            and self.trades.equals(other.trades)
            and self.quotes.equals(other.quotes)
        )


@dataclass(frozen=True)
class TargetPair:
    """HFT volume fractions: demanding (HH+HN) and supplying (HH+NH)."""

    hft_d: float
    hft_s: float

    def __post_init__(self):
        if not (0.0 <= self.hft_d <= 1.0 and 0.0 <= self.hft_s <= 1.0):
            raise ValueError("target fractions must lie in [0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    """Synthetic labeled-market parameters.

    Per-day latent state (trade intensity, depth, volatility) is drawn
    uniformly from the configured ranges; the probabilities that a trade's
    aggressor/resting side is an HFT are logistic in the standardized
    latents, so the daily feature -> target mapping is smooth, nonlinear
    and learnable. Generation is deterministic: each (stock, day) runs on
    its own PCG64 substream derived from SeedSequence(seed, spawn_key).
    """

    n_stocks: int = 10
    n_days: int = 5
    seed: int = 0
    base_midprice: float = 40.0
    volatility_range: tuple[float, float] = (0.002, 0.02)
    trade_intensity_range: tuple[float, float] = (300.0, 2000.0)
    quote_trade_ratio: float = 2.0
    depth_range: tuple[float, float] = (200.0, 5000.0)
    size_range: tuple[int, int] = (50, 500)
    demand_intercept: float = -0.8
    demand_slopes: tuple[float, float, float] = (0.9, -0.6, 0.4)
    supply_intercept: float = -1.3
    supply_slopes: tuple[float, float, float] = (0.5, 1.0, -0.3)
    iso_prob: float = 0.08
    retail_prob: float = 0.06
    start_date: dt.date = dt.date(2010, 1, 4)

    def __post_init__(self):
        if self.n_stocks < 1 or self.n_days < 1:
            raise ConfigError("n_stocks and n_days must be positive")
        for lo, hi, name in (
            (*self.volatility_range, "volatility_range"),
            (*self.trade_intensity_range, "trade_intensity_range"),
            (*self.depth_range, "depth_range"),
        ):
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{name} must be a finite (lo, hi) with lo <= hi")
        if self.trade_intensity_range[0] <= 0 or self.depth_range[0] <= 0:
            raise ConfigError("intensities must be strictly positive")
        if self.volatility_range[0] < 0:
            raise ConfigError("volatility must be non-negative")
        if self.quote_trade_ratio <= 0:
            raise ConfigError("quote_trade_ratio must be strictly positive")
        if self.size_range[0] < 1 or self.size_range[0] > self.size_range[1]:
            raise ConfigError("size_range must satisfy 1 <= lo <= hi")
        if not (0.0 <= self.iso_prob <= 1.0 and 0.0 <= self.retail_prob <= 1.0):
            raise ConfigError("probabilities must lie in [0, 1]")
        coeffs = (
            self.demand_intercept,
            self.supply_intercept,
            *self.demand_slopes,
            *self.supply_slopes,
        )
        if not all(math.isfinite(c) for c in coeffs):
            raise ConfigError("link coefficients must be finite")
        if self.base_midprice <= 0.05:
            raise ConfigError("base_midprice must exceed 0.05")


@dataclass
class ParseReport:
    """Row-level outcome of a parse: rejects carry (line_number, reason)."""

    n_rows: int = 0
    n_rejected: int = 0
    rejects: list = field(default_factory=list)
    crossed_quotes: int = 0


def _reject_mask(df: pd.DataFrame, kind: str):
    """Vectorized row validation. Returns (numeric frame, reject reason per row)."""
    reasons = pd.Series("", index=df.index, dtype=object)

    def flag(mask, reason):
        fresh = mask & (reasons == "")
        reasons[fresh] = reason

    out = {}
    out["date"] = pd.to_datetime(df["date"], format="%Y-%m-%d", errors="coerce")
    flag(out["date"].isna(), "bad date")
    out["ts_ns"] = pd.to_numeric(df["ts_ns"], errors="coerce")
    flag(out["ts_ns"].isna() | (out["ts_ns"] % 1 != 0), "bad ts_ns")
    flag((out["ts_ns"] < 0) | (out["ts_ns"] >= DAY_NS), "ts_ns out of range")
    flag(df["stock"].str.len() == 0, "empty stock")

    if kind == "quotes":
        for col in ("bid", "ask"):
            out[col] = pd.to_numeric(df[col], errors="coerce")
            flag(out[col].isna(), f"bad {col}")
            flag(out[col] <= 0, f"non-positive {col}")
        for col in ("bid_sz", "ask_sz"):
            out[col] = pd.to_numeric(df[col], errors="coerce")
            flag(out[col].isna() | (out[col] % 1 != 0), f"bad {col}")
            flag(out[col] < 0, f"negative {col}")
    else:
        out["price"] = pd.to_numeric(df["price"], errors="coerce")
        flag(out["price"].isna(), "bad price")
        flag(out["price"] <= 0, "non-positive price")
        out["size"] = pd.to_numeric(df["size"], errors="coerce")
        flag(out["size"].isna() | (out["size"] % 1 != 0), "bad size")
        flag(out["size"] <= 0, "non-positive size")
        out["iso"] = pd.to_numeric(df["iso"], errors="coerce")
        flag(~out["iso"].isin([0, 1]), "bad iso flag")
        flag(df["venue"].str.len() != 1, "bad venue")
        if kind == "labeled":
            flag(~df["profile"].isin(PROFILES), "bad profile")
    return out, reasons


def parse_tick_file(path, kind: str, sort: bool = False):
    """Parse a tick CSV into per-(stock, date) series.

    kind is one of {"trades", "quotes", "labeled"}. Malformed rows are
    rejected and reported with their 1-based line numbers; an unknown or
    missing column raises SchemaError; timestamps that regress within a
    group raise NonMonotoneError unless sort=True.

    Returns (list of TickSeries ordered by (stock_id, date), ParseReport).
    """
    if kind not in ("trades", "quotes", "labeled"):
        raise ValueError(f"unknown kind {kind!r}")
    expected = {"trades": TRADE_COLUMNS, "labeled": LABELED_TRADE_COLUMNS, "quotes": QUOTE_COLUMNS}[kind]

    df = pd.read_csv(path, dtype=str, keep_default_na=False, skip_blank_lines=False)
    got = tuple(df.columns)
    if set(got) != set(expected):
        unknown = sorted(set(got) - set(expected))
        missing = sorted(set(expected) - set(got))
        raise SchemaError(
            f"header mismatch for kind={kind}: unknown columns {unknown}, missing columns {missing}"
        )
    df = df[list(expected)]

    report = ParseReport(n_rows=len(df))
    if len(df) == 0:
        return [], report

    numeric, reasons = _reject_mask(df, kind)
    bad = reasons != ""
    report.n_rejected = int(bad.sum())
    report.rejects = [(int(i) + 2, r) for i, r in reasons[bad].items()]

    keep = ~bad
    lines = (df.index.to_numpy() + 2)[keep]
    stock = df["stock"].to_numpy()[keep]
    date = numeric["date"].dt.date.to_numpy()[keep]
    ts = numeric["ts_ns"].to_numpy(dtype=np.float64)[keep].astype(np.int64)

    cols = {}
    if kind == "quotes":
        for c in ("bid", "ask"):
            cols[c] = numeric[c].to_numpy(dtype=np.float64)[keep]
        for c in ("bid_sz", "ask_sz"):
            cols[c] = numeric[c].to_numpy(dtype=np.float64)[keep].astype(np.int64)
    else:
        cols["price"] = numeric["price"].to_numpy(dtype=np.float64)[keep]
        cols["size"] = numeric["size"].to_numpy(dtype=np.float64)[keep].astype(np.int64)
        cols["iso"] = numeric["iso"].to_numpy(dtype=np.float64)[keep].astype(bool)
        cols["venue"] = df["venue"].to_numpy()[keep]
        if kind == "labeled":
            prof = df["profile"].to_numpy()[keep]
            cols["profile"] = np.array([_PROFILE_CODE[p] for p in prof], dtype=np.int8)

    order = np.lexsort((np.arange(len(stock)), date, stock))
    stock, date, ts, lines = stock[order], date[order], ts[order], lines[order]
    cols = {k: v[order] for k, v in cols.items()}

    series = []
    if len(stock):
        group_key = np.array([f"{s}\x00{d}" for s, d in zip(stock, date)])
        boundaries = np.flatnonzero(np.concatenate(([True], group_key[1:] != group_key[:-1])))
        boundaries = np.append(boundaries, len(stock))
        for g in range(len(boundaries) - 1):
            lo, hi = boundaries[g], boundaries[g + 1]
            g_ts = ts[lo:hi]
            g_lines = lines[lo:hi]
            if np.any(np.diff(g_ts) < 0):
                if not sort:
                    offender = int(g_lines[1:][np.diff(g_ts) < 0][0])
                    raise NonMonotoneError(f"non-monotone at line {offender}")
                sub = np.argsort(g_ts, kind="stable")
            else:
                sub = np.arange(hi - lo)
            take = np.arange(lo, hi)[sub]
            if kind == "quotes":
                q = QuoteColumns(
                    ts[take], cols["bid"][take], cols["bid_sz"][take],
                    cols["ask"][take], cols["ask_sz"][take],
                )
                report.crossed_quotes += int(np.count_nonzero(q.crossed))
                series.append(TickSeries(stock[lo], date[lo], quotes=q))
            else:
                t = TradeColumns(
                    ts[take], cols["price"][take], cols["size"][take],
                    cols["iso"][take], cols["venue"][take],
                    cols["profile"][take] if kind == "labeled" else None,
                )
                series.append(TickSeries(stock[lo], date[lo], trades=t))
    return series, report


def _format_price(x: float) -> str:
    # repr gives the shortest exact round-trip form; schema allows <= 6 digits
    return repr(float(x))


def write_tick_file(series_list, path, kind: str) -> None:
    """Serialize series to the documented CSV schema (deterministic bytes)."""
    if kind not in ("trades", "quotes", "labeled"):
        raise ValueError(f"unknown kind {kind!r}")
    header = {"trades": TRADE_COLUMNS, "labeled": LABELED_TRADE_COLUMNS, "quotes": QUOTE_COLUMNS}[kind]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for s in sorted(series_list, key=lambda x: (x.stock_id, x.date)):
            d = s.date.isoformat()
            if kind == "quotes":
                q = s.quotes
                for i in range(len(q)):
                    fh.write(
                        f"{s.stock_id},{d},{q.ts_ns[i]},{_format_price(q.bid[i])},"
                        f"{q.bid_sz[i]},{_format_price(q.ask[i])},{q.ask_sz[i]}\n"
                    )
            else:
                t = s.trades
                if kind == "labeled" and not t.labeled:
                    raise ValueError("labeled output requested but trades carry no profiles")
                for i in range(len(t)):
                    row = (
                        f"{s.stock_id},{d},{t.ts_ns[i]},{_format_price(t.price[i])},"
                        f"{t.size[i]},{int(t.iso[i])},{t.venue[i]}"
                    )
                    if kind == "labeled":
                        row += f",{PROFILES[t.profile[i]]}"
                    fh.write(row + "\n")


def _standardize(value: float, lo: float, hi: float) -> float:
    # z-score under the uniform latent draw; degenerate range -> 0
    if hi <= lo:
        return 0.0
    return (value - (lo + hi) / 2.0) / ((hi - lo) / math.sqrt(12.0))


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def synth_stock_day(config: SynthConfig, stock_index: int, day_index: int):
    """Generate one labeled stock-day plus its latent-state record.

    The substream depends only on (seed, stock_index, day_index), so output
    is independent of generation order or parallel schedule.
    """
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(stock_index, day_index))
    )
    stock_id = f"S{stock_index:04d}"
    date = config.start_date + dt.timedelta(days=day_index)

    vol = rng.uniform(*config.volatility_range)
    intensity = rng.uniform(*config.trade_intensity_range)
    depth = rng.uniform(*config.depth_range)

    session = SESSION_CLOSE_NS - SESSION_OPEN_NS
    n_quotes = int(rng.poisson(intensity * config.quote_trade_ratio)) + 1
    q_ts = np.sort(rng.integers(SESSION_OPEN_NS, SESSION_CLOSE_NS, size=n_quotes - 1))
    q_ts = np.concatenate(([SESSION_OPEN_NS], q_ts)).astype(np.int64)

    steps = rng.normal(0.0, vol / math.sqrt(max(n_quotes, 2)), size=n_quotes)
    steps[0] = 0.0
    mid = config.base_midprice * np.exp(np.cumsum(steps))
    mid = np.maximum(np.round(mid * 100.0) / 100.0, 0.05)
    half_spread = rng.integers(1, 4, size=n_quotes) / 100.0
    bid = np.round((mid - half_spread) * 100.0) / 100.0
    ask = np.round((mid + half_spread) * 100.0) / 100.0
    bid = np.maximum(bid, 0.01)
    bid_sz = rng.poisson(depth, size=n_quotes) + 1
    ask_sz = rng.poisson(depth, size=n_quotes) + 1
    quotes = QuoteColumns(q_ts, bid, bid_sz, ask, ask_sz)

    n_trades = int(rng.poisson(intensity)) + 1
    t_ts = np.sort(rng.integers(SESSION_OPEN_NS, SESSION_CLOSE_NS, size=n_trades)).astype(np.int64)
    buy = rng.random(n_trades) < 0.5
    qidx = np.searchsorted(q_ts, t_ts, side="right") - 1
    price = np.where(buy, ask[qidx], bid[qidx])
    retail = rng.random(n_trades) < config.retail_prob
    sub_off = rng.integers(1, 4, size=n_trades) / 1000.0
    price = np.where(retail & buy, ask[qidx] - sub_off, price)
    price = np.where(retail & ~buy, bid[qidx] + sub_off, price)
    price = np.round(price * 1_000_000) / 1_000_000
    venue_pool = np.array(list("QNPZT"))
    venue = venue_pool[rng.integers(0, len(venue_pool), size=n_trades)]
    venue = np.where(retail, "D", venue)
    iso = rng.random(n_trades) < config.iso_prob
    size = rng.integers(config.size_range[0], config.size_range[1] + 1, size=n_trades)

    z = (
        _standardize(intensity, *config.trade_intensity_range),
        _standardize(depth, *config.depth_range),
        _standardize(vol, *config.volatility_range),
    )
    pi_d = _logistic(config.demand_intercept + sum(a * b for a, b in zip(config.demand_slopes, z)))
    pi_s = _logistic(config.supply_intercept + sum(a * b for a, b in zip(config.supply_slopes, z)))
    aggressor_hft = rng.random(n_trades) < pi_d
    resting_hft = rng.random(n_trades) < pi_s
    profile = np.where(
        aggressor_hft, np.where(resting_hft, 0, 1), np.where(resting_hft, 2, 3)
    ).astype(np.int8)

    trades = TradeColumns(t_ts, price, size, iso, venue, profile)
    latent = {
        "stock": stock_id,
        "date": date,
        "volatility": float(vol),
        "trade_intensity": float(intensity),
        "depth": float(depth),
        "pi_d": float(pi_d),
        "pi_s": float(pi_s),
    }
    return TickSeries(stock_id, date, trades=trades, quotes=quotes), latent


def synth_market(config: SynthConfig):
    """Generate the full labeled market: one (TickSeries, latent) per stock-day,
    ordered by (stock_id, date)."""
    out = []
    for s in range(config.n_stocks):
        for d in range(config.n_days):
            out.append(synth_stock_day(config, s, d))
    return out


def compute_targets(series: TickSeries) -> TargetPair:
    """Share-volume HFT fractions from labeled trades.

    hft_d = (HH + HN) / total shares, hft_s = (HH + NH) / total shares.
    """
    t = series.trades
    if len(t) == 0:
        raise UndefinedTargetError(f"{series.stock_id} {series.date}: no trades")
    if not t.labeled:
        raise ValueError("compute_targets requires labeled trades")
    shares = np.bincount(t.profile, weights=t.size.astype(np.float64), minlength=4)
    total = shares.sum()
    return TargetPair(
        hft_d=float((shares[0] + shares[1]) / total),
        hft_s=float((shares[0] + shares[2]) / total),
    )
