"""Per-stock-day microstructure features and feature-matrix assembly.

All 24 daily inputs are computed from market-hours [09:30, 16:00) trades and
quotes. Spread-type features are unitless fractions (not x100). A feature
that cannot be computed for a day is missing (None / NaN) until assembly,
which drops incomplete rows.

Conventions (fixed, relied on by the brute-force oracle tests):
- prevailing quote = last quote at or before the trade timestamp;
- the 5-minutes-ahead midquote is absent when trade time + 300 s falls at or
  beyond session close;
- the Lee-Ready tick test looks back over prior in-hours trades of the day;
- second-grid midquotes are last-observation-carried-forward, seconds before
  the first quote excluded; 5-minute and 1-minute buckets align to 09:30;
- retail trades: venue 'D' with sub-penny remainder strictly inside
  (0, 0.004) = retail sell, strictly inside (0.006, 0.01) = retail buy;
- institutional trades: dollar value strictly above 20,000.
"""

from __future__ import annotations

import datetime as dt
import hashlib
from dataclasses import dataclass

import numpy as np
import pandas as pd

from hftlens.tickdata import (
    NS_PER_SEC,
    SESSION_CLOSE_NS,
    SESSION_OPEN_NS,
    TickSeries,
)

FEATURE_NAMES = (
    "AVG_PRICE_M",
    "RET_MKT_M",
    "TOTAL_TRADE",
    "NBOQTY_BEFORE_CLOSE",
    "NBBQTY_BEFORE_CLOSE",
    "TOTAL_DOLLAR_M",
    "ISO_DOLLAR",
    "QUOTEDSPREAD_PERCENT_TW",
    "BESTOFRDEPTH_DOLLAR_TW",
    "BESTBIDDEPTH_DOLLAR_TW",
    "BESTOFRDEPTH_SHARE_TW",
    "BESTBIDDEPTH_SHARE_TW",
    "EFFECTIVESPREAD_PERCENT_DW",
    "PERCENTREALIZEDSPREAD_LR_DW",
    "PERCENTPRICEIMPACT_LR_DW",
    "BS_RATIO_VOL",
    "TSIGNSQRTDVOL1",
    "IVOL_Q",
    "HINDEX",
    "VAR_RATIO3",
    "TOTAL_DV_RETAIL",
    "BS_RATIO_RETAIL_VOL",
    "TOTAL_DV_INST20K",
    "BS_RATIO_INST20K_VOL",
)

TARGET_NAMES = ("hft_d", "hft_s")

INST_DOLLAR_CUTOFF = 20_000.0
RETAIL_SELL_BAND = (0.0, 0.004)
RETAIL_BUY_BAND = (0.006, 0.01)

_OPEN_S = SESSION_OPEN_NS // NS_PER_SEC
_CLOSE_S = SESSION_CLOSE_NS // NS_PER_SEC


class FeatureError(Exception):
    """Feature computation / assembly failure."""


@dataclass
class MatchedTrades:
    """In-hours trades joined with their prevailing quote (columnar).

    Trades printed before the first quote keep NaN quote fields and are
    counted in n_unmatched; their prices still feed the tick test. side is
    +1 buy, -1 sell, 0 unclassified.
    """

    ts_ns: np.ndarray
    price: np.ndarray
    size: np.ndarray
    iso: np.ndarray
    venue: np.ndarray
    prevailing_bid: np.ndarray
    prevailing_ask: np.ndarray
    mid: np.ndarray
    mid_plus_5min: np.ndarray
    side: np.ndarray
    n_unmatched: int

    def __len__(self) -> int:
        return len(self.ts_ns)


def in_session(ts_ns: np.ndarray) -> np.ndarray:
    return (ts_ns >= SESSION_OPEN_NS) & (ts_ns < SESSION_CLOSE_NS)


def match_prevailing_quotes(series: TickSeries) -> MatchedTrades:
    """Pair each in-hours trade with the last quote at or before it.

    The 5-minutes-ahead midquote uses the last quote at or before
    trade time + 300 s and is absent when that instant reaches session close.
    """
    q = series.quotes
    if len(q) == 0:
        raise FeatureError(f"{series.stock_id} {series.date}: no quotes to match against")
    t = series.trades
    keep = in_session(t.ts_ns)
    ts = t.ts_ns[keep]
    price = t.price[keep]
    size = t.size[keep]
    iso = t.iso[keep]
    venue = t.venue[keep]

    n = len(ts)
    pos = np.searchsorted(q.ts_ns, ts, side="right") - 1
    matched = pos >= 0
    bid = np.full(n, np.nan)
    ask = np.full(n, np.nan)
    bid[matched] = q.bid[pos[matched]]
    ask[matched] = q.ask[pos[matched]]
    mid = (bid + ask) / 2.0

    t5 = ts + 300 * NS_PER_SEC
    pos5 = np.searchsorted(q.ts_ns, t5, side="right") - 1
    ok5 = (pos5 >= 0) & (t5 < SESSION_CLOSE_NS)
    mid5 = np.full(n, np.nan)
    mid5[ok5] = (q.bid[pos5[ok5]] + q.ask[pos5[ok5]]) / 2.0

    side = lee_ready_sides(price, mid)
    return MatchedTrades(
        ts_ns=ts,
        price=price,
        size=size,
        iso=iso,
        venue=venue,
        prevailing_bid=bid,
        prevailing_ask=ask,
        mid=mid,
        mid_plus_5min=mid5,
        side=side,
        n_unmatched=int(n - matched.sum()),
    )


def classify_lee_ready(price: float, mid: float, last_differing_price: float | None) -> int:
    """Lee-Ready side for one trade: quote rule, then tick test at the mid.

    Returns +1 buy, -1 sell, 0 unclassified (at the mid with no prior
    differing price).
    """
    if price > mid:
        return 1
    if price < mid:
        return -1
    if last_differing_price is None:
        return 0
    return 1 if price > last_differing_price else -1


def lee_ready_sides(price: np.ndarray, mid: np.ndarray) -> np.ndarray:
    """Vectorized Lee-Ready over one day's time-ordered trades.

    Trades with NaN mid stay unclassified but still advance the tick-test
    price history.
    """
    n = len(price)
    side = np.zeros(n, dtype=np.int8)
    if n == 0:
        return side
    has_mid = ~np.isnan(mid)
    side[has_mid & (price > mid)] = 1
    side[has_mid & (price < mid)] = -1

    chg = np.empty(n, dtype=bool)
    chg[0] = True
    chg[1:] = price[1:] != price[:-1]
    run_start = np.maximum.accumulate(np.where(chg, np.arange(n), 0))
    prev_diff = run_start - 1  # -1: no prior differing price
    at_mid = has_mid & (price == mid) & (prev_diff >= 0)
    prev_price = price[np.maximum(prev_diff, 0)]
    side[at_mid & (price > prev_price)] = 1
    side[at_mid & (price < prev_price)] = -1
    return side


def _session_weights(q_ts: np.ndarray) -> np.ndarray:
    """Quote lifetimes clipped to [09:30, 16:00), the last one open-ended to close."""
    start = np.clip(q_ts, SESSION_OPEN_NS, SESSION_CLOSE_NS)
    nxt = np.empty_like(q_ts)
    nxt[:-1] = q_ts[1:]
    nxt[-1] = SESSION_CLOSE_NS
    end = np.clip(nxt, SESSION_OPEN_NS, SESSION_CLOSE_NS)
    return np.maximum(end - start, 0).astype(np.float64)


def spread_features(m: MatchedTrades, quotes) -> dict:
    """Time-weighted quoted spread plus dollar-weighted effective/realized
    spread and price impact."""
    out = {}
    w = _session_weights(quotes.ts_ns)
    wsum = w.sum()
    if wsum > 0:
        rel = (quotes.ask - quotes.bid) / quotes.mid
        out["QUOTEDSPREAD_PERCENT_TW"] = float((w * rel).sum() / wsum)
    else:
        out["QUOTEDSPREAD_PERCENT_TW"] = None

    classified = (m.side != 0) & ~np.isnan(m.mid)
    dollar = m.price * m.size
    cdollar = dollar[classified]
    if cdollar.sum() > 0:
        es = 2.0 * m.side[classified] * (m.price[classified] - m.mid[classified]) / m.mid[classified]
        out["EFFECTIVESPREAD_PERCENT_DW"] = float((cdollar * es).sum() / cdollar.sum())
    else:
        out["EFFECTIVESPREAD_PERCENT_DW"] = None

    with5 = classified & ~np.isnan(m.mid_plus_5min)
    d5 = dollar[with5]
    if d5.sum() > 0:
        rs = 2.0 * m.side[with5] * (m.price[with5] - m.mid_plus_5min[with5]) / m.mid[with5]
        pi = 2.0 * m.side[with5] * (m.mid_plus_5min[with5] - m.mid[with5]) / m.mid[with5]
        out["PERCENTREALIZEDSPREAD_LR_DW"] = float((d5 * rs).sum() / d5.sum())
        out["PERCENTPRICEIMPACT_LR_DW"] = float((d5 * pi).sum() / d5.sum())
    else:
        out["PERCENTREALIZEDSPREAD_LR_DW"] = None
        out["PERCENTPRICEIMPACT_LR_DW"] = None
    return out


def depth_and_activity_features(series: TickSeries) -> dict:
    """Price/volume activity plus time-weighted depth and last-quote sizes."""
    out = {}
    t = series.trades
    keep = in_session(t.ts_ns)
    price = t.price[keep]
    size = t.size[keep]
    iso = t.iso[keep]
    n = len(price)

    out["TOTAL_TRADE"] = float(n)
    dollar = price * size
    out["TOTAL_DOLLAR_M"] = float(dollar.sum()) if n else 0.0
    out["ISO_DOLLAR"] = float(dollar[iso].sum()) if n else 0.0
    if n:
        out["AVG_PRICE_M"] = float(price.mean())
        out["RET_MKT_M"] = float(np.log(price[-1] / price[0]))
    else:
        out["AVG_PRICE_M"] = None
        out["RET_MKT_M"] = None

    q = series.quotes
    before_close = np.searchsorted(q.ts_ns, SESSION_CLOSE_NS, side="left") - 1
    if before_close >= 0:
        out["NBOQTY_BEFORE_CLOSE"] = float(q.ask_sz[before_close])
        out["NBBQTY_BEFORE_CLOSE"] = float(q.bid_sz[before_close])
    else:
        out["NBOQTY_BEFORE_CLOSE"] = None
        out["NBBQTY_BEFORE_CLOSE"] = None

    if len(q):
        w = _session_weights(q.ts_ns)
        wsum = w.sum()
    else:
        wsum = 0.0
    if wsum > 0:
        out["BESTOFRDEPTH_SHARE_TW"] = float((w * q.ask_sz).sum() / wsum)
        out["BESTBIDDEPTH_SHARE_TW"] = float((w * q.bid_sz).sum() / wsum)
        out["BESTOFRDEPTH_DOLLAR_TW"] = float((w * q.ask * q.ask_sz).sum() / wsum)
        out["BESTBIDDEPTH_DOLLAR_TW"] = float((w * q.bid * q.bid_sz).sum() / wsum)
    else:
        out["BESTOFRDEPTH_SHARE_TW"] = None
        out["BESTBIDDEPTH_SHARE_TW"] = None
        out["BESTOFRDEPTH_DOLLAR_TW"] = None
        out["BESTBIDDEPTH_DOLLAR_TW"] = None
    return out


def _abs_imbalance_ratio(buy_shares: float, sell_shares: float):
    total = buy_shares + sell_shares
    if total <= 0:
        return None
    return float(abs(buy_shares - sell_shares) / total)


def retail_flags(price: np.ndarray, venue: np.ndarray,
                 sell_band=RETAIL_SELL_BAND, buy_band=RETAIL_BUY_BAND):
    """Sub-penny retail identification. Returns (retail_buy, retail_sell) masks."""
    # integer micro-dollars, same arithmetic as tickdata.subpenny_remainder
    rem = (np.rint(price * 1_000_000).astype(np.int64) % 10_000) / 1_000_000
    on_d = venue == "D"
    sell = on_d & (rem > sell_band[0]) & (rem < sell_band[1])
    buy = on_d & (rem > buy_band[0]) & (rem < buy_band[1])
    return buy, sell


def imbalance_features(m: MatchedTrades, inst_cutoff: float = INST_DOLLAR_CUTOFF,
                       sell_band=RETAIL_SELL_BAND, buy_band=RETAIL_BUY_BAND) -> dict:
    """Absolute order-imbalance ratios plus retail / institutional activity."""
    out = {}
    size = m.size.astype(np.float64)
    dollar = m.price * size

    classified = m.side != 0
    buy_sh = float(size[classified & (m.side == 1)].sum())
    sell_sh = float(size[classified & (m.side == -1)].sum())
    out["BS_RATIO_VOL"] = _abs_imbalance_ratio(buy_sh, sell_sh)

    rbuy, rsell = retail_flags(m.price, m.venue, sell_band, buy_band)
    retail = rbuy | rsell
    out["TOTAL_DV_RETAIL"] = float(dollar[retail].sum()) if len(size) else 0.0
    out["BS_RATIO_RETAIL_VOL"] = _abs_imbalance_ratio(
        float(size[rbuy].sum()), float(size[rsell].sum())
    )

    inst = dollar > inst_cutoff
    out["TOTAL_DV_INST20K"] = float(dollar[inst].sum()) if len(size) else 0.0
    out["BS_RATIO_INST20K_VOL"] = _abs_imbalance_ratio(
        float(size[inst & (m.side == 1)].sum()),
        float(size[inst & (m.side == -1)].sum()),
    )
    return out


def _second_grid_mids(quotes):
    """LOCF midquote on the second grid 09:30:00..16:00:00 inclusive.

    Returns (seconds, mids) for the seconds at or after the first quote.
    """
    sec = np.arange(_OPEN_S, _CLOSE_S + 1, dtype=np.int64)
    pos = np.searchsorted(quotes.ts_ns, sec * NS_PER_SEC, side="right") - 1
    valid = pos >= 0
    mid = quotes.mid
    return sec[valid], mid[pos[valid]]


def price_dynamics_features(m: MatchedTrades, quotes) -> dict:
    """Price-impact lambda, second-level quote volatility, volume Herfindahl,
    and the 5-to-1-minute variance ratio."""
    out = {}
    sec, mids = _second_grid_mids(quotes)
    log_mid = np.log(mids)

    # quote-based intraday volatility: mean squared change of second returns
    if len(mids) >= 3:
        r = np.diff(log_mid)
        d = np.diff(r)
        out["IVOL_Q"] = float((d * d).sum() / len(d))
    else:
        out["IVOL_Q"] = None

    # lambda: 5-minute log mid return on signed sqrt dollar imbalance
    first_sec = sec[0] if len(sec) else _CLOSE_S + 1
    bounds = np.arange(_OPEN_S, _CLOSE_S + 1, 300, dtype=np.int64)
    classified = m.side != 0
    cts = m.ts_ns[classified]
    cdollar = (m.price * m.size)[classified]
    csign = m.side[classified]
    bucket = (cts - SESSION_OPEN_NS) // (300 * NS_PER_SEC)
    n_buckets = len(bounds) - 1
    signed = np.where(csign == 1, cdollar, -cdollar)
    imb = np.bincount(bucket, weights=signed, minlength=n_buckets)

    rets = []
    ssq = []
    for j in range(1, len(bounds)):
        s0, s1 = bounds[j - 1], bounds[j]
        if s0 < first_sec:
            continue
        m0 = log_mid[s0 - first_sec]
        m1 = log_mid[s1 - first_sec]
        rets.append(m1 - m0)
        x = imb[j - 1]
        ssq.append(np.sign(x) * np.sqrt(abs(x)))
    rets = np.asarray(rets)
    ssq = np.asarray(ssq)
    nonzero = np.count_nonzero(ssq)
    if nonzero >= 3 and len(ssq) >= 2 and np.var(ssq) > 0:
        lam = float(np.cov(ssq, rets, ddof=0)[0, 1] / np.var(ssq))
        out["TSIGNSQRTDVOL1"] = lam
    else:
        out["TSIGNSQRTDVOL1"] = None

    # Herfindahl of dollar volume over 30-minute buckets
    dollar = m.price * m.size
    if dollar.sum() > 0:
        b30 = (m.ts_ns - SESSION_OPEN_NS) // (1800 * NS_PER_SEC)
        dv = np.bincount(b30, weights=dollar, minlength=13)
        total = dv.sum()
        out["HINDEX"] = float((dv * dv).sum() / (total * total))
    else:
        out["HINDEX"] = None

    # variance ratio |Var(5-min)/(5 Var(1-min)) - 1| on the LOCF grid
    def _grid_returns(step):
        marks = np.arange(_OPEN_S, _CLOSE_S + 1, step, dtype=np.int64)
        marks = marks[marks >= first_sec]
        if len(marks) < 2:
            return np.empty(0)
        vals = log_mid[marks - first_sec]
        return np.diff(vals)

    r60 = _grid_returns(60)
    r300 = _grid_returns(300)
    if len(r60) >= 2 and len(r300) >= 2 and np.var(r60) > 0:
        out["VAR_RATIO3"] = float(abs(np.var(r300) / (5.0 * np.var(r60)) - 1.0))
    else:
        out["VAR_RATIO3"] = None
    return out


def compute_stock_day_features(series: TickSeries) -> dict:
    """All 24 features for one stock-day; missing values are None."""
    m = match_prevailing_quotes(series)
    out = {}
    out.update(depth_and_activity_features(series))
    out.update(spread_features(m, series.quotes))
    out.update(imbalance_features(m))
    out.update(price_dynamics_features(m, series.quotes))
    return {name: out[name] for name in FEATURE_NAMES}


def schema_fingerprint(columns) -> str:
    """Stable 16-hex-digit fingerprint of an ordered column schema."""
    return hashlib.sha256("\n".join(columns).encode()).hexdigest()[:16]


@dataclass
class FeatureMatrix:
    """Keyed feature rows with a fixed column order.

    X may carry NaN before assembly; assemble_feature_matrix() drops
    incomplete rows and the result is NaN-free.
    """

    stocks: list
    dates: list
    X: np.ndarray
    Y: np.ndarray | None = None
    feature_names: tuple = FEATURE_NAMES
    target_names: tuple = TARGET_NAMES

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=np.float64)
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise FeatureError("X must be (n_rows, n_features)")
        if len(self.stocks) != len(self.X) or len(self.dates) != len(self.X):
            raise FeatureError("row keys must align with X")
        if self.Y is not None:
            self.Y = np.ascontiguousarray(self.Y, dtype=np.float64)
            if self.Y.shape != (len(self.X), len(self.target_names)):
                raise FeatureError("Y must be (n_rows, n_targets)")

    def __len__(self) -> int:
        return len(self.X)

    @property
    def fingerprint(self) -> str:
        return schema_fingerprint(self.feature_names)

    def to_csv(self, path) -> None:
        cols = ["stock", "date", *self.feature_names]
        if self.Y is not None:
            cols += list(self.target_names)
        with open(path, "w", newline="") as fh:
            fh.write(",".join(cols) + "\n")
            for i in range(len(self)):
                cells = [self.stocks[i], self.dates[i].isoformat()]
                cells += ["" if np.isnan(v) else repr(float(v)) for v in self.X[i]]
                if self.Y is not None:
                    cells += ["" if np.isnan(v) else repr(float(v)) for v in self.Y[i]]
                fh.write(",".join(cells) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FeatureMatrix":
        df = pd.read_csv(path, dtype={"stock": str}, float_precision="round_trip")
        expected = ["stock", "date", *FEATURE_NAMES]
        with_targets = list(df.columns) == expected + list(TARGET_NAMES)
        if not with_targets and list(df.columns) != expected:
            raise FeatureError(f"unexpected features.csv columns in {path}")
        dates = [dt.date.fromisoformat(d) for d in df["date"].astype(str)]
        X = df[list(FEATURE_NAMES)].to_numpy(dtype=np.float64)
        Y = df[list(TARGET_NAMES)].to_numpy(dtype=np.float64) if with_targets else None
        return cls(stocks=df["stock"].tolist(), dates=dates, X=X, Y=Y)


def build_feature_rows(series_targets) -> FeatureMatrix:
    """Compute features for (series, TargetPair-or-None) pairs, keyed and
    ordered by (stock, date)."""
    items = sorted(series_targets, key=lambda st: (st[0].stock_id, st[0].date))
    stocks, dates, rows, targets = [], [], [], []
    any_targets = any(tp is not None for _, tp in items)
    for series, tp in items:
        feats = compute_stock_day_features(series)
        stocks.append(series.stock_id)
        dates.append(series.date)
        rows.append([np.nan if feats[n] is None else feats[n] for n in FEATURE_NAMES])
        if any_targets:
            targets.append([tp.hft_d, tp.hft_s] if tp is not None else [np.nan, np.nan])
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), len(FEATURE_NAMES))
    Y = np.asarray(targets, dtype=np.float64) if any_targets else None
    return FeatureMatrix(stocks=stocks, dates=dates, X=X, Y=Y)


def assemble_feature_matrix(matrix: FeatureMatrix, mode: str = "train"):
    """Drop rows with missing cells; returns (clean matrix, n_dropped).

    mode="train" also requires complete targets (rows lacking one are
    dropped and Y is mandatory); mode="predict" ignores targets entirely.
    """
    if mode not in ("train", "predict"):
        raise ValueError("mode must be 'train' or 'predict'")
    keep = ~np.isnan(matrix.X).any(axis=1)
    if mode == "train":
        if matrix.Y is None:
            raise FeatureError("training assembly requires targets")
        keep &= ~np.isnan(matrix.Y).any(axis=1)
    n_dropped = int(len(matrix) - keep.sum())
    if keep.sum() == 0:
        raise FeatureError("all rows dropped during assembly")
    idx = np.flatnonzero(keep)
    clean = FeatureMatrix(
        stocks=[matrix.stocks[i] for i in idx],
        dates=[matrix.dates[i] for i in idx],
        X=matrix.X[idx],
        Y=matrix.Y[idx] if (mode == "train" and matrix.Y is not None) else None,
        feature_names=matrix.feature_names,
        target_names=matrix.target_names,
    )
    return clean, n_dropped
