"""Latency-arbitrage scan over NBBO quote streams.

A consecutive quote pair (z-1, z) is an opportunity when the new midprice
jumps past the prior (stale) quote by more than one tick:

    up:   mid_z > ask_{z-1} + tick
    down: mid_z < bid_{z-1} - tick

The downward branch is the economically coherent mirror of the upward one.
Pairs whose stale quote is crossed (bid >= ask) are skipped and tallied.
Events in the same millisecond as the stale quote still count; there is no
minimum-duration filter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hftlens.tickdata import (
    SESSION_CLOSE_NS,
    SESSION_OPEN_NS,
    QuoteColumns,
    TickSeries,
)

TICK_SIZE = 0.01


@dataclass(frozen=True)
class LatArbEvent:
    ts_ns: int  # triggering quote z
    direction: str  # "up" or "down"
    stale_price: float  # Ask_{z-1} for up, Bid_{z-1} for down
    midprice: float


@dataclass
class NlaoRecord:
    stock: str
    date: object
    count: int
    up_count: int
    down_count: int


@dataclass
class ScanDiagnostics:
    crossed_skipped: int = 0


def session_quotes(series: TickSeries) -> QuoteColumns:
    """Quotes restricted to market hours [09:30, 16:00)."""
    q = series.quotes
    keep = (q.ts_ns >= SESSION_OPEN_NS) & (q.ts_ns < SESSION_CLOSE_NS)
    return QuoteColumns(q.ts_ns[keep], q.bid[keep], q.bid_sz[keep],
                        q.ask[keep], q.ask_sz[keep])


def scan_latency_arbitrage(series: TickSeries, tick_size: float = TICK_SIZE,
                           collect_events: bool = True):
    """Single forward pass over consecutive quote pairs.

    The caller supplies market-hours-filtered quotes (see session_quotes).
    Returns (events, NlaoRecord, ScanDiagnostics); events is empty when
    collect_events is False or fewer than 2 quotes exist.
    """
    q = series.quotes
    n = len(q)
    diag = ScanDiagnostics()
    if n < 2:
        return [], NlaoRecord(series.stock_id, series.date, 0, 0, 0), diag

    mid = q.mid
    stale_ask = q.ask[:-1]
    stale_bid = q.bid[:-1]
    new_mid = mid[1:]
    crossed = stale_bid >= stale_ask
    up = (new_mid > stale_ask + tick_size) & ~crossed
    down = (new_mid < stale_bid - tick_size) & ~crossed
    diag.crossed_skipped = int(np.count_nonzero(crossed))

    up_count = int(np.count_nonzero(up))
    down_count = int(np.count_nonzero(down))
    record = NlaoRecord(
        stock=series.stock_id,
        date=series.date,
        count=up_count + down_count,
        up_count=up_count,
        down_count=down_count,
    )

    events = []
    if collect_events and record.count:
        hits = np.flatnonzero(up | down)
        for i in hits:
            is_up = bool(up[i])
            events.append(
                LatArbEvent(
                    ts_ns=int(q.ts_ns[i + 1]),
                    direction="up" if is_up else "down",
                    stale_price=float(stale_ask[i] if is_up else stale_bid[i]),
                    midprice=float(new_mid[i]),
                )
            )
    return events, record, diag


def write_nlao_csv(records, path) -> None:
    """`stock,date,nlao,up,down` rows."""
    with open(path, "w", newline="") as fh:
        fh.write("stock,date,nlao,up,down\n")
        for r in records:
            fh.write(f"{r.stock},{r.date.isoformat()},{r.count},{r.up_count},{r.down_count}\n")


def write_events_csv(keyed_events, path) -> None:
    """`stock,date,ts_ns,direction,stale_price,midprice` rows.

    keyed_events yields (stock, date, LatArbEvent).
    """
    with open(path, "w", newline="") as fh:
        fh.write("stock,date,ts_ns,direction,stale_price,midprice\n")
        for stock, date, ev in keyed_events:
            fh.write(
                f"{stock},{date.isoformat()},{ev.ts_ns},{ev.direction},"
                f"{ev.stale_price!r},{ev.midprice!r}\n"
            )
