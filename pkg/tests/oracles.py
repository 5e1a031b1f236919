"""Independent straight-line oracles for the test suite.

Everything here recomputes results with plain Python loops from first
principles. No computational code is shared with the package: the only
interaction is reading record arrays off TickSeries. Slow by design.
"""

from __future__ import annotations

import math
from bisect import bisect_right

OPEN_NS = 34_200 * 10**9
CLOSE_NS = 57_600 * 10**9
OPEN_S = 34_200
CLOSE_S = 57_600


def _quote_tuples(series):
    q = series.quotes
    return [
        (int(q.ts_ns[i]), float(q.bid[i]), int(q.bid_sz[i]), float(q.ask[i]), int(q.ask_sz[i]))
        for i in range(len(q))
    ]


def _trade_tuples(series):
    t = series.trades
    return [
        (int(t.ts_ns[i]), float(t.price[i]), int(t.size[i]), bool(t.iso[i]), str(t.venue[i]))
        for i in range(len(t))
    ]


def brute_force_features(series):
    """All 24 daily features, recomputed the slow way."""
    quotes = _quote_tuples(series)
    all_trades = _trade_tuples(series)
    trades = [tr for tr in all_trades if OPEN_NS <= tr[0] < CLOSE_NS]

    out = {}

    # activity
    n = len(trades)
    out["TOTAL_TRADE"] = float(n)
    out["TOTAL_DOLLAR_M"] = sum(p * s for _, p, s, _, _ in trades) if n else 0.0
    out["ISO_DOLLAR"] = sum(p * s for _, p, s, iso, _ in trades if iso) if n else 0.0
    out["AVG_PRICE_M"] = (sum(p for _, p, _, _, _ in trades) / n) if n else None
    out["RET_MKT_M"] = math.log(trades[-1][1] / trades[0][1]) if n else None

    # last quote before close
    last_before_close = None
    for q in quotes:
        if q[0] < CLOSE_NS:
            last_before_close = q
    if last_before_close is not None:
        out["NBOQTY_BEFORE_CLOSE"] = float(last_before_close[4])
        out["NBBQTY_BEFORE_CLOSE"] = float(last_before_close[2])
    else:
        out["NBOQTY_BEFORE_CLOSE"] = None
        out["NBBQTY_BEFORE_CLOSE"] = None

    # time weights over the session
    weights = []
    for i, q in enumerate(quotes):
        start = min(max(q[0], OPEN_NS), CLOSE_NS)
        nxt = quotes[i + 1][0] if i + 1 < len(quotes) else CLOSE_NS
        end = min(max(nxt, OPEN_NS), CLOSE_NS)
        weights.append(max(end - start, 0))
    wsum = sum(weights)
    if wsum > 0:
        qs = sum(
            w * (a - b) / ((a + b) / 2.0)
            for w, (_, b, _, a, _) in zip(weights, quotes)
        )
        out["QUOTEDSPREAD_PERCENT_TW"] = qs / wsum
        out["BESTOFRDEPTH_SHARE_TW"] = sum(w * asz for w, (_, _, _, _, asz) in zip(weights, quotes)) / wsum
        out["BESTBIDDEPTH_SHARE_TW"] = sum(w * bsz for w, (_, _, bsz, _, _) in zip(weights, quotes)) / wsum
        out["BESTOFRDEPTH_DOLLAR_TW"] = sum(w * a * asz for w, (_, _, _, a, asz) in zip(weights, quotes)) / wsum
        out["BESTBIDDEPTH_DOLLAR_TW"] = sum(w * b * bsz for w, (_, b, bsz, _, _) in zip(weights, quotes)) / wsum
    else:
        for key in ("QUOTEDSPREAD_PERCENT_TW", "BESTOFRDEPTH_SHARE_TW",
                    "BESTBIDDEPTH_SHARE_TW", "BESTOFRDEPTH_DOLLAR_TW",
                    "BESTBIDDEPTH_DOLLAR_TW"):
            out[key] = None

    # prevailing-quote matching
    q_times = [q[0] for q in quotes]
    mids = []
    mid5s = []
    for ts, _, _, _, _ in trades:
        j = bisect_right(q_times, ts) - 1
        mids.append((quotes[j][1] + quotes[j][3]) / 2.0 if j >= 0 else None)
        t5 = ts + 300 * 10**9
        if t5 >= CLOSE_NS:
            mid5s.append(None)
        else:
            j5 = bisect_right(q_times, t5) - 1
            mid5s.append((quotes[j5][1] + quotes[j5][3]) / 2.0 if j5 >= 0 else None)

    # Lee-Ready with tick-test fallback
    sides = []
    run_price = None
    before_run = None
    for (ts, price, sz, iso, venue), mid in zip(trades, mids):
        if run_price is None:
            last_diff = None
            run_price = price
        elif price == run_price:
            last_diff = before_run
        else:
            before_run = run_price
            run_price = price
            last_diff = before_run
        if mid is None:
            sides.append(0)
        elif price > mid:
            sides.append(1)
        elif price < mid:
            sides.append(-1)
        elif last_diff is None:
            sides.append(0)
        else:
            sides.append(1 if price > last_diff else -1)

    # effective / realized / impact, dollar weighted
    num_es = den_es = 0.0
    num_rs = num_pi = den_5 = 0.0
    for (ts, price, sz, iso, venue), mid, mid5, side in zip(trades, mids, mid5s, sides):
        if side == 0 or mid is None:
            continue
        dollar = price * sz
        num_es += dollar * 2.0 * side * (price - mid) / mid
        den_es += dollar
        if mid5 is not None:
            num_rs += dollar * 2.0 * side * (price - mid5) / mid
            num_pi += dollar * 2.0 * side * (mid5 - mid) / mid
            den_5 += dollar
    out["EFFECTIVESPREAD_PERCENT_DW"] = num_es / den_es if den_es > 0 else None
    out["PERCENTREALIZEDSPREAD_LR_DW"] = num_rs / den_5 if den_5 > 0 else None
    out["PERCENTPRICEIMPACT_LR_DW"] = num_pi / den_5 if den_5 > 0 else None

    # absolute imbalance over classified trades
    buy_sh = sum(sz for (_, _, sz, _, _), sd in zip(trades, sides) if sd == 1)
    sell_sh = sum(sz for (_, _, sz, _, _), sd in zip(trades, sides) if sd == -1)
    total_sh = buy_sh + sell_sh
    out["BS_RATIO_VOL"] = abs(buy_sh - sell_sh) / total_sh if total_sh > 0 else None

    # retail by sub-penny rule on venue D
    r_buy_sh = r_sell_sh = 0
    dv_retail = 0.0
    for ts, price, sz, iso, venue in trades:
        rem = (round(price * 1_000_000) % 10_000) / 1_000_000
        if venue != "D":
            continue
        if 0.0 < rem < 0.004:
            r_sell_sh += sz
            dv_retail += price * sz
        elif 0.006 < rem < 0.01:
            r_buy_sh += sz
            dv_retail += price * sz
    out["TOTAL_DV_RETAIL"] = dv_retail
    rt = r_buy_sh + r_sell_sh
    out["BS_RATIO_RETAIL_VOL"] = abs(r_buy_sh - r_sell_sh) / rt if rt > 0 else None

    # institutional above the dollar cutoff
    dv_inst = 0.0
    i_buy = i_sell = 0
    for (ts, price, sz, iso, venue), sd in zip(trades, sides):
        if price * sz > 20_000.0:
            dv_inst += price * sz
            if sd == 1:
                i_buy += sz
            elif sd == -1:
                i_sell += sz
    out["TOTAL_DV_INST20K"] = dv_inst
    it = i_buy + i_sell
    out["BS_RATIO_INST20K_VOL"] = abs(i_buy - i_sell) / it if it > 0 else None

    # LOCF second-grid midquotes
    grid = [None] * (CLOSE_S - OPEN_S + 1)
    qi = -1
    for k in range(len(grid)):
        ts_ns = (OPEN_S + k) * 10**9
        while qi + 1 < len(quotes) and quotes[qi + 1][0] <= ts_ns:
            qi += 1
        if qi >= 0:
            grid[k] = (quotes[qi][1] + quotes[qi][3]) / 2.0

    valid = [k for k in range(len(grid)) if grid[k] is not None]
    # IVOL_Q: mean squared change of consecutive second returns
    rets = []
    for k in valid:
        if k - 1 >= 0 and grid[k - 1] is not None:
            rets.append(math.log(grid[k] / grid[k - 1]))
    if len(rets) >= 2:
        diffs = [rets[i] - rets[i - 1] for i in range(1, len(rets))]
        out["IVOL_Q"] = sum(d * d for d in diffs) / len(diffs)
    else:
        out["IVOL_Q"] = None

    # lambda over 5-minute buckets
    xs, ys = [], []
    for j in range(1, 79):
        s0 = OPEN_S + 300 * (j - 1)
        s1 = OPEN_S + 300 * j
        if grid[s0 - OPEN_S] is None or grid[s1 - OPEN_S] is None:
            continue
        ret = math.log(grid[s1 - OPEN_S] / grid[s0 - OPEN_S])
        imb = 0.0
        for (ts, price, sz, iso, venue), sd in zip(trades, sides):
            if sd != 0 and s0 * 10**9 <= ts < s1 * 10**9:
                imb += sd * price * sz
        xs.append(math.copysign(math.sqrt(abs(imb)), imb) if imb != 0 else 0.0)
        ys.append(ret)
    nonzero = sum(1 for x in xs if x != 0.0)
    if nonzero >= 3 and len(xs) >= 2:
        xbar = sum(xs) / len(xs)
        ybar = sum(ys) / len(ys)
        sxx = sum((x - xbar) ** 2 for x in xs)
        if sxx > 0:
            sxy = sum((x - xbar) * (y - ybar) for x, y in zip(xs, ys))
            out["TSIGNSQRTDVOL1"] = sxy / sxx
        else:
            out["TSIGNSQRTDVOL1"] = None
    else:
        out["TSIGNSQRTDVOL1"] = None

    # Herfindahl over 30-minute buckets
    total_dollar = sum(p * s for _, p, s, _, _ in trades)
    if total_dollar > 0:
        dv = [0.0] * 13
        for ts, price, sz, iso, venue in trades:
            dv[(ts - OPEN_NS) // (1800 * 10**9)] += price * sz
        out["HINDEX"] = sum(v * v for v in dv) / (total_dollar * total_dollar)
    else:
        out["HINDEX"] = None

    # variance ratio on the same grid
    def grid_rets(step):
        marks = [s for s in range(OPEN_S, CLOSE_S + 1, step) if grid[s - OPEN_S] is not None]
        return [
            math.log(grid[marks[i] - OPEN_S] / grid[marks[i - 1] - OPEN_S])
            for i in range(1, len(marks))
        ]

    def pop_var(vals):
        m = sum(vals) / len(vals)
        return sum((v - m) ** 2 for v in vals) / len(vals)

    r60 = grid_rets(60)
    r300 = grid_rets(300)
    if len(r60) >= 2 and len(r300) >= 2 and pop_var(r60) > 0:
        out["VAR_RATIO3"] = abs(pop_var(r300) / (5.0 * pop_var(r60)) - 1.0)
    else:
        out["VAR_RATIO3"] = None
    return out


def brute_force_nlao(series, tick_size: float = 0.01):
    """Pairwise latency-arbitrage count: (count, up, down, crossed_skipped)."""
    quotes = _quote_tuples(series)
    up = down = skipped = 0
    for i in range(1, len(quotes)):
        _, b0, _, a0, _ = quotes[i - 1]
        _, b1, _, a1, _ = quotes[i]
        mid = (b1 + a1) / 2.0
        if b0 >= a0:
            skipped += 1
            continue
        if mid > a0 + tick_size:
            up += 1
        if mid < b0 - tick_size:
            down += 1
    return up + down, up, down, skipped


def lsdv_two_way(y, X, entities, times):
    """Two-way FE coefficients by explicit dummy-variable OLS."""
    import numpy as np

    ent_levels = sorted(set(entities))
    tim_levels = sorted(set(times))
    cols = [X]
    cols.append(np.array([[1.0 if e == lev else 0.0 for lev in ent_levels] for e in entities]))
    cols.append(np.array([[1.0 if t == lev else 0.0 for lev in tim_levels[1:]] for t in times]))
    Z = np.column_stack(cols)
    beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
    return beta[: X.shape[1]]


def route_to_leaf(tree, x):
    """Follow the routing rule on the flat arrays by hand."""
    node = 0
    while tree.feature[node] >= 0:
        if x[tree.feature[node]] <= tree.threshold[node]:
            node = tree.left[node]
        else:
            node = tree.right[node]
    return node
