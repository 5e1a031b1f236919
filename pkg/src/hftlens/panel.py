"""Panel econometrics: winsorization, summary statistics, two-way fixed
effects with double-clustered standard errors, DiD, 2SLS, market-model
abnormal returns, JUMP ratios, and event studies.

Conventions fixed here and relied on by tests:
- quantiles use the nearest-order-statistic rule: sorted[floor(q*(n-1)+0.5)];
- fixed effects are absorbed by alternating demeaning until every group mean
  is below 1e-10 in absolute value;
- cluster covariances get the small-sample factor G/(G-1) * (N-1)/(N-K) per
  dimension, K counting the regression coefficients after absorption;
- the combined double-cluster covariance is repaired to PSD by truncating
  negative eigenvalues at zero (flagged);
- CARs sum simple (not log) abnormal returns.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import stats as sps


class PanelError(Exception):
    """Base class for panel-econometrics failures."""


class RankError(PanelError):
    """Regressors collinear after demeaning."""


class ClusterError(PanelError):
    """A requested cluster dimension has a single cluster."""


class WeakInstrumentError(PanelError):
    """First stage carries no identifying variation."""


class InsufficientDataError(PanelError):
    """Too few observations in a required window."""


def _nearest_order_statistic(sorted_vals: np.ndarray, q: float) -> float:
    idx = int(math.floor(q * (len(sorted_vals) - 1) + 0.5))
    return float(sorted_vals[min(max(idx, 0), len(sorted_vals) - 1)])


def winsorize(series, p: float = 0.01) -> np.ndarray:
    """Clamp below the p-quantile and above the (1-p)-quantile
    (nearest-order-statistic convention); idempotent."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot winsorize an empty series")
    if not 0.0 <= p < 0.5:
        raise ValueError("p must satisfy 0 <= p < 0.5")
    if p == 0.0:
        return x.copy()
    s = np.sort(x)
    lo = _nearest_order_statistic(s, p)
    hi = _nearest_order_statistic(s, 1.0 - p)
    return np.clip(x, lo, hi)


def summary_stats(series) -> dict:
    """mean/std/min/p25/p50/p75/max; sample std (n-1), 0.0 for n == 1."""
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise ValueError("summary_stats needs at least one observation")
    s = np.sort(x)
    return {
        "mean": float(x.mean()),
        "std": float(x.std(ddof=1)) if x.size > 1 else 0.0,
        "min": float(s[0]),
        "p25": _nearest_order_statistic(s, 0.25),
        "p50": _nearest_order_statistic(s, 0.50),
        "p75": _nearest_order_statistic(s, 0.75),
        "max": float(s[-1]),
    }


@dataclass
class FitResult:
    """Coefficients with (possibly double-clustered) covariance."""

    names: tuple
    coef: np.ndarray
    cov: np.ndarray
    se: np.ndarray
    tstats: np.ndarray
    r2_within: float
    n_obs: int
    n_entity_clusters: int | None
    n_time_clusters: int | None
    psd_repaired: bool
    demean_iterations: int
    residuals: np.ndarray = field(repr=False, default=None)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "coefficients": {n: float(c) for n, c in zip(self.names, self.coef)},
            "standard_errors": {n: float(s) for n, s in zip(self.names, self.se)},
            "t_stats": {
                n: (None if not np.isfinite(t) else float(t))
                for n, t in zip(self.names, self.tstats)
            },
            "r2_within": self.r2_within,
            "n_obs": self.n_obs,
            "n_entity_clusters": self.n_entity_clusters,
            "n_time_clusters": self.n_time_clusters,
            "psd_repaired": self.psd_repaired,
            "demean_iterations": self.demean_iterations,
        }
        for key, value in self.extra.items():
            if isinstance(value, FitResult):
                d[key] = value.to_dict()
            else:
                d[key] = value
        return d

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def _demean(M: np.ndarray, entity_codes, time_codes, fe_entity: bool, fe_time: bool,
            tol: float = 1e-10, max_iter: int = 10_000):
    """Alternating within-group demeaning of all columns of M.

    Stops when the largest absolute group mean in a full sweep is < tol,
    which directly enforces the post-convergence invariant.
    """
    M = M.copy()
    if not fe_entity and not fe_time:
        return M, 0
    n_entity = int(entity_codes.max()) + 1 if fe_entity else 0
    n_time = int(time_codes.max()) + 1 if fe_time else 0
    counts_e = np.bincount(entity_codes, minlength=n_entity) if fe_entity else None
    counts_t = np.bincount(time_codes, minlength=n_time) if fe_time else None
    for it in range(1, max_iter + 1):
        worst = 0.0
        if fe_entity:
            for j in range(M.shape[1]):
                means = np.bincount(entity_codes, weights=M[:, j], minlength=n_entity) / counts_e
                M[:, j] -= means[entity_codes]
                worst = max(worst, float(np.abs(means).max()))
        if fe_time:
            for j in range(M.shape[1]):
                means = np.bincount(time_codes, weights=M[:, j], minlength=n_time) / counts_t
                M[:, j] -= means[time_codes]
                worst = max(worst, float(np.abs(means).max()))
        if worst < tol:
            return M, it
    raise PanelError(f"demeaning did not converge in {max_iter} sweeps")


def _cluster_meat(Xd: np.ndarray, u: np.ndarray, codes: np.ndarray, n_clusters: int):
    scores = Xd * u[:, None]
    S = np.zeros((n_clusters, Xd.shape[1]))
    np.add.at(S, codes, scores)
    return S.T @ S


def _small_sample_factor(G: int, N: int, K: int) -> float:
    if G < 2:
        raise ClusterError(f"cluster dimension has {G} cluster(s); need >= 2")
    return (G / (G - 1)) * ((N - 1) / (N - K))


def _codes(values) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(values, sort=True)
    return codes.astype(np.int64), len(uniques)


def panel_ols(data: pd.DataFrame, y: str, x: list, *, entity: str = "entity",
              time: str = "time", fe_entity: bool = True, fe_time: bool = True,
              cluster_entity: str | None = "entity",
              cluster_time: str | None = "time") -> FitResult:
    """OLS with absorbed entity/time fixed effects and cluster-robust
    covariance.

    Double clustering uses V_entity + V_time - V_intersection with
    intersection clusters = (entity, time) cells. With both cluster
    dimensions None the covariance is the homoskedastic sigma^2 (X'X)^-1.
    """
    x = list(x)
    cols = [y, *x]
    values = data[cols].to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValueError("panel values must be finite")
    n = len(values)
    k = len(x)
    if k == 0:
        raise ValueError("at least one regressor is required")

    ent_codes, n_ent = _codes(data[entity]) if entity in data.columns else (np.zeros(n, np.int64), 1)
    tim_codes, n_tim = _codes(data[time]) if time in data.columns else (np.zeros(n, np.int64), 1)
    if fe_entity and n_ent < 2:
        raise PanelError("entity fixed effects need >= 2 entities")
    if fe_time and n_tim < 2:
        raise PanelError("time fixed effects need >= 2 time periods")

    M, iters = _demean(values, ent_codes, tim_codes, fe_entity, fe_time)
    yd = M[:, 0]
    Xd = M[:, 1:]
    if np.linalg.matrix_rank(Xd) < k:
        raise RankError("regressors are collinear after demeaning")

    XtX = Xd.T @ Xd
    beta = np.linalg.solve(XtX, Xd.T @ yd)
    u = yd - Xd @ beta
    bread = np.linalg.inv(XtX)

    psd_repaired = False
    g_ent = g_tim = None
    if cluster_entity is None and cluster_time is None:
        dof = max(n - k, 1)
        V = float(u @ u / dof) * bread
    else:
        V = np.zeros((k, k))
        ce = ct = None
        if cluster_entity is not None:
            ce, Ge = _codes(data[cluster_entity])
            g_ent = Ge
            V += _small_sample_factor(Ge, n, k) * bread @ _cluster_meat(Xd, u, ce, Ge) @ bread
        if cluster_time is not None:
            ct, Gt = _codes(data[cluster_time])
            g_tim = Gt
            V += _small_sample_factor(Gt, n, k) * bread @ _cluster_meat(Xd, u, ct, Gt) @ bread
        if cluster_entity is not None and cluster_time is not None:
            inter, Gi = _codes(list(zip(ce, ct)))
            V -= _small_sample_factor(Gi, n, k) * bread @ _cluster_meat(Xd, u, inter, Gi) @ bread
            eigval, eigvec = np.linalg.eigh((V + V.T) / 2.0)
            if eigval.min() < 0:
                psd_repaired = True
                V = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T

    se = np.sqrt(np.maximum(np.diag(V), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.inf * np.sign(beta))
    ss_tot = float(((yd - yd.mean()) ** 2).sum())
    r2 = 1.0 - float(u @ u) / ss_tot if ss_tot > 0 else float("nan")
    return FitResult(
        names=tuple(x),
        coef=beta,
        cov=V,
        se=se,
        tstats=tstats,
        r2_within=r2,
        n_obs=n,
        n_entity_clusters=g_ent,
        n_time_clusters=g_tim,
        psd_repaired=psd_repaired,
        demean_iterations=iters,
        residuals=u,
    )


def did_estimate(data: pd.DataFrame, y: str, treated: str, post: str,
                 controls: list = (), *, entity: str = "entity", time: str = "time",
                 cluster_entity: str | None = "entity",
                 cluster_time: str | None = "time") -> FitResult:
    """Difference-in-differences: y on Post x Treated plus controls under
    entity+time fixed effects (main effects absorbed), double-clustered SEs.

    The interaction coefficient is reported as 'post_x_treated'.
    """
    tr = data[treated].to_numpy(dtype=np.float64)
    po = data[post].to_numpy(dtype=np.float64)
    if not set(np.unique(tr)) <= {0.0, 1.0} or not set(np.unique(po)) <= {0.0, 1.0}:
        raise ValueError("treated and post must be 0/1 indicators")
    if not (tr == 1).any():
        raise PanelError("no treated entities")
    if not (tr == 0).any():
        raise PanelError("no control entities")
    for t_val in (0.0, 1.0):
        for p_val in (0.0, 1.0):
            if not ((tr == t_val) & (po == p_val)).any():
                raise PanelError("treated/control x pre/post cells must all be populated")
    work = data.copy()
    work["post_x_treated"] = tr * po
    return panel_ols(
        work, y, ["post_x_treated", *controls], entity=entity, time=time,
        fe_entity=True, fe_time=True,
        cluster_entity=cluster_entity, cluster_time=cluster_time,
    )


def two_sls(data: pd.DataFrame, y: str, endog: str, instrument: str,
            controls: list = (), *, entity: str = "entity", time: str = "time",
            fe_entity: bool = True, fe_time: bool = True,
            cluster_entity: str | None = "entity",
            cluster_time: str | None = "time") -> FitResult:
    """Two-stage least squares with absorbed fixed effects.

    Stage 1 regresses the endogenous variable on the instrument plus
    controls; stage 2 replaces it with fitted values. Stage-2 residuals use
    the original endogenous regressor (standard 2SLS), so instrumenting a
    variable with itself reproduces OLS exactly. The first-stage partial F
    of the instrument is reported in extra['partial_f'].
    """
    controls = list(controls)
    cols = [y, endog, instrument, *controls]
    values = data[cols].to_numpy(dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValueError("panel values must be finite")
    n = len(values)

    ent_codes, n_ent = _codes(data[entity]) if entity in data.columns else (np.zeros(n, np.int64), 1)
    tim_codes, n_tim = _codes(data[time]) if time in data.columns else (np.zeros(n, np.int64), 1)
    M, iters = _demean(values, ent_codes, tim_codes, fe_entity, fe_time)
    yd = M[:, 0]
    xd = M[:, 1]
    zd = M[:, 2]
    Cd = M[:, 3:]

    if float(np.abs(zd).max(initial=0.0)) < 1e-12:
        raise WeakInstrumentError("instrument has no variation within the demeaned sample")

    Z1 = np.column_stack([zd, Cd]) if controls else zd.reshape(-1, 1)
    k1 = Z1.shape[1]
    if np.linalg.matrix_rank(Z1) < k1:
        raise RankError("first-stage regressors are collinear")
    delta = np.linalg.lstsq(Z1, xd, rcond=None)[0]
    fitted = Z1 @ delta
    u1 = xd - fitted

    # partial F of the excluded instrument
    if controls:
        gamma = np.linalg.lstsq(Cd, xd, rcond=None)[0]
        ssr_r = float(((xd - Cd @ gamma) ** 2).sum())
    else:
        ssr_r = float((xd**2).sum())
    ssr_u = float((u1**2).sum())
    dof = max(n - k1, 1)
    partial_f = math.inf if ssr_u == 0 else (ssr_r - ssr_u) / (ssr_u / dof)
    if partial_f < 1e-8:
        raise WeakInstrumentError(
            f"instrument is uninformative (partial F = {partial_f:.3g})"
        )

    X2 = np.column_stack([fitted, Cd]) if controls else fitted.reshape(-1, 1)
    k2 = X2.shape[1]
    if np.linalg.matrix_rank(X2) < k2:
        raise RankError("second-stage regressors are collinear")
    XtX = X2.T @ X2
    beta = np.linalg.solve(XtX, X2.T @ yd)
    X_orig = np.column_stack([xd, Cd]) if controls else xd.reshape(-1, 1)
    u2 = yd - X_orig @ beta
    bread = np.linalg.inv(XtX)

    psd_repaired = False
    g_ent = g_tim = None
    if cluster_entity is None and cluster_time is None:
        V = float(u2 @ u2 / max(n - k2, 1)) * bread
    else:
        V = np.zeros((k2, k2))
        ce = ct = None
        if cluster_entity is not None:
            ce, Ge = _codes(data[cluster_entity])
            g_ent = Ge
            V += _small_sample_factor(Ge, n, k2) * bread @ _cluster_meat(X2, u2, ce, Ge) @ bread
        if cluster_time is not None:
            ct, Gt = _codes(data[cluster_time])
            g_tim = Gt
            V += _small_sample_factor(Gt, n, k2) * bread @ _cluster_meat(X2, u2, ct, Gt) @ bread
        if cluster_entity is not None and cluster_time is not None:
            inter, Gi = _codes(list(zip(ce, ct)))
            V -= _small_sample_factor(Gi, n, k2) * bread @ _cluster_meat(X2, u2, inter, Gi) @ bread
            eigval, eigvec = np.linalg.eigh((V + V.T) / 2.0)
            if eigval.min() < 0:
                psd_repaired = True
                V = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T

    se = np.sqrt(np.maximum(np.diag(V), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = np.where(se > 0, beta / np.where(se > 0, se, 1.0), np.inf * np.sign(beta))
    ss_tot = float(((yd - yd.mean()) ** 2).sum())
    r2 = 1.0 - float(u2 @ u2) / ss_tot if ss_tot > 0 else float("nan")

    first_stage = FitResult(
        names=(instrument, *controls),
        coef=delta,
        cov=np.full((k1, k1), np.nan),
        se=np.full(k1, np.nan),
        tstats=np.full(k1, np.nan),
        r2_within=1.0 - ssr_u / float(((xd - xd.mean()) ** 2).sum()) if n > 1 else float("nan"),
        n_obs=n,
        n_entity_clusters=None,
        n_time_clusters=None,
        psd_repaired=False,
        demean_iterations=iters,
        residuals=u1,
    )
    return FitResult(
        names=(endog, *controls),
        coef=beta,
        cov=V,
        se=se,
        tstats=tstats,
        r2_within=r2,
        n_obs=n,
        n_entity_clusters=g_ent,
        n_time_clusters=g_tim,
        psd_repaired=psd_repaired,
        demean_iterations=iters,
        residuals=u2,
        extra={"first_stage": first_stage, "partial_f": float(partial_f)},
    )


def _positions(dates) -> dict:
    return {d: i for i, d in enumerate(dates)}


def abnormal_returns(stock_dates, stock_ret, market_dates, market_ret, event_date,
                     *, est_window: tuple = (-252, -22), event_window: tuple = (-10, 10),
                     min_obs: int = 60):
    """Market-model abnormal returns around one event.

    Dates are trading days; offsets are positional within the stock/market
    date intersection. Returns (relative_days, ar) over the available part
    of event_window. Raises InsufficientDataError when the estimation window
    holds fewer than min_obs observations, PanelError on zero market
    variance or an event date absent from the data.
    """
    m_by_date = dict(zip(market_dates, np.asarray(market_ret, dtype=np.float64)))
    dates = [d for d in stock_dates if d in m_by_date]
    r_by_date = dict(zip(stock_dates, np.asarray(stock_ret, dtype=np.float64)))
    if event_date not in dates:
        raise PanelError(f"event date {event_date} not in the return series")
    pos = _positions(dates)
    e = pos[event_date]

    est_idx = [i for i in range(e + est_window[0], e + est_window[1] + 1) if 0 <= i < len(dates)]
    if len(est_idx) < min_obs:
        raise InsufficientDataError(
            f"estimation window has {len(est_idx)} observations (< {min_obs})"
        )
    r = np.array([r_by_date[dates[i]] for i in est_idx])
    rm = np.array([m_by_date[dates[i]] for i in est_idx])
    var_m = float(np.var(rm))
    if var_m == 0.0:
        raise PanelError("zero market variance in the estimation window")
    beta = float(np.cov(rm, r, ddof=0)[0, 1] / var_m)
    alpha = float(r.mean() - beta * rm.mean())

    rel_days, ar = [], []
    for off in range(event_window[0], event_window[1] + 1):
        i = e + off
        if 0 <= i < len(dates):
            d = dates[i]
            rel_days.append(off)
            ar.append(r_by_date[d] - (alpha + beta * m_by_date[d]))
    return np.array(rel_days), np.array(ar), (alpha, beta)


@dataclass
class JumpRecord:
    """Information-acquisition proxy around one earnings announcement."""

    stock: str
    quarter: str
    jump: float
    car_narrow: float  # days [-1, +1]
    car_wide: float  # days [-21, +1]


def quarter_of(date) -> str:
    return f"{date.year}Q{(date.month - 1) // 3 + 1}"


def jump_ratio(ar_by_relday, stock: str = "", quarter: str = "",
               tiny: float = 1e-8):
    """JUMP = CAR[-1,1] / CAR[-21,1]; CARs sum simple abnormal returns.

    ar_by_relday must cover every trading day in [-21, +1] (precondition);
    returns None when |CAR_wide| < tiny (record dropped by the caller).
    """
    missing = [d for d in range(-21, 2) if d not in ar_by_relday]
    if missing:
        raise ValueError(f"missing AR days {missing}")
    car_wide = float(sum(ar_by_relday[d] for d in range(-21, 2)))
    car_narrow = float(sum(ar_by_relday[d] for d in range(-1, 2)))
    if abs(car_wide) < tiny:
        return None
    return JumpRecord(stock=stock, quarter=quarter, jump=car_narrow / car_wide,
                      car_narrow=car_narrow, car_wide=car_wide)


def welch_t(a, b):
    """Welch's unequal-variance t statistic, dof, and two-sided p-value.

    Two constant equal samples give t = 0, p = 1 (criterion for flat
    event paths).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    va = a.var(ddof=1) if a.size > 1 else 0.0
    vb = b.var(ddof=1) if b.size > 1 else 0.0
    denom = va / a.size + vb / b.size
    diff = float(a.mean() - b.mean())
    if denom == 0.0:
        t = 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return t, float(max(a.size + b.size - 2, 1)), (1.0 if t == 0.0 else 0.0)
    t = diff / math.sqrt(denom)
    dof = denom**2 / (
        (va / a.size) ** 2 / max(a.size - 1, 1) + (vb / b.size) ** 2 / max(b.size - 1, 1)
    )
    p = 2.0 * float(sps.t.sf(abs(t), dof))
    return float(t), float(dof), p


@dataclass
class EventStudyResult:
    rel_days: np.ndarray
    mean_by_day: np.ndarray
    n_by_day: np.ndarray
    window_mean: float  # days {0, +1, +2}
    baseline_mean: float  # all other days in the window
    pct_change: float
    t_stat: float
    dof: float
    p_value: float
    n_events: int


def event_study(metric_panel: pd.DataFrame, events, *, pre: int = 10, post: int = 10,
                stock_col: str = "stock", date_col: str = "date",
                value_col: str = "value") -> EventStudyResult:
    """Average a stock-day metric in event time and test the announcement
    window.

    events yields (stock, event_date). Relative days are positional within
    each stock's own sorted trading dates; partial windows contribute the
    days they cover. The window test is a two-sided Welch t comparing pooled
    observations on days {0, +1, +2} against all other days in [-pre, +post].
    """
    by_stock = {}
    for stock, grp in metric_panel.groupby(stock_col, sort=False):
        g = grp.sort_values(date_col)
        by_stock[stock] = (list(g[date_col]), g[value_col].to_numpy(dtype=np.float64))

    rel_days = np.arange(-pre, post + 1)
    pooled = {d: [] for d in rel_days}
    n_events = 0
    for stock, event_date in events:
        if stock not in by_stock:
            continue
        dates, vals = by_stock[stock]
        pos = {d: i for i, d in enumerate(dates)}
        if event_date not in pos:
            continue
        e = pos[event_date]
        hit = False
        for off in rel_days:
            i = e + off
            if 0 <= i < len(dates):
                pooled[off].append(vals[i])
                hit = True
        if hit:
            n_events += 1
    if n_events == 0:
        raise PanelError("no event has any window coverage")

    mean_by_day = np.array([np.mean(pooled[d]) if pooled[d] else np.nan for d in rel_days])
    n_by_day = np.array([len(pooled[d]) for d in rel_days])
    window = np.concatenate([pooled[d] for d in (0, 1, 2) if d in pooled and pooled[d]]) \
        if any(pooled.get(d) for d in (0, 1, 2)) else np.array([])
    baseline = np.concatenate([pooled[d] for d in rel_days if d not in (0, 1, 2) and pooled[d]]) \
        if any(pooled[d] for d in rel_days if d not in (0, 1, 2)) else np.array([])
    if window.size == 0 or baseline.size == 0:
        raise PanelError("empty announcement-window or baseline bucket")
    t, dof, p = welch_t(window, baseline)
    wm, bm = float(window.mean()), float(baseline.mean())
    pct = (wm - bm) / bm * 100.0 if bm != 0 else float("nan")
    return EventStudyResult(
        rel_days=rel_days,
        mean_by_day=mean_by_day,
        n_by_day=n_by_day,
        window_mean=wm,
        baseline_mean=bm,
        pct_change=pct,
        t_stat=t,
        dof=dof,
        p_value=p,
        n_events=n_events,
    )


def log_price_instrument(dates, prices, event_date, *, window: tuple = (-42, -22),
                         min_obs: int = 10) -> float:
    """Natural log of the mean price over trading days [window] relative to
    the event. Raises InsufficientDataError below min_obs observations."""
    dates = list(dates)
    prices = np.asarray(prices, dtype=np.float64)
    pos = {d: i for i, d in enumerate(dates)}
    if event_date not in pos:
        raise PanelError(f"event date {event_date} not in the price series")
    e = pos[event_date]
    idx = [i for i in range(e + window[0], e + window[1] + 1) if 0 <= i < len(dates)]
    if len(idx) < min_obs:
        raise InsufficientDataError(
            f"price window has {len(idx)} observations (< {min_obs})"
        )
    return float(np.log(prices[idx].mean()))
