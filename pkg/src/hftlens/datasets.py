"""Feature-space benchmark datasets.

make_teacher_matrix builds a desk-scale stand-in for proprietary training
data: 24 columns shaped like the daily microstructure inputs and two
fraction targets that are logistic surfaces of a few informative columns
(saturating, interacting, hence nonlinear) plus Gaussian noise scaled so
the best possible predictor scores a chosen oracle R^2 per target.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from hftlens.features import FEATURE_NAMES, FeatureMatrix


def _expit(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _standardized(col):
    s = col.std()
    return (col - col.mean()) / (s if s > 0 else 1.0)


def make_teacher_matrix(n_rows: int = 30_000, seed: int = 0, oracle_r2: float = 0.85):
    """Returns (FeatureMatrix with targets, oracle predictions (n, 2)).

    The oracle predictions are the noiseless target surfaces; scoring the
    noisy targets against them realizes R^2 ~= oracle_r2.
    """
    if not 0.0 < oracle_r2 < 1.0:
        raise ValueError("oracle_r2 must be in (0, 1)")
    rng = np.random.default_rng(seed)
    n = n_rows
    cols = {}

    log_tt = rng.normal(7.0, 1.1, n)
    cols["TOTAL_TRADE"] = np.round(np.exp(log_tt))
    avg_price = np.exp(rng.normal(3.4, 0.5, n))
    cols["AVG_PRICE_M"] = avg_price
    cols["RET_MKT_M"] = rng.normal(0.0, 0.02, n)
    dollar = cols["TOTAL_TRADE"] * avg_price * np.exp(rng.normal(4.6, 0.3, n))
    cols["TOTAL_DOLLAR_M"] = dollar
    iso_share = rng.beta(2.0, 12.0, n)
    cols["ISO_DOLLAR"] = iso_share * dollar
    cols["NBOQTY_BEFORE_CLOSE"] = np.round(np.exp(rng.normal(6.0, 0.8, n)))
    cols["NBBQTY_BEFORE_CLOSE"] = np.round(np.exp(rng.normal(6.0, 0.8, n)))
    log_depth = rng.normal(9.5, 0.9, n)
    depth_dollar = np.exp(log_depth)
    cols["BESTOFRDEPTH_DOLLAR_TW"] = depth_dollar * np.exp(rng.normal(0.0, 0.15, n))
    cols["BESTBIDDEPTH_DOLLAR_TW"] = depth_dollar * np.exp(rng.normal(0.0, 0.15, n))
    cols["BESTOFRDEPTH_SHARE_TW"] = cols["BESTOFRDEPTH_DOLLAR_TW"] / avg_price
    cols["BESTBIDDEPTH_SHARE_TW"] = cols["BESTBIDDEPTH_DOLLAR_TW"] / avg_price
    spread = np.exp(rng.normal(-6.5, 0.6, n))
    cols["QUOTEDSPREAD_PERCENT_TW"] = spread
    cols["EFFECTIVESPREAD_PERCENT_DW"] = spread * rng.uniform(0.5, 1.1, n)
    realized = cols["EFFECTIVESPREAD_PERCENT_DW"] * rng.uniform(-0.5, 0.9, n)
    cols["PERCENTREALIZEDSPREAD_LR_DW"] = realized
    cols["PERCENTPRICEIMPACT_LR_DW"] = cols["EFFECTIVESPREAD_PERCENT_DW"] - realized
    cols["BS_RATIO_VOL"] = rng.beta(1.6, 5.0, n)
    cols["TSIGNSQRTDVOL1"] = rng.normal(0.0, 2e-6, n)
    ivol = np.exp(rng.normal(-17.0, 1.0, n))
    cols["IVOL_Q"] = ivol
    cols["HINDEX"] = 1.0 / 13.0 + rng.beta(1.5, 8.0, n) * (1.0 - 1.0 / 13.0)
    cols["VAR_RATIO3"] = np.abs(rng.normal(0.0, 0.35, n))
    cols["TOTAL_DV_RETAIL"] = dollar * rng.beta(1.5, 20.0, n)
    cols["BS_RATIO_RETAIL_VOL"] = rng.beta(1.3, 4.0, n)
    cols["TOTAL_DV_INST20K"] = dollar * rng.beta(3.0, 6.0, n)
    cols["BS_RATIO_INST20K_VOL"] = rng.beta(1.6, 5.0, n)

    z_tt = _standardized(log_tt)
    z_depth = _standardized(log_depth)
    z_iso = _standardized(np.log1p(cols["ISO_DOLLAR"]))
    z_vol = _standardized(np.log(ivol))

    g_d = -0.35 + 0.95 * np.tanh(z_tt) + 0.75 * np.tanh(z_iso) \
        - 0.65 * np.tanh(z_depth) + 0.35 * z_vol * np.tanh(z_tt)
    g_s = -0.85 + 0.70 * np.tanh(z_tt) + 0.95 * np.tanh(z_depth) \
        - 0.40 * z_vol + 0.25 * np.tanh(z_iso) * np.tanh(z_depth)
    pi = np.column_stack([_expit(g_d), _expit(g_s)])

    noise_scale = pi.std(axis=0) * np.sqrt((1.0 - oracle_r2) / oracle_r2)
    Y = np.clip(pi + rng.normal(0.0, 1.0, pi.shape) * noise_scale, 0.0, 1.0)

    X = np.column_stack([cols[name] for name in FEATURE_NAMES])
    start = dt.date(2009, 1, 2)
    stocks = [f"T{i // 250:04d}" for i in range(n)]
    dates = [start + dt.timedelta(days=i % 250) for i in range(n)]
    matrix = FeatureMatrix(stocks=stocks, dates=dates, X=X, Y=Y)
    return matrix, pi
