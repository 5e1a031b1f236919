"""Desk-scale toolkit for estimating liquidity-demanding and liquidity-supplying
HFT activity from tick data.

Pipeline: parse or synthesize trade/NBBO streams, compute the 24 daily
microstructure features, train randomized tree ensembles on labeled markets,
predict HFT volume fractions, scan quote streams for latency-arbitrage
opportunities, and validate with panel econometrics.
"""

from hftlens.tickdata import (
    Trade,
    LabeledTrade,
    Quote,
    TickSeries,
    TargetPair,
    SynthConfig,
    parse_tick_file,
    write_tick_file,
    synth_market,
    compute_targets,
)
from hftlens.features import FEATURE_NAMES, FeatureMatrix, compute_stock_day_features
from hftlens.forest import TreeEnsembleRegressor, gini_impurity, mse, variance_reduction
from hftlens.modelsel import ZScoreScaler, r_squared, monte_carlo_cv, grid_search, compare_methods
from hftlens.interpret import feature_importance, partial_dependence
from hftlens.latarb import scan_latency_arbitrage
from hftlens.panel import (
    FitResult,
    winsorize,
    summary_stats,
    panel_ols,
    did_estimate,
    two_sls,
    abnormal_returns,
    jump_ratio,
    event_study,
    log_price_instrument,
)

__version__ = "0.1.0"

__all__ = [
    "Trade",
    "LabeledTrade",
    "Quote",
    "TickSeries",
    "TargetPair",
    "SynthConfig",
    "parse_tick_file",
    "write_tick_file",
    "synth_market",
    "compute_targets",
    "FEATURE_NAMES",
    "FeatureMatrix",
    "compute_stock_day_features",
    "TreeEnsembleRegressor",
    "gini_impurity",
    "mse",
    "variance_reduction",
    "ZScoreScaler",
    "r_squared",
    "monte_carlo_cv",
    "grid_search",
    "compare_methods",
    "feature_importance",
    "partial_dependence",
    "scan_latency_arbitrage",
    "FitResult",
    "winsorize",
    "summary_stats",
    "panel_ols",
    "did_estimate",
    "two_sls",
    "abnormal_returns",
    "jump_ratio",
    "event_study",
    "log_price_instrument",
]
