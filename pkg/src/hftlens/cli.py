"""Command-line pipeline: synth -> features/targets -> train -> predict,
plus cross-validation, interpretation, latency-arbitrage scanning, and the
panel-econometric commands.

Exit codes: 0 success, 1 usage error, 2 data error. Logs go to stderr; data
goes to files (or stdout for the small report commands). A key=value config
file supplies defaults that flags override; the effective configuration is
echoed as <command>_config.txt next to the primary output.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from hftlens import datasets, features, forest, interpret, latarb, modelsel, panel, tickdata

log = logging.getLogger("hftlens")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

THREADS_ENV = "HFTLENS_THREADS"


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1 (argparse default of 2 is reserved for data errors)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(p: _Parser) -> None:
    p.add_argument("--config", help="key=value config file; flags override")
    p.add_argument("--log-level", default="INFO",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--threads", type=int,
                   default=int(os.environ.get(THREADS_ENV, 0)) or None,
                   help=f"worker threads (default: ${THREADS_ENV} or all cores)")


def _int_list(text: str) -> list:
    return [int(v) for v in text.split(",") if v.strip() != ""]


def _str_list(text: str) -> list:
    return [v.strip() for v in text.split(",") if v.strip() != ""]


def build_parser() -> _Parser:
    root = _Parser(prog="hftlens", description=__doc__)
    sub = root.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        return p

    p = cmd("synth", "generate a synthetic labeled market")
    p.add_argument("--stocks", type=int, default=10)
    p.add_argument("--days", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trade-intensity", type=_int_list, default=[300, 2000],
                   metavar="LO,HI")
    p.add_argument("--volatility", type=_str_list, default=["0.002", "0.02"],
                   metavar="LO,HI")
    p.add_argument("--out", required=True, help="output directory")

    p = cmd("features", "compute the 24 daily features from tick CSVs")
    p.add_argument("--trades", required=True)
    p.add_argument("--quotes", required=True)
    p.add_argument("--sort", action="store_true",
                   help="sort non-monotone groups instead of failing")
    p.add_argument("--out", required=True, help="features.csv path")

    p = cmd("targets", "compute HFT target fractions from labeled trades")
    p.add_argument("--trades", required=True, help="labeled trades CSV")
    p.add_argument("--sort", action="store_true")
    p.add_argument("--out", required=True)

    p = cmd("train", "fit a tree ensemble on a feature matrix with targets")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=["extra", "forest"], default="extra")
    p.add_argument("--trees", type=int, default=640)
    p.add_argument("--min-split", type=int, default=5)
    p.add_argument("--k-features", type=int, default=None)
    p.add_argument("--multi-model", action="store_true",
                   help="one internal ensemble per target")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model file path")

    p = cmd("predict", "predict HFT fractions for a feature matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)

    p = cmd("cv", "Monte Carlo cross-validation of one configuration")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=["extra", "forest"], default="extra")
    p.add_argument("--trees", type=int, default=640)
    p.add_argument("--min-split", type=int, default=5)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--scale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="per-iteration report CSV")
    p.add_argument("--summary", default=None, help="optional summary CSV")

    p = cmd("gridsearch", "8x8 (min_split, n_trees) grid search")
    p.add_argument("--features", required=True)
    p.add_argument("--method", choices=["extra", "forest"], default="extra")
    p.add_argument("--min-split-grid", type=_int_list,
                   default=list(modelsel.GRID_VALUES))
    p.add_argument("--trees-grid", type=_int_list,
                   default=list(modelsel.GRID_VALUES))
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = cmd("compare", "paired CV of RF-MM / RF / ET-MM / ET")
    p.add_argument("--features", required=True)
    p.add_argument("--trees", type=int, default=50)
    p.add_argument("--min-split", type=int, default=50)
    p.add_argument("--iters", type=int, default=10)
    p.add_argument("--sample-size", type=int, default=None)
    p.add_argument("--test-fraction", type=float, default=0.25)
    p.add_argument("--no-scale", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = cmd("importance", "impurity feature importance of a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)

    p = cmd("pdp", "partial dependence curves of a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--feature", action="append", required=True,
                   help="feature name; repeatable")
    p.add_argument("--grid-points", type=int, default=20)
    p.add_argument("--sample", type=int, default=None,
                   help="marginalize over a row subsample of this size")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = cmd("latarb", "scan NBBO quotes for latency-arbitrage opportunities")
    p.add_argument("--quotes", required=True)
    p.add_argument("--tick-size", type=float, default=latarb.TICK_SIZE)
    p.add_argument("--sort", action="store_true")
    p.add_argument("--out", required=True, help="nlao.csv path")
    p.add_argument("--events", default=None, help="optional per-event CSV")

    p = cmd("eventstudy", "event-time path and announcement-window test")
    p.add_argument("--panel", required=True, help="CSV stock,date,value")
    p.add_argument("--events", required=True, help="CSV stock,event_date,kind")
    p.add_argument("--kind", default=None, help="filter events by kind")
    p.add_argument("--value-col", default="value")
    p.add_argument("--pre", type=int, default=10)
    p.add_argument("--post", type=int, default=10)
    p.add_argument("--out", required=True, help="per-relative-day CSV")

    p = cmd("did", "difference-in-differences with two-way FE")
    p.add_argument("--panel", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--treated", required=True)
    p.add_argument("--post", required=True)
    p.add_argument("--controls", type=_str_list, default=[])
    p.add_argument("--out", required=True, help="fit JSON path")

    p = cmd("ols", "panel OLS with optional two-way FE and double clustering")
    p.add_argument("--panel", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--x", type=_str_list, required=True)
    p.add_argument("--no-fe-entity", action="store_true")
    p.add_argument("--no-fe-time", action="store_true")
    p.add_argument("--cluster-entity", default="cluster_entity")
    p.add_argument("--cluster-time", default="cluster_time")
    p.add_argument("--no-cluster", action="store_true")
    p.add_argument("--out", required=True)

    p = cmd("iv", "two-stage least squares with two-way FE")
    p.add_argument("--panel", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--endog", required=True)
    p.add_argument("--instrument", required=True)
    p.add_argument("--controls", type=_str_list, default=[])
    p.add_argument("--out", required=True)

    p = cmd("winsorize", "clamp one CSV column at the p / 1-p quantiles")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--p", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = cmd("stats", "summary statistics of one CSV column")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--out", default=None, help="optional JSON path")

    return root


def _load_config(path: str) -> dict:
    cfg = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (need key=value): {raw!r}")
        key, value = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _apply_config(parser: _Parser, argv: list) -> list:
    """Load --config defaults before the real parse; flags still win."""
    if "--config" not in argv:
        return argv
    path = argv[argv.index("--config") + 1]
    cfg = _load_config(path)
    parser.set_defaults(**cfg)
    return argv


def _echo_config(args, primary_out) -> None:
    out_dir = Path(primary_out)
    if not out_dir.is_dir():
        out_dir = out_dir.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []
    for key in sorted(vars(args)):
        if key in ("config", "func"):
            continue
        lines.append(f"{key}={getattr(args, key)}")
    (out_dir / f"{args.command}_config.txt").write_text("\n".join(lines) + "\n")


def _read_features(path, mode: str):
    matrix = features.FeatureMatrix.from_csv(path)
    clean, dropped = features.assemble_feature_matrix(matrix, mode=mode)
    if dropped:
        log.info("dropped %d incomplete rows of %d", dropped, len(matrix))
    return clean


def _parse_typed(args, key, cast):
    # config-file values arrive as strings; coerce lazily
    value = getattr(args, key)
    if isinstance(value, str):
        setattr(args, key, cast(value))
    return getattr(args, key)


# --- commands ---------------------------------------------------------------


def run_synth(args) -> str:
    vol = tuple(float(v) for v in args.volatility)
    intensity = tuple(float(v) for v in args.trade_intensity)
    config = tickdata.SynthConfig(
        n_stocks=args.stocks, n_days=args.days, seed=args.seed,
        volatility_range=vol, trade_intensity_range=intensity,
    )
    market = tickdata.synth_market(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    series = [s for s, _ in market]
    tickdata.write_tick_file(series, out / "trades.csv", kind="labeled")
    tickdata.write_tick_file(series, out / "quotes.csv", kind="quotes")
    with open(out / "latent.csv", "w", newline="") as fh:
        fh.write("stock,date,volatility,trade_intensity,depth,pi_d,pi_s\n")
        for _, latent in market:
            fh.write(
                f"{latent['stock']},{latent['date'].isoformat()},"
                f"{latent['volatility']!r},{latent['trade_intensity']!r},"
                f"{latent['depth']!r},{latent['pi_d']!r},{latent['pi_s']!r}\n"
            )
    log.info("wrote %d stock-days to %s", len(series), out)
    return str(out)


def _parse_pairs(trades_path, quotes_path, sort: bool):
    kind = "trades"
    with open(trades_path) as fh:
        header = fh.readline().strip().split(",")
    if header == list(tickdata.LABELED_TRADE_COLUMNS):
        kind = "labeled"
    t_series, t_report = tickdata.parse_tick_file(trades_path, kind=kind, sort=sort)
    q_series, q_report = tickdata.parse_tick_file(quotes_path, kind="quotes", sort=sort)
    for report, name in ((t_report, "trades"), (q_report, "quotes")):
        if report.n_rejected:
            log.warning("%s: rejected %d rows (first: line %d, %s)", name,
                        report.n_rejected, *report.rejects[0])
    quotes_by_key = {(s.stock_id, s.date): s.quotes for s in q_series}
    merged = []
    for ts in t_series:
        key = (ts.stock_id, ts.date)
        if key not in quotes_by_key:
            log.warning("no quotes for %s %s; day skipped", *key)
            continue
        merged.append(
            tickdata.TickSeries(ts.stock_id, ts.date, trades=ts.trades,
                                quotes=quotes_by_key[key])
        )
    return merged, kind == "labeled"


def run_features(args) -> str:
    merged, labeled = _parse_pairs(args.trades, args.quotes, args.sort)
    pairs = []
    for series in merged:
        target = tickdata.compute_targets(series) if labeled and len(series.trades) else None
        pairs.append((series, target))
    matrix = features.build_feature_rows(pairs)
    matrix.to_csv(args.out)
    log.info("wrote %d feature rows to %s", len(matrix), args.out)
    return args.out


def run_targets(args) -> str:
    series, report = tickdata.parse_tick_file(args.trades, kind="labeled", sort=args.sort)
    if report.n_rejected:
        log.warning("rejected %d rows", report.n_rejected)
    with open(args.out, "w", newline="") as fh:
        fh.write("stock,date,hft_d,hft_s\n")
        for s in series:
            tp = tickdata.compute_targets(s)
            fh.write(f"{s.stock_id},{s.date.isoformat()},{tp.hft_d!r},{tp.hft_s!r}\n")
    log.info("wrote %d target rows to %s", len(series), args.out)
    return args.out


def run_train(args) -> str:
    matrix = _read_features(args.features, mode="train")
    model = forest.TreeEnsembleRegressor(
        n_trees=args.trees, min_split_samples=args.min_split, method=args.method,
        k_features=args.k_features, multi_target=not args.multi_model,
        seed=args.seed, n_threads=args.threads,
    )
    model.fit(matrix.X, matrix.Y, feature_names=matrix.feature_names,
              target_names=matrix.target_names)
    model.save(args.out)
    log.info("trained %s on %d rows -> %s", args.method, len(matrix), args.out)
    return args.out


def run_predict(args) -> str:
    model = forest.load_model(args.model)
    matrix = _read_features(args.features, mode="predict")
    model.check_schema(matrix.fingerprint)
    pred = model.predict(matrix.X)
    pred = np.asarray(pred, dtype=np.float64).reshape(len(matrix), -1)
    with open(args.out, "w", newline="") as fh:
        fh.write("stock,date," + ",".join(model.target_names_) + "\n")
        for i in range(len(matrix)):
            vals = ",".join(repr(float(v)) for v in pred[i])
            fh.write(f"{matrix.stocks[i]},{matrix.dates[i].isoformat()},{vals}\n")
    log.info("wrote %d predictions to %s", len(matrix), args.out)
    return args.out


def run_cv(args) -> str:
    matrix = _read_features(args.features, mode="train")
    model = forest.TreeEnsembleRegressor(
        n_trees=args.trees, min_split_samples=args.min_split, method=args.method,
        n_threads=args.threads,
    )
    report = modelsel.monte_carlo_cv(
        model, matrix.X, matrix.Y, n_iter=args.iters, sample_size=args.sample_size,
        test_fraction=args.test_fraction, seed=args.seed, scale=args.scale,
    )
    modelsel.write_cv_report_csv(report, args.out)
    if args.summary:
        modelsel.write_cv_summary_csv(report, args.summary)
    print(f"mean R^2 {report.mean:.6f} std {report.std:.6f} "
          f"({report.n_iterations} iterations)")
    return args.out


def run_gridsearch(args) -> str:
    matrix = _read_features(args.features, mode="train")
    cells = modelsel.grid_search(
        matrix.X, matrix.Y, min_split_grid=args.min_split_grid,
        n_trees_grid=args.trees_grid, method=args.method, n_iter=args.iters,
        sample_size=args.sample_size, test_fraction=args.test_fraction,
        seed=args.seed, n_threads=args.threads,
    )
    modelsel.write_grid_csv(cells, args.out)
    best = cells[0]
    print(f"best: min_split {best.min_split_samples} trees {best.n_trees} "
          f"mean R^2 {best.mean:.6f}")
    return args.out


def run_compare(args) -> str:
    matrix = _read_features(args.features, mode="train")
    rows = modelsel.compare_methods(
        matrix.X, matrix.Y, n_trees=args.trees, min_split_samples=args.min_split,
        n_iter=args.iters, sample_size=args.sample_size,
        test_fraction=args.test_fraction, seed=args.seed,
        n_threads=args.threads, scale=not args.no_scale,
    )
    modelsel.write_compare_csv(rows, args.out)
    for r in rows:
        print(f"{r.method}\t{r.mean:.3f}\t{r.std:.3f}")
    return args.out


def run_importance(args) -> str:
    model = forest.load_model(args.model)
    report = interpret.feature_importance(model)
    if report.degenerate:
        log.warning("importance is degenerate (no splits in any tree)")
    interpret.write_importance_csv(report, args.out)
    return args.out


def run_pdp(args) -> str:
    model = forest.load_model(args.model)
    matrix = _read_features(args.features, mode="predict")
    model.check_schema(matrix.fingerprint)
    X = matrix.X
    if args.sample is not None and args.sample < len(X):
        rng = np.random.default_rng(args.seed)
        X = X[rng.choice(len(X), size=args.sample, replace=False)]
    curves = [
        interpret.partial_dependence(model, X, name, n_grid=args.grid_points)
        for name in args.feature
    ]
    interpret.write_pdp_csv(curves, args.out)
    return args.out


def run_latarb(args) -> str:
    series, report = tickdata.parse_tick_file(args.quotes, kind="quotes", sort=args.sort)
    if report.n_rejected:
        log.warning("rejected %d rows", report.n_rejected)
    records, keyed_events = [], []
    skipped = 0
    for s in series:
        day = tickdata.TickSeries(s.stock_id, s.date, quotes=latarb.session_quotes(s))
        events, record, diag = latarb.scan_latency_arbitrage(
            day, tick_size=args.tick_size, collect_events=args.events is not None,
        )
        skipped += diag.crossed_skipped
        records.append(record)
        keyed_events.extend((s.stock_id, s.date, ev) for ev in events)
    latarb.write_nlao_csv(records, args.out)
    if args.events is not None:
        latarb.write_events_csv(keyed_events, args.events)
    if skipped:
        log.info("skipped %d crossed-quote pairs", skipped)
    log.info("scanned %d stock-days -> %s", len(records), args.out)
    return args.out


def _read_events(path, kind_filter=None):
    df = pd.read_csv(path, dtype={"stock": str})
    if kind_filter is not None and "kind" in df.columns:
        df = df[df["kind"] == kind_filter]
    return [
        (row.stock, dt.date.fromisoformat(str(row.event_date)))
        for row in df.itertuples()
    ]


def run_eventstudy(args) -> str:
    df = pd.read_csv(args.panel, dtype={"stock": str})
    df["date"] = [dt.date.fromisoformat(str(d)) for d in df["date"]]
    events = _read_events(args.events, args.kind)
    result = panel.event_study(
        df, events, pre=args.pre, post=args.post, value_col=args.value_col,
    )
    with open(args.out, "w", newline="") as fh:
        fh.write("relative_day,mean,n_obs\n")
        for d, m, n in zip(result.rel_days, result.mean_by_day, result.n_by_day):
            cell = "" if np.isnan(m) else repr(float(m))
            fh.write(f"{d},{cell},{n}\n")
    print(json.dumps({
        "window_mean": result.window_mean,
        "baseline_mean": result.baseline_mean,
        "pct_change": result.pct_change,
        "t_stat": result.t_stat,
        "p_value": result.p_value,
        "n_events": result.n_events,
    }, indent=2))
    return args.out


def run_did(args) -> str:
    df = pd.read_csv(args.panel)
    result = panel.did_estimate(
        df, args.y, args.treated, args.post, args.controls,
        cluster_entity="cluster_entity" if "cluster_entity" in df.columns else "entity",
        cluster_time="cluster_time" if "cluster_time" in df.columns else "time",
    )
    Path(args.out).write_text(result.to_json() + "\n")
    print(result.to_json())
    return args.out


def run_ols(args) -> str:
    df = pd.read_csv(args.panel)
    cluster_entity = None if args.no_cluster else (
        args.cluster_entity if args.cluster_entity in df.columns else "entity")
    cluster_time = None if args.no_cluster else (
        args.cluster_time if args.cluster_time in df.columns else "time")
    result = panel.panel_ols(
        df, args.y, args.x,
        fe_entity=not args.no_fe_entity, fe_time=not args.no_fe_time,
        cluster_entity=cluster_entity, cluster_time=cluster_time,
    )
    Path(args.out).write_text(result.to_json() + "\n")
    print(result.to_json())
    return args.out


def run_iv(args) -> str:
    df = pd.read_csv(args.panel)
    result = panel.two_sls(
        df, args.y, args.endog, args.instrument, args.controls,
        cluster_entity="cluster_entity" if "cluster_entity" in df.columns else "entity",
        cluster_time="cluster_time" if "cluster_time" in df.columns else "time",
    )
    Path(args.out).write_text(result.to_json() + "\n")
    print(result.to_json())
    return args.out


def run_winsorize(args) -> str:
    df = pd.read_csv(args.infile)
    if args.column not in df.columns:
        raise ValueError(f"column {args.column!r} not in {args.infile}")
    df[args.column] = panel.winsorize(df[args.column].to_numpy(dtype=np.float64), args.p)
    df.to_csv(args.out, index=False)
    return args.out


def run_stats(args) -> str:
    df = pd.read_csv(args.infile)
    if args.column not in df.columns:
        raise ValueError(f"column {args.column!r} not in {args.infile}")
    stats = panel.summary_stats(df[args.column].to_numpy(dtype=np.float64))
    text = json.dumps(stats, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return args.out or args.infile


_RUNNERS = {
    "synth": run_synth,
    "features": run_features,
    "targets": run_targets,
    "train": run_train,
    "predict": run_predict,
    "cv": run_cv,
    "gridsearch": run_gridsearch,
    "compare": run_compare,
    "importance": run_importance,
    "pdp": run_pdp,
    "latarb": run_latarb,
    "eventstudy": run_eventstudy,
    "did": run_did,
    "ols": run_ols,
    "iv": run_iv,
    "winsorize": run_winsorize,
    "stats": run_stats,
}

_DATA_ERRORS = (
    tickdata.TickDataError,
    features.FeatureError,
    panel.PanelError,
    forest.ModelFormatError,
    modelsel.UndefinedScoreError,
    ValueError,
    KeyError,
    FileNotFoundError,
)

_INT_KEYS = ("stocks", "days", "seed", "trees", "min_split", "iters",
             "sample_size", "pre", "post", "grid_points", "sample", "threads",
             "k_features")
_FLOAT_KEYS = ("test_fraction", "tick_size", "p")


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        argv = _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        print(f"hftlens: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        stream=sys.stderr, level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
    )
    # config-file values arrive as strings
    for key in _INT_KEYS:
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, int(getattr(args, key)))
    for key in _FLOAT_KEYS:
        if hasattr(args, key) and isinstance(getattr(args, key), str):
            setattr(args, key, float(getattr(args, key)))

    try:
        primary_out = _RUNNERS[args.command](args)
        _echo_config(args, primary_out)
    except _DATA_ERRORS as exc:
        log.error("%s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
