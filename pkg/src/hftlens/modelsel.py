"""Scaling, scoring, Monte Carlo cross-validation, grid search, and the
ensemble-method comparison harness.

Cross-validation re-draws the row sample per iteration (uniform random,
without replacement) and splits off the test fraction; per-iteration RNG and
model seeds derive from SeedSequence substreams, so reports are reproducible
and method comparisons share identical splits (paired design).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin, clone

from hftlens.forest import TreeEnsembleRegressor
from hftlens.validation import check_fitted, check_matrix, check_targets

GRID_VALUES = (5, 10, 20, 40, 80, 160, 320, 640)


class UndefinedScoreError(ValueError):
    """R^2 undefined (zero target variance or too few observations)."""


class ZScoreScaler(TransformerMixin, BaseEstimator):
    """Column standardization (x - mean) / std with the population std.

    Zero-variance columns transform to all-zeros and are flagged in
    zero_variance_mask_.
    """

    def fit(self, X, y=None):
        X = check_matrix(X)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)  # population std
        self.zero_variance_mask_ = self.scale_ == 0.0
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_fitted(self, "mean_")
        X = check_matrix(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError("column count differs from the fitted schema")
        denom = np.where(self.zero_variance_mask_, 1.0, self.scale_)
        Z = (X - self.mean_) / denom
        Z[:, self.zero_variance_mask_] = 0.0
        return Z


def zscore_fit_apply(X):
    """Convenience: fit a ZScoreScaler and return (scaled X, scaler)."""
    scaler = ZScoreScaler().fit(X)
    return scaler.transform(X), scaler


def r_squared(y_true, y_pred) -> float:
    """R^2 = 1 - SS_res/SS_tot about the mean of y_true.

    Multi-target inputs score as the unweighted average of per-target R^2.
    """
    yt = np.asarray(y_true, dtype=np.float64)
    yp = np.asarray(y_pred, dtype=np.float64)
    if yt.shape != yp.shape:
        raise ValueError(f"shape mismatch: {yt.shape} vs {yp.shape}")
    if yt.ndim == 1:
        yt = yt.reshape(-1, 1)
        yp = yp.reshape(-1, 1)
    if yt.shape[0] < 2:
        raise UndefinedScoreError("R^2 needs at least 2 observations")
    scores = []
    for j in range(yt.shape[1]):
        ss_tot = float(((yt[:, j] - yt[:, j].mean()) ** 2).sum())
        if ss_tot <= 0.0:
            raise UndefinedScoreError(f"target {j} has zero variance")
        ss_res = float(((yt[:, j] - yp[:, j]) ** 2).sum())
        scores.append(1.0 - ss_res / ss_tot)
    return float(np.mean(scores))


@dataclass
class CvReport:
    """Per-iteration out-of-sample R^2 plus summary."""

    r2_per_iteration: tuple
    mean: float
    std: float
    params: dict
    n_iterations: int
    sample_size: int
    test_fraction: float
    seed: int


def _iteration_streams(seed: int, n_iter: int):
    return np.random.SeedSequence(seed).spawn(n_iter)


def monte_carlo_cv(model, X, Y, *, n_iter: int = 10, sample_size: int | None = None,
                   test_fraction: float = 0.25, seed: int = 0,
                   scale: bool = False) -> CvReport:
    """Repeated random sub-sampling validation.

    Each iteration samples sample_size rows without replacement, holds out
    test_fraction of them, fits a clone of model (seed overridden from the
    iteration substream) on the rest, and scores out-of-sample R^2. Scaling,
    when requested, is fitted on training rows only.
    """
    X = check_matrix(X)
    Y, _ = check_targets(Y, len(X))
    n = len(X)
    if sample_size is None:
        sample_size = n
    if sample_size > n:
        raise ValueError(f"sample_size {sample_size} exceeds {n} rows")
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    n_test = int(round(sample_size * test_fraction))
    if n_test < 1 or sample_size - n_test < 1:
        raise ValueError("sample too small to split at this test_fraction")
    if n_iter < 1:
        raise ValueError("n_iter must be >= 1")

    scores = []
    for child in _iteration_streams(seed, n_iter):
        rng = np.random.default_rng(child)
        rows = rng.choice(n, size=sample_size, replace=False)
        test, train = rows[:n_test], rows[n_test:]
        X_train, X_test = X[train], X[test]
        if scale:
            scaler = ZScoreScaler().fit(X_train)
            X_train, X_test = scaler.transform(X_train), scaler.transform(X_test)
        est = clone(model)
        est.set_params(seed=int(child.generate_state(1, dtype=np.uint64)[0]))
        est.fit(X_train, Y[train])
        pred = np.asarray(est.predict(X_test), dtype=np.float64).reshape(n_test, -1)
        scores.append(r_squared(Y[test], pred))
    scores = np.asarray(scores)
    return CvReport(
        r2_per_iteration=tuple(float(s) for s in scores),
        mean=float(scores.mean()),
        std=float(scores.std()),  # population std: one iteration reports 0
        params=model.get_params() if hasattr(model, "get_params") else {},
        n_iterations=n_iter,
        sample_size=sample_size,
        test_fraction=test_fraction,
        seed=seed,
    )


@dataclass
class GridCell:
    rank: int
    mean: float
    std: float
    min_split_samples: int
    n_trees: int
    report: CvReport = field(repr=False, default=None)


def grid_search(X, Y, *, min_split_grid=GRID_VALUES, n_trees_grid=GRID_VALUES,
                method: str = "extra", multi_target: bool = True,
                n_iter: int = 10, sample_size: int | None = None,
                test_fraction: float = 0.25, seed: int = 0,
                n_threads: int | None = None, scale: bool = False) -> list:
    """CV every (min_split, n_trees) pair and rank by mean R^2 (descending);
    ties prefer the cheaper model: fewer trees, then larger min_split.

    Every cell shares the same CV seed, hence identical per-iteration
    samples and splits (paired across cells).
    """
    if not min_split_grid or not n_trees_grid:
        raise ValueError("grid axes must be non-empty")
    cells = []
    for min_split in min_split_grid:
        for n_trees in n_trees_grid:
            model = TreeEnsembleRegressor(
                n_trees=n_trees, min_split_samples=min_split, method=method,
                multi_target=multi_target, n_threads=n_threads,
            )
            report = monte_carlo_cv(
                model, X, Y, n_iter=n_iter, sample_size=sample_size,
                test_fraction=test_fraction, seed=seed, scale=scale,
            )
            cells.append(GridCell(0, report.mean, report.std, min_split, n_trees, report))
    cells.sort(key=lambda c: (-c.mean, c.n_trees, -c.min_split_samples))
    for rank, cell in enumerate(cells, start=1):
        cell.rank = rank
    return cells


@dataclass
class MethodResult:
    method: str
    mean: float
    std: float
    report: CvReport = field(repr=False, default=None)


METHOD_SETUPS = (
    ("RF-MM", "forest", False),
    ("RF", "forest", True),
    ("ET-MM", "extra", False),
    ("ET", "extra", True),
)


def compare_methods(X, Y, *, n_trees: int = 50, min_split_samples: int = 50,
                    n_iter: int = 10, sample_size: int | None = None,
                    test_fraction: float = 0.25, seed: int = 0,
                    n_threads: int | None = None, scale: bool = True) -> list:
    """Paired CV of {RF-MM, RF, ET-MM, ET}: every method sees identical
    per-iteration samples/splits (shared seed). Rows sorted ascending by
    mean. z-scoring is on by default for this harness.
    """
    Y2, _ = check_targets(Y, len(np.asarray(X)))
    if Y2.shape[1] < 2:
        raise ValueError("compare_methods requires both targets")
    rows = []
    for name, method, multi_target in METHOD_SETUPS:
        model = TreeEnsembleRegressor(
            n_trees=n_trees, min_split_samples=min_split_samples, method=method,
            multi_target=multi_target, n_threads=n_threads,
        )
        report = monte_carlo_cv(
            model, X, Y, n_iter=n_iter, sample_size=sample_size,
            test_fraction=test_fraction, seed=seed, scale=scale,
        )
        rows.append(MethodResult(name, report.mean, report.std, report))
    rows.sort(key=lambda r: r.mean)
    return rows


def write_cv_report_csv(report: CvReport, path) -> None:
    """`iter,r2` rows, one per CV iteration."""
    with open(path, "w", newline="") as fh:
        fh.write("iter,r2\n")
        for i, r2 in enumerate(report.r2_per_iteration, start=1):
            fh.write(f"{i},{r2!r}\n")


def write_cv_summary_csv(report: CvReport, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("mean,std,n_iterations,sample_size,test_fraction,seed\n")
        fh.write(
            f"{report.mean!r},{report.std!r},{report.n_iterations},"
            f"{report.sample_size},{report.test_fraction!r},{report.seed}\n"
        )


def write_grid_csv(cells, path) -> None:
    """`rank,mean,std,split_samples,ensemble_size` ranked rows."""
    with open(path, "w", newline="") as fh:
        fh.write("rank,mean,std,split_samples,ensemble_size\n")
        for c in cells:
            fh.write(f"{c.rank},{c.mean!r},{c.std!r},{c.min_split_samples},{c.n_trees}\n")


def write_compare_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("method,mean,std\n")
        for r in rows:
            fh.write(f"{r.method},{r.mean!r},{r.std!r}\n")
