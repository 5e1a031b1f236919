"""Post-hoc model interpretation: impurity importance and partial dependence."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from hftlens.validation import check_fitted, check_matrix


@dataclass
class ImportanceReport:
    """Mean decrease in node impurity per feature, normalized per tree.

    mean sums to 1 unless degenerate (every tree a bare leaf); std is the
    across-tree dispersion of the normalized contributions.
    """

    feature_names: tuple
    mean: np.ndarray
    std: np.ndarray
    degenerate: bool


@dataclass
class PdpCurve:
    """Average model response as one feature sweeps its observed range."""

    feature_index: int
    feature_name: str
    grid: np.ndarray
    response: np.ndarray  # (n_grid, n_targets)
    target_names: tuple
    constant: bool = False


def feature_importance(estimator) -> ImportanceReport:
    """Per tree, every internal node credits (n_node/n_root) * variance
    reduction to its split feature; per-tree totals are normalized to sum 1
    before averaging so the across-tree std is meaningful. Trees without any
    split carry no information and are skipped; if all trees are bare
    leaves the report is all-zero and flagged degenerate.
    """
    check_fitted(estimator, "tree_groups_")
    p = estimator.n_features_in_
    per_tree = []
    for tree in estimator.trees_:
        contrib = np.zeros(p)
        internal = tree.feature >= 0
        if not internal.any():
            continue
        weights = tree.n_samples[internal] / tree.n_samples[0]
        np.add.at(contrib, tree.feature[internal], weights * tree.gain[internal])
        total = contrib.sum()
        if total > 0:
            per_tree.append(contrib / total)
    names = estimator.feature_names_ or tuple(f"f{j}" for j in range(p))
    if not per_tree:
        return ImportanceReport(names, np.zeros(p), np.zeros(p), degenerate=True)
    stacked = np.vstack(per_tree)
    return ImportanceReport(
        feature_names=names,
        mean=stacked.mean(axis=0),
        std=stacked.std(axis=0),
        degenerate=False,
    )


def _resolve_feature(estimator, feature) -> int:
    if isinstance(feature, str):
        if not estimator.feature_names_ or feature not in estimator.feature_names_:
            raise ValueError(f"unknown feature {feature!r}")
        return estimator.feature_names_.index(feature)
    j = int(feature)
    if not 0 <= j < estimator.n_features_in_:
        raise ValueError(f"feature index {j} outside schema")
    return j


def partial_dependence(estimator, X, feature, n_grid: int = 20) -> PdpCurve:
    """Sweep feature j over n_grid equally spaced points spanning its
    observed [min, max]; at each point average the prediction over all rows
    with feature j overwritten. Full-dataset marginalization (subsample
    upstream for very large matrices). One pass serves every target.
    """
    check_fitted(estimator, "tree_groups_")
    X = check_matrix(X)
    if X.shape[1] != estimator.n_features_in_:
        raise ValueError("X does not match the model schema")
    if n_grid < 1:
        raise ValueError("n_grid must be >= 1")
    j = _resolve_feature(estimator, feature)
    lo, hi = float(X[:, j].min()), float(X[:, j].max())
    constant = lo == hi
    grid = np.array([lo]) if constant else np.linspace(lo, hi, n_grid)

    responses = np.empty((len(grid), estimator.n_targets_))
    work = X.copy()
    for g, v in enumerate(grid):
        work[:, j] = v
        pred = np.asarray(estimator.predict(work), dtype=np.float64)
        if pred.ndim == 1:
            pred = pred.reshape(-1, 1)
        responses[g] = pred.mean(axis=0)
    names = estimator.feature_names_ or tuple(f"f{k}" for k in range(X.shape[1]))
    return PdpCurve(
        feature_index=j,
        feature_name=names[j],
        grid=grid,
        response=responses,
        target_names=estimator.target_names_,
        constant=constant,
    )


def write_importance_csv(report: ImportanceReport, path) -> None:
    """`feature,mean,std` rows in schema order."""
    with open(path, "w", newline="") as fh:
        fh.write("feature,mean,std\n")
        for name, m, s in zip(report.feature_names, report.mean, report.std):
            fh.write(f"{name},{float(m)!r},{float(s)!r}\n")


def write_pdp_csv(curves, path) -> None:
    """`feature,grid_value,response_<target>...` rows, one block per curve."""
    curves = list(curves)
    targets = curves[0].target_names if curves else ()
    header = "feature,grid_value," + ",".join(f"response_{t}" for t in targets)
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for c in curves:
            for g, resp in zip(c.grid, c.response):
                vals = ",".join(repr(float(r)) for r in resp)
                fh.write(f"{c.feature_name},{float(g)!r},{vals}\n")
