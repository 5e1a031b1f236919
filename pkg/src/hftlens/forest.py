"""From-scratch randomized tree ensembles for multi-target regression.

Two growth modes share one kernel: "extra" draws one uniform cut per
candidate feature and trains every tree on the full sample; "forest" scans
all midpoints between sorted distinct values and trains each tree on an
n-sized bootstrap resample. Prediction is the arithmetic mean over trees.

Determinism: the ensemble seed is a 64-bit integer; tree i runs on SplitMix64
state mix64(seed + (i+1)*GOLDEN), consumed in depth-first growth order. In
the multi-model setup (multi_target=False) tree i of every per-target
ensemble reuses the same stream, so duplicated targets reproduce the
multi-target model exactly. Serialized models are byte-identical for any
thread count.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from hftlens import _kernels
from hftlens.validation import check_fitted, check_matrix, check_targets

MODEL_MAGIC = "hftlens/tree-ensemble"
MODEL_FORMAT_VERSION = 1

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class ModelFormatError(Exception):
    """Model file fails the container contract."""


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def tree_stream_state(seed: int, tree_index: int) -> int:
    """Initial SplitMix64 state for one tree: output i of a master stream
    seeded with the ensemble seed (seed interpreted mod 2^64)."""
    return _mix64((seed + _GOLDEN * (tree_index + 1)) & _MASK64)


def gini_impurity(probabilities) -> float:
    """Gini impurity 1 - sum(p_i^2) of a discrete distribution."""
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError("probabilities must be a non-empty 1-D vector")
    if np.any(p < 0):
        raise ValueError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
    return float(1.0 - (p * p).sum())


def mse(y_true, y_pred) -> float:
    """Mean squared error (1/n) sum (y_i - yhat_i)^2."""
    a = np.asarray(y_true, dtype=np.float64)
    b = np.asarray(y_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise ValueError("mse needs at least one observation")
    return float(np.mean((a - b) ** 2))


def variance_reduction(parent, left, right) -> float:
    """Population-variance reduction of a split; multi-target values sum the
    per-target reductions (targets on commensurate scales)."""
    p = np.asarray(parent, dtype=np.float64)
    l = np.asarray(left, dtype=np.float64)
    r = np.asarray(right, dtype=np.float64)
    if l.ndim == 1:
        p, l, r = p.reshape(-1, 1), l.reshape(-1, 1), r.reshape(-1, 1)
    if len(l) == 0 or len(r) == 0:
        raise ValueError("invalid split: empty child")
    if len(l) + len(r) != len(p):
        raise ValueError("children sizes must add up to the parent size")
    n, n_l, n_r = len(p), len(l), len(r)
    total = 0.0
    for j in range(p.shape[1]):
        total += float(
            np.var(p[:, j]) - (n_l * np.var(l[:, j]) + n_r * np.var(r[:, j])) / n
        )
    return total


@dataclass
class Tree:
    """Flat-array binary regression tree; feature == -1 marks a leaf.

    Leaf values are the means of the training targets routed to the leaf;
    gain stores the variance reduction of each internal node's split.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    values: np.ndarray
    n_samples: np.ndarray
    gain: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        X = check_matrix(X, allow_vector=True)
        out = np.zeros((len(X), self.values.shape[1]))
        _kernels.predict_into(
            X, self.feature, self.threshold, self.left, self.right, self.values, out
        )
        return out


def fit_tree(X, Y, min_split_samples: int, k_features: int, method: str, state: int,
             bootstrap: bool = False) -> Tree:
    """Grow a single tree (bootstrap draws its resample from the same stream)."""
    X = check_matrix(X)
    Y, _ = check_targets(Y, len(X))
    if min_split_samples < 2:
        raise ValueError("min_split_samples must be >= 2")
    if not 1 <= k_features <= X.shape[1]:
        raise ValueError("k_features must be in [1, n_features]")
    mode = {"extra": 0, "forest": 1}[method]
    Xf = np.asfortranarray(X)
    state_u = np.uint64(state & _MASK64)
    if bootstrap:
        rows, state_u = _kernels.bootstrap_rows(len(X), state_u)
        state_u = np.uint64(state_u)
    else:
        rows = np.arange(len(X), dtype=np.int64)
    arrays = _kernels.grow_tree(
        Xf, Y, rows, min_split_samples, k_features, mode, state_u
    )
    return Tree(*arrays)


class TreeEnsembleRegressor(RegressorMixin, BaseEstimator):
    """Randomized tree ensemble regressor (extra trees or bagged forest).

    Parameters
    ----------
    n_trees : ensemble size (>= 1).
    min_split_samples : minimum node size eligible for a split (>= 2); no
        depth limit, stopping is governed by this and node purity alone.
    method : "extra" (full sample, uniform random cuts) or "forest"
        (bootstrap resample, best-midpoint scan).
    k_features : candidate features per node; None = ceil(sqrt(n_features)).
    multi_target : one ensemble over the joint target space when True,
        otherwise one internal ensemble per target (multi-model setup).
    seed : 64-bit stream seed.
    n_threads : worker threads for training; None = all cores. Never affects
        the fitted model.
    """

    def __init__(self, n_trees: int = 50, min_split_samples: int = 5,
                 method: str = "extra", k_features: int | None = None,
                 multi_target: bool = True, seed: int = 0,
                 n_threads: int | None = None):
        self.n_trees = n_trees
        self.min_split_samples = min_split_samples
        self.method = method
        self.k_features = k_features
        self.multi_target = multi_target
        self.seed = seed
        self.n_threads = n_threads

    def _validate_params(self, n_features: int) -> int:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_split_samples < 2:
            raise ValueError("min_split_samples must be >= 2")
        if self.method not in ("extra", "forest"):
            raise ValueError("method must be 'extra' or 'forest'")
        k = self.k_features
        if k is None:
            k = math.ceil(math.sqrt(n_features))
        if not 1 <= k <= n_features:
            raise ValueError("k_features must be in [1, n_features]")
        return k

    def fit(self, X, y, feature_names=None, target_names=None):
        X = check_matrix(X)
        Y, y_was_1d = check_targets(y, len(X))
        k = self._validate_params(X.shape[1])
        n, p = X.shape
        t = Y.shape[1]
        if feature_names is not None and len(feature_names) != p:
            raise ValueError("feature_names must match n_features")
        if target_names is not None and len(target_names) != t:
            raise ValueError("target_names must match n_targets")

        Xf = np.asfortranarray(X)
        mode = 0 if self.method == "extra" else 1
        states = [np.uint64(tree_stream_state(self.seed, i)) for i in range(self.n_trees)]
        groups = [None] if (self.multi_target or t == 1) else list(range(t))

        def build(task):
            group, state = task
            Yg = Y if group is None else np.ascontiguousarray(Y[:, group : group + 1])
            if mode == 1:
                rows, state = _kernels.bootstrap_rows(n, state)
                state = np.uint64(state)  # numba hands the scalar back as int
            else:
                rows = np.arange(n, dtype=np.int64)
            return Tree(*_kernels.grow_tree(
                Xf, Yg, rows, self.min_split_samples, k, mode, state
            ))

        tasks = [(g, states[i]) for g in groups for i in range(self.n_trees)]
        workers = self.n_threads or os.cpu_count() or 1
        if workers > 1 and len(tasks) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                trees = list(pool.map(build, tasks))
        else:
            trees = [build(task) for task in tasks]

        self.tree_groups_ = [
            (g, trees[gi * self.n_trees : (gi + 1) * self.n_trees])
            for gi, g in enumerate(groups)
        ]
        self.n_features_in_ = p
        self.n_targets_ = t
        self.k_features_ = k
        self.y_was_1d_ = y_was_1d
        self.feature_names_ = None if feature_names is None else tuple(feature_names)
        self.target_names_ = (
            tuple(target_names) if target_names is not None
            else tuple(f"y{j}" for j in range(t))
        )
        from hftlens.features import schema_fingerprint

        self.schema_fingerprint_ = schema_fingerprint(
            self.feature_names_ if self.feature_names_ is not None
            else tuple(f"f{j}" for j in range(p))
        )
        return self

    @property
    def trees_(self):
        """All trees in deterministic order (groups concatenated)."""
        check_fitted(self, "tree_groups_")
        return [tree for _, group in self.tree_groups_ for tree in group]

    def predict(self, X) -> np.ndarray:
        """Mean leaf-value vector over trees; routing is x_f <= threshold -> left."""
        check_fitted(self, "tree_groups_")
        X = check_matrix(X, allow_vector=True)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"schema mismatch: model expects {self.n_features_in_} features, "
                f"got {X.shape[1]}"
            )
        out = np.zeros((len(X), self.n_targets_))
        for group, trees in self.tree_groups_:
            acc = np.zeros((len(X), trees[0].values.shape[1]))
            for tree in trees:
                _kernels.predict_into(
                    X, tree.feature, tree.threshold, tree.left, tree.right,
                    tree.values, acc,
                )
            acc /= len(trees)
            if group is None:
                out = acc
            else:
                out[:, group] = acc[:, 0]
        if self.y_was_1d_:
            return out[:, 0]
        return out

    def check_schema(self, fingerprint: str) -> None:
        check_fitted(self, "schema_fingerprint_")
        if fingerprint != self.schema_fingerprint_:
            raise ValueError(
                f"schema mismatch: model was trained on fingerprint "
                f"{self.schema_fingerprint_}, data has {fingerprint}"
            )

    def save(self, path) -> None:
        save_model(self, path)

    @classmethod
    def load(cls, path) -> "TreeEnsembleRegressor":
        return load_model(path)


def _tree_payload(tree: Tree) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "values": tree.values.tolist(),
        "n_samples": tree.n_samples.tolist(),
        "gain": tree.gain.tolist(),
    }


def _tree_from_payload(payload: dict) -> Tree:
    return Tree(
        feature=np.asarray(payload["feature"], dtype=np.int32),
        threshold=np.asarray(payload["threshold"], dtype=np.float64),
        left=np.asarray(payload["left"], dtype=np.int32),
        right=np.asarray(payload["right"], dtype=np.int32),
        values=np.asarray(payload["values"], dtype=np.float64),
        n_samples=np.asarray(payload["n_samples"], dtype=np.int32),
        gain=np.asarray(payload["gain"], dtype=np.float64),
    )


def save_model(est: TreeEnsembleRegressor, path) -> None:
    """Write the versioned model container (canonical JSON, one trailing
    newline). Identical fits produce byte-identical files."""
    check_fitted(est, "tree_groups_")
    doc = {
        "magic": MODEL_MAGIC,
        "format_version": MODEL_FORMAT_VERSION,
        "params": {
            "n_trees": est.n_trees,
            "min_split_samples": est.min_split_samples,
            "method": est.method,
            "k_features": est.k_features,
            "multi_target": est.multi_target,
            "seed": est.seed,
        },
        "n_features": est.n_features_in_,
        "feature_names": list(est.feature_names_) if est.feature_names_ else None,
        "schema_fingerprint": est.schema_fingerprint_,
        "target_names": list(est.target_names_),
        "y_was_1d": est.y_was_1d_,
        "groups": [
            {"target": group, "trees": [_tree_payload(tr) for tr in trees]}
            for group, trees in est.tree_groups_
        ],
    }
    with open(path, "w", newline="") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> TreeEnsembleRegressor:
    """Load a model container written by save_model; round-trip is identity."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"not a model file: {exc}") from exc
    if doc.get("magic") != MODEL_MAGIC:
        raise ModelFormatError(f"bad magic {doc.get('magic')!r}")
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format version {doc.get('format_version')!r}")
    est = TreeEnsembleRegressor(**doc["params"])
    est.tree_groups_ = [
        (g["target"], [_tree_from_payload(p) for p in g["trees"]])
        for g in doc["groups"]
    ]
    est.n_features_in_ = doc["n_features"]
    est.n_targets_ = len(doc["target_names"])
    est.k_features_ = est._validate_params(est.n_features_in_)
    est.y_was_1d_ = doc["y_was_1d"]
    est.feature_names_ = tuple(doc["feature_names"]) if doc["feature_names"] else None
    est.target_names_ = tuple(doc["target_names"])
    est.schema_fingerprint_ = doc["schema_fingerprint"]
    return est
