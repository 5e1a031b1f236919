"""Input-validation helpers shared by the estimators."""

from __future__ import annotations

import numpy as np


class NotFittedError(RuntimeError):
    """Estimator used before fit()."""


def check_matrix(X, name: str = "X", allow_vector: bool = False) -> np.ndarray:
    """Return X as a finite, C-contiguous float64 2-D array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1 and allow_vector:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} has zero rows")
    if not np.isfinite(X).all():
        raise ValueError(f"{name} contains non-finite values")
    return np.ascontiguousarray(X)


def check_targets(y, n_rows: int):
    """Return (Y 2-D float64, was_1d)."""
    y = np.asarray(y, dtype=np.float64)
    was_1d = y.ndim == 1
    if was_1d:
        y = y.reshape(-1, 1)
    if y.ndim != 2 or y.shape[0] != n_rows:
        raise ValueError("y must be (n_rows,) or (n_rows, n_targets) aligned with X")
    if y.shape[1] == 0:
        raise ValueError("y needs at least one target column")
    if not np.isfinite(y).all():
        raise ValueError("y contains non-finite values")
    return np.ascontiguousarray(y), was_1d


def check_fitted(estimator, attribute: str) -> None:
    if not hasattr(estimator, attribute):
        raise NotFittedError(
            f"{type(estimator).__name__} is not fitted; call fit() first"
        )
