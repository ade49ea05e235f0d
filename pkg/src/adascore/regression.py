"""Out-of-fold kernel ridge regression, residuals, and score-prediction errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist, pdist, squareform

from .errors import InsufficientSamples
from .score import MEDIAN, ScoreTable, median_bandwidth

DEFAULT_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)
SELECTION_SIZE = 400  # cap on the points used to choose the ridge (cubic cost)


@dataclass(frozen=True)
class KrrConfig:
    ridge_grid: tuple[float, ...] = DEFAULT_GRID
    bandwidth: float | str = MEDIAN
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not self.ridge_grid or any(not r > 0 for r in self.ridge_grid):
            raise ValueError("ridge_grid must be non-empty and positive")
        if self.folds < 2:
            raise ValueError("folds must be at least 2")


@dataclass(frozen=True)
class ResidualVector:
    target: int
    subset: tuple[int, ...]
    values: np.ndarray


@dataclass(frozen=True)
class DeltaEstimate:
    target: int
    subset: tuple[int, ...]
    per_sample_sq_errors: np.ndarray
    residual: ResidualVector

    @property
    def mean(self) -> float:
        return float(self.per_sample_sq_errors.mean())


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Fold label per sample; a seeded shuffle split into near-equal parts."""
    if n < 2 * folds:
        raise InsufficientSamples(f"{n} samples cannot fill {folds} folds of at least 2")
    perm = np.random.default_rng(seed).permutation(n)
    ids = np.empty(n, dtype=int)
    ids[perm] = np.arange(n) % folds
    return ids


def _select_ridge(k_train, y, grid) -> float:
    """Grid value with the smallest exact leave-one-out error on ``(k_train, y)``."""
    yc = y - y.mean()
    w, q = scipy.linalg.eigh(k_train, driver="evd")
    w = np.clip(w, 0.0, None)
    qty = q.T @ yc
    q2 = q * q
    best, best_err = None, np.inf
    for lam in grid:
        shrink = w / (w + lam)
        fitted = q @ (shrink * qty)
        hat_diag = q2 @ shrink
        loo = (yc - fitted) / np.clip(1.0 - hat_diag, 1e-12, None)
        err = float(np.mean(loo * loo))
        if err < best_err:
            best, best_err = lam, err
    return best


def _fit_predict(k_train, k_test, y, lam):
    mu = y.mean()
    a = k_train.copy()
    a[np.diag_indices_from(a)] += lam
    alpha = scipy.linalg.cho_solve(scipy.linalg.cho_factor(a, lower=True), y - mu)
    return k_test @ alpha + mu


def krr_out_of_fold(x: np.ndarray, y: np.ndarray, cfg: KrrConfig = KrrConfig(),
                    folds: np.ndarray | None = None) -> np.ndarray:
    """Predict every sample from an RBF ridge model fitted on the other folds.

    Each fold picks its ridge by exact leave-one-out error on (a random
    subsample of at most ``SELECTION_SIZE`` points of) its own training part,
    so no sample influences its own prediction. An empty regressor matrix
    (``p == 0``) predicts the training-fold mean.
    """
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    x = np.asarray(x, dtype=float).reshape(n, -1)
    if folds is None:
        folds = fold_assignment(n, cfg.folds, cfg.seed)
    elif n < 2 * (int(folds.max()) + 1):
        raise InsufficientSamples(f"{n} samples are too few for the given folds")
    pred = np.empty(n)
    if x.shape[1] == 0:
        for f in np.unique(folds):
            test = folds == f
            pred[test] = y[~test].mean()
        return pred
    s = median_bandwidth(x) if cfg.bandwidth == MEDIAN else float(cfg.bandwidth)
    gamma = 1.0 / (2.0 * s * s)
    rng = np.random.default_rng(cfg.seed)
    for f in np.unique(folds):
        test = folds == f
        xt, xv, yt = x[~test], x[test], y[~test]
        k_train = np.exp(-gamma * squareform(pdist(xt, "sqeuclidean")))
        k_test = np.exp(-gamma * cdist(xv, xt, "sqeuclidean"))
        if len(yt) > SELECTION_SIZE:
            pick = np.sort(rng.choice(len(yt), SELECTION_SIZE, replace=False))
            lam = _select_ridge(k_train[np.ix_(pick, pick)], yt[pick], cfg.ridge_grid)
        else:
            lam = _select_ridge(k_train, yt, cfg.ridge_grid)
        pred[test] = _fit_predict(k_train, k_test, yt, lam)
    return pred


def residual(values: np.ndarray, j: int, subset, cfg: KrrConfig = KrrConfig(),
             folds: np.ndarray | None = None) -> ResidualVector:
    """``V_j`` minus its out-of-fold regression on the other members of ``subset``."""
    subset = tuple(subset)
    if j not in subset:
        raise ValueError("target must belong to the subset")
    values = np.asarray(getattr(values, "values", values), dtype=float)
    others = sorted(c for c in subset if c != j)
    y = values[:, j]
    pred = krr_out_of_fold(values[:, others], y, cfg, folds)
    return ResidualVector(j, subset, y - pred)


def delta(values: np.ndarray, scores: ScoreTable, j: int, subset, cfg: KrrConfig = KrrConfig(),
          folds: np.ndarray | None = None, res: ResidualVector | None = None) -> DeltaEstimate:
    """Squared errors of predicting the j-th score entry from ``R_j(V_Z)``."""
    subset = tuple(subset)
    if set(scores.subset) != set(subset):
        raise ValueError("score table must be computed over exactly the subset")
    if res is None:
        res = residual(values, j, subset, cfg, folds)
    target = scores.first[:, scores.column(j)]
    pred = krr_out_of_fold(res.values[:, None], target, cfg, folds)
    return DeltaEstimate(j, subset, (target - pred) ** 2, res)
