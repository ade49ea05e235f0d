"""Kernel (Stein) estimates of the score and of its Jacobian at the sample points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist, squareform

from .errors import DegenerateData, SingularSystem

MEDIAN = "median"


@dataclass(frozen=True)
class SteinConfig:
    eta: float = 1e-3
    bandwidth: float | str = MEDIAN
    hessian: str = "predictor"  # or "second-order"

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.bandwidth != MEDIAN and not float(self.bandwidth) > 0:
            raise ValueError("bandwidth must be positive or 'median'")
        if self.hessian not in ("predictor", "second-order"):
            raise ValueError("hessian must be 'predictor' or 'second-order'")


@dataclass(frozen=True)
class ScoreTable:
    first: np.ndarray  # (n, k)
    cross: np.ndarray  # (n, k, k)
    subset: tuple[int, ...]
    bandwidth: float

    def column(self, var: int) -> int:
        return self.subset.index(var)


def median_bandwidth(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise DegenerateData("median heuristic needs at least two samples")
    d = pdist(x)
    med = float(np.median(d))
    if med <= 0:
        # more than half the pairs coincide; fall back to the non-zero distances
        nz = d[d > 0]
        if nz.size == 0:
            raise DegenerateData("all pairwise distances are zero")
        med = float(np.median(nz))
    return med


def _resolve_bandwidth(x, bandwidth) -> float:
    return median_bandwidth(x) if bandwidth == MEDIAN else float(bandwidth)


def rbf_gram(x: np.ndarray, bandwidth=MEDIAN) -> np.ndarray:
    """``K_ij = exp(-||x_i - x_j||^2 / (2 sigma^2))``."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    s = _resolve_bandwidth(x, bandwidth)
    return np.exp(-squareform(pdist(x, "sqeuclidean")) / (2.0 * s * s))


def _solver(k: np.ndarray, eta: float):
    try:
        factor = scipy.linalg.cho_factor(k + eta * np.eye(k.shape[0]), lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(f"regularized Gram matrix is not positive definite: {exc}") from exc
    return lambda b: scipy.linalg.cho_solve(factor, b)


def _stein(x: np.ndarray, cfg: SteinConfig):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    s = _resolve_bandwidth(x, cfg.bandwidth)
    k = np.exp(-squareform(pdist(x, "sqeuclidean")) / (2.0 * s * s))
    solve = _solver(k, cfg.eta)
    # <nabla, K>_ij = sum_k dK(x_i, x_k)/dx_k_j = sum_k K_ik (x_ij - x_kj) / s^2
    grad_k = (k.sum(axis=1)[:, None] * x - k @ x) / (s * s)
    g = -solve(grad_k)
    return x, s, k, solve, g


def stein_score(x: np.ndarray, cfg: SteinConfig = SteinConfig()) -> np.ndarray:
    """Score estimates ``-(K + eta I)^{-1} <nabla, K>`` at every sample."""
    return _stein(x, cfg)[4]


def _hessian_predictor(x, s, k, solve, g):
    # extend G to new points by kernel ridge interpolation, g(y) = k(y, X) A,
    # and differentiate in y at the samples: d/dy_l k(y, x_i) = k (x_il - y_l) / s^2
    a = solve(g)  # (n, p)
    # H[m, j, l] = sum_i K_mi (x_il - x_ml) A_ij / s^2
    p = x.shape[1]
    ka = k @ a
    h = np.empty((x.shape[0], p, p))
    for l in range(p):
        h[:, :, l] = k @ (a * x[:, l : l + 1]) - x[:, l : l + 1] * ka
    return h / (s * s)


def _hessian_second_order(x, s, k, solve, g):
    # second-order Stein identity: E[grad^2 log p] estimated from
    # <nabla^2, K>_i = sum_k K_ik ((x_i - x_k)(x_i - x_k)^T / s^4 - I / s^2)
    n, p = x.shape
    diff = x[:, None, :] - x[None, :, :]  # (i, k, p)
    nab2 = np.einsum("ik,ika,ikb->iab", k, diff, diff) / s**4
    nab2 -= k.sum(axis=1)[:, None, None] * np.eye(p)[None] / (s * s)
    h = solve(nab2.reshape(n, p * p)).reshape(n, p, p)
    return h - g[:, :, None] * g[:, None, :]


def stein_score_table(data: np.ndarray, subset=None, cfg: SteinConfig = SteinConfig()) -> ScoreTable:
    """First derivatives and (symmetrized) cross-partials of ``log p`` over ``subset``."""
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    subset = tuple(range(data.shape[1])) if subset is None else tuple(int(c) for c in subset)
    if not subset:
        raise ValueError("subset must be non-empty")
    x, s, k, solve, g = _stein(data[:, list(subset)], cfg)
    if cfg.hessian == "predictor":
        h = _hessian_predictor(x, s, k, solve, g)
    else:
        h = _hessian_second_order(x, s, k, solve, g)
    h = 0.5 * (h + np.swapaxes(h, 1, 2))
    return ScoreTable(first=g, cross=h, subset=subset, bandwidth=s)
