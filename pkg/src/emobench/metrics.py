"""Correlation and error metrics: Pearson, Spearman, RMSE, CCC.

Conventions (documented, applied consistently):
  - Spearman uses average ranks for ties.
  - CCC uses population (1/n) moments.
  - CCC of two constant series: 1 if equal, 0 otherwise.
"""

from __future__ import annotations

import numpy as np


class UndefinedCorrelationError(ValueError):
    """Correlation requested on a constant (zero-variance) input."""


def _clean_pair(x, y, min_len: int = 2) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"expected equal-length 1-d arrays, got {x.shape} and {y.shape}")
    if len(x) < min_len:
        raise ValueError(f"need at least {min_len} points, got {len(x)}")
    return x, y


def pearson(x, y) -> float:
    """Product-moment correlation coefficient."""
    x, y = _clean_pair(x, y)
    xd = x - x.mean()
    yd = y - y.mean()
    sx = np.sqrt(np.dot(xd, xd))
    sy = np.sqrt(np.dot(yd, yd))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("pearson undefined for constant input")
    return float(np.dot(xd, yd) / (sx * sy))


def average_ranks(x) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their covered rank positions."""
    x = np.asarray(x, dtype=float)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) share rank mean of (i+1)..(j+1)
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Pearson correlation of average-ranked data."""
    x, y = _clean_pair(x, y)
    return pearson(average_ranks(x), average_ranks(y))


def rmse(pred, truth) -> float:
    pred, truth = _clean_pair(pred, truth, min_len=1)
    return float(np.sqrt(np.mean((pred - truth) ** 2)))


def ccc(x, y) -> float:
    """Concordance correlation: 2 cov / (var_x + var_y + (mean_x - mean_y)^2)."""
    x, y = _clean_pair(x, y)
    mx, my = x.mean(), y.mean()
    vx = float(np.mean((x - mx) ** 2))
    vy = float(np.mean((y - my) ** 2))
    cov = float(np.mean((x - mx) * (y - my)))
    denom = vx + vy + (mx - my) ** 2
    if denom == 0.0:
        # both constant: equal series agree perfectly, unequal not at all
        return 1.0
    if vx == 0.0 and vy == 0.0:
        return 0.0
    return float(2.0 * cov / denom)
