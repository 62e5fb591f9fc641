"""Epsilon-insensitive RBF support-vector regression trained by SMO.

The dual is solved in the doubled variable space u = (alpha, alpha*), each in
[0, C], with the equality constraint sum(alpha - alpha*) = 0.  Working pairs
are chosen by maximal KKT violation and updated analytically; the full kernel
matrix is cached up to a configurable size and recomputed row-wise above it.

MinMax normalization is fitted on training data only and stored inside the
model; constant features transform to 0.  Predictions are raw (no clipping).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

MODEL_SCHEMA_VERSION = 1


class RegressorError(ValueError):
    pass


class ConvergenceError(RegressorError):
    """SMO did not reach the KKT tolerance within the iteration bound."""

    def __init__(self, msg: str, objective: float):
        super().__init__(msg)
        self.objective = objective


@dataclass(frozen=True)
class SvrConfig:
    c: float = 1.0
    epsilon: float = 0.1
    gamma: Union[float, str] = "1/d"  # positive float, or "1/d" for 1/n_features
    tol: float = 1e-3
    max_passes: int = 200_000
    kernel_cache_max_n: int = 4000  # full kernel matrix below this many samples

    def __post_init__(self):
        if self.c <= 0:
            raise RegressorError("c must be positive")
        if self.epsilon < 0:
            raise RegressorError("epsilon must be non-negative")
        if isinstance(self.gamma, str):
            if self.gamma != "1/d":
                raise RegressorError(f"unknown gamma policy {self.gamma!r}")
        elif self.gamma <= 0:
            raise RegressorError("gamma must be positive")
        if self.tol <= 0:
            raise RegressorError("tol must be positive")

    def resolve_gamma(self, n_features: int) -> float:
        if isinstance(self.gamma, str):
            return 1.0 / max(n_features, 1)
        return float(self.gamma)


@dataclass(frozen=True)
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        span = self.maxs - self.mins
        out = np.zeros_like(x)
        nz = span > 0
        out[:, nz] = (x[:, nz] - self.mins[nz]) / span[nz]
        return out


def fit_scaler(x: np.ndarray) -> MinMaxScaler:
    """Per-feature min/max bounds from the training split only."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[0] == 0:
        raise RegressorError("cannot fit scaler on empty input")
    return MinMaxScaler(mins=x.min(axis=0), maxs=x.max(axis=0))


def rbf_kernel(x: np.ndarray, y: np.ndarray, gamma: float) -> np.ndarray:
    """exp(-gamma * ||x - y||^2), rows of x against rows of y."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    if x.shape[1] != y.shape[1]:
        raise RegressorError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    sq = (np.sum(x ** 2, axis=1)[:, None] + np.sum(y ** 2, axis=1)[None, :]
          - 2.0 * x @ y.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass(frozen=True)
class SvrModel:
    support_vectors: np.ndarray  # normalized feature rows
    coef: np.ndarray             # beta_i = alpha_i - alpha*_i, nonzero rows only
    bias: float
    gamma: float
    scaler: MinMaxScaler
    dual_objective: float = 0.0
    n_iter: int = 0
    kkt_gap: float = 0.0  # final m - M stopping value (<= tol at convergence)

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Raw decision values; accepts one row or a batch."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        x2 = np.atleast_2d(x)
        if x2.shape[1] != len(self.scaler.mins):
            raise RegressorError(
                f"dimension mismatch: {x2.shape[1]} vs {len(self.scaler.mins)}"
            )
        z = self.scaler.transform(x2)
        if len(self.coef):
            k = rbf_kernel(z, self.support_vectors, self.gamma)
            out = k @ self.coef + self.bias
        else:
            out = np.full(z.shape[0], self.bias)
        return float(out[0]) if single else out


class _KernelColumns:
    """Kernel columns, either fully precomputed or memoized on demand."""

    def __init__(self, z: np.ndarray, gamma: float, cache_full: bool):
        self.z = z
        self.gamma = gamma
        self.diag = np.ones(len(z))  # rbf(x, x) == 1
        if cache_full:
            self._full = rbf_kernel(z, z, gamma)
            self._memo = None
        else:
            self._full = None
            self._memo: dict[int, np.ndarray] = {}

    def col(self, i: int) -> np.ndarray:
        if self._full is not None:
            return self._full[:, i]
        got = self._memo.get(i)
        if got is None:
            got = rbf_kernel(self.z, self.z[i:i + 1], self.gamma)[:, 0]
            self._memo[i] = got
        return got

    def entry(self, i: int, j: int) -> float:
        return float(self.col(i)[j])


def _smo_solve(k: _KernelColumns, y: np.ndarray, cfg: SvrConfig
               ) -> tuple[np.ndarray, float, float, int, float]:
    """SMO on the doubled-variable epsilon-SVR dual.

    Returns (beta, bias, dual_objective, n_iter, kkt_gap).  The dual objective reported
    is the minimized form 1/2 u'Qu + c'u (the textbook maximized dual is its
    negative).
    """
    n = len(y)
    c_box = cfg.c
    eps = cfg.epsilon
    # variable p < n is alpha_i (sign +1), p >= n is alpha*_i (sign -1)
    s = np.concatenate([np.ones(n), -np.ones(n)])
    lin = np.concatenate([eps - y, eps + y])
    u = np.zeros(2 * n)
    grad = lin.copy()
    gap = 0.0

    def q_col(p: int) -> np.ndarray:
        col = k.col(p % n)
        return s[p] * np.concatenate([col, -col])

    it = 0
    while True:
        viol = -s * grad
        up_mask = np.where(s > 0, u < c_box, u > 0)
        low_mask = np.where(s > 0, u > 0, u < c_box)
        if not up_mask.any() or not low_mask.any():
            break
        m_idx = np.flatnonzero(up_mask)[np.argmax(viol[up_mask])]
        mm_idx = np.flatnonzero(low_mask)[np.argmin(viol[low_mask])]
        m_val = viol[m_idx]
        mm_val = viol[mm_idx]
        gap = m_val - mm_val
        if gap < cfg.tol:
            break
        if it >= cfg.max_passes:
            obj = 0.5 * float(np.dot(u, grad + lin))
            raise ConvergenceError(
                f"SMO did not converge in {cfg.max_passes} iterations "
                f"(KKT gap {m_val - mm_val:.3e}, objective {obj:.6e})", obj)
        it += 1

        i, j = int(m_idx), int(mm_idx)
        kii = k.diag[i % n]
        kjj = k.diag[j % n]
        kij = k.entry(i % n, j % n)
        # ||phi_i - phi_j||^2 in raw-kernel terms; same for both sign branches
        quad_coef = max(kii + kjj - 2.0 * kij, 1e-12)
        old_i, old_j = u[i], u[j]
        if s[i] != s[j]:
            delta = (-grad[i] - grad[j]) / quad_coef
            diff = u[i] - u[j]
            u[i] += delta
            u[j] += delta
            if diff > 0:
                if u[j] < 0:
                    u[j] = 0.0
                    u[i] = diff
            else:
                if u[i] < 0:
                    u[i] = 0.0
                    u[j] = -diff
            if diff > 0:
                if u[i] > c_box:
                    u[i] = c_box
                    u[j] = c_box - diff
            else:
                if u[j] > c_box:
                    u[j] = c_box
                    u[i] = c_box + diff
        else:
            quad_coef = max(kii + kjj - 2.0 * kij, 1e-12)
            delta = (grad[i] - grad[j]) / quad_coef
            tot = u[i] + u[j]
            u[i] -= delta
            u[j] += delta
            if tot > c_box:
                if u[i] > c_box:
                    u[i] = c_box
                    u[j] = tot - c_box
            else:
                if u[j] < 0:
                    u[j] = 0.0
                    u[i] = tot
            if tot > c_box:
                if u[j] > c_box:
                    u[j] = c_box
                    u[i] = tot - c_box
            else:
                if u[i] < 0:
                    u[i] = 0.0
                    u[j] = tot
        du_i = u[i] - old_i
        du_j = u[j] - old_j
        if du_i != 0.0:
            grad += q_col(i) * du_i
        if du_j != 0.0:
            grad += q_col(j) * du_j

    # bias from free variables; fall back to the midpoint of the KKT interval
    viol = -s * grad
    free = (u > 1e-12) & (u < c_box - 1e-12)
    if free.any():
        bias = float(np.mean(viol[free]))
    else:
        up_mask = np.where(s > 0, u < c_box, u > 0)
        low_mask = np.where(s > 0, u > 0, u < c_box)
        hi = viol[up_mask].max() if up_mask.any() else 0.0
        lo = viol[low_mask].min() if low_mask.any() else 0.0
        bias = float(0.5 * (hi + lo))

    beta = u[:n] - u[n:]
    obj = 0.5 * float(np.dot(u, grad + lin))
    return beta, bias, obj, it, float(max(gap, 0.0))


def train_svr(x: np.ndarray, y: np.ndarray, cfg: SvrConfig = SvrConfig()) -> SvrModel:
    """Fit scaler + epsilon-SVR on (x, y); x rows are raw (unnormalized) features."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if x.shape[0] != len(y):
        raise RegressorError("x/y length mismatch")
    if x.shape[0] < 2:
        raise RegressorError("need at least 2 training samples")
    if not np.all(np.isfinite(y)):
        raise RegressorError("non-finite targets")
    scaler = fit_scaler(x)
    z = scaler.transform(x)
    gamma = cfg.resolve_gamma(z.shape[1])
    k = _KernelColumns(z, gamma, cache_full=z.shape[0] <= cfg.kernel_cache_max_n)
    beta, bias, obj, it, gap = _smo_solve(k, y, cfg)
    nz = np.abs(beta) > 1e-12
    return SvrModel(
        support_vectors=z[nz],
        coef=beta[nz],
        bias=bias,
        gamma=gamma,
        scaler=scaler,
        dual_objective=obj,
        n_iter=it,
        kkt_gap=gap,
    )


def predict(model: SvrModel, x: np.ndarray):
    return model.predict(x)


def save_model(model: SvrModel, path: str | Path) -> None:
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "gamma": model.gamma,
        "bias": model.bias,
        "dual_objective": model.dual_objective,
        "n_iter": model.n_iter,
        "scaler_mins": model.scaler.mins.tolist(),
        "scaler_maxs": model.scaler.maxs.tolist(),
        "support_vectors": model.support_vectors.tolist(),
        "coef": model.coef.tolist(),
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def load_model(path: str | Path) -> SvrModel:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
        raise RegressorError(f"{path}: unsupported model schema {doc.get('schema_version')!r}")
    return SvrModel(
        support_vectors=np.array(doc["support_vectors"], dtype=float).reshape(
            len(doc["coef"]), -1) if doc["coef"] else np.zeros((0, len(doc["scaler_mins"]))),
        coef=np.array(doc["coef"], dtype=float),
        bias=doc["bias"],
        gamma=doc["gamma"],
        scaler=MinMaxScaler(np.array(doc["scaler_mins"]), np.array(doc["scaler_maxs"])),
        dual_objective=doc["dual_objective"],
        n_iter=doc["n_iter"],
    )
