"""Squared-loss linear learner, data potential and data-type estimation."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .synthetic import SellerDataset

log = logging.getLogger(__name__)

__all__ = [
    "ModelParams",
    "DataType",
    "local_loss",
    "global_loss",
    "global_gradient",
    "train",
    "least_squares_optimum",
    "Potential",
    "potential",
    "marginal_contribution",
    "marginal_contribution_draws",
    "data_type",
    "quantize",
    "simulate_signals",
    "estimate_types",
]


@dataclass(frozen=True)
class ModelParams:
    w: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).ravel()
        if not np.all(np.isfinite(w)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "w", w)


@dataclass(frozen=True)
class DataType:
    theta: float
    xi: float
    phi: float
    level: int


def _check_dims(w: np.ndarray, datasets: Sequence[SellerDataset]) -> None:
    for ds in datasets:
        if ds.n_features != len(w):
            raise ValueError(f"device {ds.device_id} has {ds.n_features} features, model has {len(w)}")


def local_loss(w: ModelParams, dataset: SellerDataset) -> float:
    if len(dataset) == 0:
        raise ValueError(f"device {dataset.device_id}: empty dataset")
    _check_dims(w.w, [dataset])
    r = dataset.features @ w.w - dataset.labels
    return float(np.mean(r * r))


def global_loss(w: ModelParams, datasets: Sequence[SellerDataset]) -> float:
    """Sample-weighted average of the local losses."""
    _check_dims(w.w, datasets)
    total = sum(len(ds) for ds in datasets)
    return float(sum(len(ds) / total * local_loss(w, ds) for ds in datasets))


def _stack(datasets: Sequence[SellerDataset]) -> tuple[np.ndarray, np.ndarray]:
    return (np.concatenate([ds.features for ds in datasets]), np.concatenate([ds.labels for ds in datasets]))


def _grad(w: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    if len(y) == 0:
        return np.zeros_like(w)
    return 2.0 / len(y) * (X.T @ (X @ w - y))


def global_gradient(w: ModelParams, datasets: Sequence[SellerDataset]) -> np.ndarray:
    X, y = _stack(datasets)
    return _grad(w.w, X, y)


def least_squares_optimum(datasets: Sequence[SellerDataset]) -> ModelParams:
    X, y = _stack(datasets)
    return ModelParams(np.linalg.lstsq(X, y, rcond=None)[0])


def train(datasets: Sequence[SellerDataset], steps: int, learning_rate: float, seed: int) -> ModelParams:
    """Full-batch gradient descent on the global loss from a seeded initialisation."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    X, y = _stack(datasets)
    w = np.random.default_rng(seed).normal(0.0, 0.1, X.shape[1])
    for step in range(steps):
        with np.errstate(over="ignore", invalid="ignore"):
            w = w - learning_rate * _grad(w, X, y)
        if not np.all(np.isfinite(w)):
            raise FloatingPointError(f"gradient descent diverged at step {step}")
    return ModelParams(w)


class Potential:
    """Gradient-norm contraction of the learner after one epoch on a subset.

    ``Potential(reference, baseline)(ids)`` takes one full-batch gradient step
    from ``baseline`` using only the rows with the given sample ids, then
    returns ``|grad J(w1)| / |grad J(w0)|`` on the reference data, clipped to
    [0, 1].  Rows are looked up by global sample id, so duplicated ids count once.
    """

    def __init__(self, reference: Sequence[SellerDataset], baseline: ModelParams, learning_rate: float = 0.05):
        self.X, self.y = _stack(reference)
        self.w0 = baseline.w
        self.lr = learning_rate
        self.g0 = _grad(self.w0, self.X, self.y)
        self.g0_norm = float(np.linalg.norm(self.g0))
        rows: dict[int, tuple[np.ndarray, float]] = {}
        for ds in reference:
            for sid, x, t in zip(ds.sample_ids, ds.features, ds.labels):
                rows.setdefault(int(sid), (x, float(t)))
        self._rows = rows

    def raw(self, ids) -> float:
        if self.g0_norm == 0.0:
            return 0.0
        uniq = sorted({int(i) for i in ids})
        if not uniq:
            return 1.0
        Xs = np.array([self._rows[i][0] for i in uniq])
        ys = np.array([self._rows[i][1] for i in uniq])
        w1 = self.w0 - self.lr * _grad(self.w0, Xs, ys)
        return float(np.linalg.norm(_grad(w1, self.X, self.y)) / self.g0_norm)

    def __call__(self, ids) -> float:
        eps = self.raw(ids)
        if eps > 1.0:
            log.debug("potential clipped from %.6g to 1", eps)
        return min(max(eps, 0.0), 1.0)


def potential(
    subset: SellerDataset | None,
    baseline: ModelParams,
    reference: Sequence[SellerDataset],
    learning_rate: float = 0.05,
) -> float:
    pot = Potential(reference, baseline, learning_rate)
    if subset is None or len(subset) == 0:
        return pot(())
    # the subset's own rows, even if they are not part of the reference
    if pot.g0_norm == 0.0:
        return 0.0
    w1 = baseline.w - learning_rate * _grad(baseline.w, subset.features, subset.labels)
    eps = float(np.linalg.norm(_grad(w1, pot.X, pot.y)) / pot.g0_norm)
    return min(max(eps, 0.0), 1.0)


def marginal_contribution_draws(
    z,
    dataset: SellerDataset,
    B: int,
    draws: int,
    seed: int,
    potential_fn: Callable[[Sequence[int]], float],
    n_jobs: int = 1,
) -> np.ndarray:
    """Per-draw values of ``J(D u {z}) - J(D)`` with ``i ~ U{1..B}``, ``D ~ D_m^(i-1)``.

    Every draw owns a child of ``SeedSequence(seed)``, so results do not depend
    on ``n_jobs``.
    """
    if B < 1:
        raise ValueError("batch size B must be >= 1")
    if draws < 1:
        raise ValueError("draws must be >= 1")
    zs = [int(z)] if np.isscalar(z) else [int(v) for v in z]
    ids = dataset.sample_ids
    children = np.random.SeedSequence(seed).spawn(draws)

    def one(ss: np.random.SeedSequence) -> float:
        rng = np.random.default_rng(ss)
        i = int(rng.integers(1, B + 1))
        picked = ids[rng.integers(0, len(ids), i - 1)] if i > 1 else ids[:0]
        base = set(int(s) for s in picked)
        return potential_fn(base | set(zs)) - potential_fn(base)

    if n_jobs == 1:
        return np.array([one(c) for c in children])
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return np.array(list(pool.map(one, children)))


def marginal_contribution(
    z,
    dataset: SellerDataset,
    B: int,
    draws: int,
    seed: int,
    potential_fn: Callable[[Sequence[int]], float],
    n_jobs: int = 1,
) -> float:
    """Monte Carlo estimate of the expected marginal change in potential from adding ``z``."""
    return float(np.mean(marginal_contribution_draws(z, dataset, B, draws, seed, potential_fn, n_jobs)))


def quantize(phi: float, K: int) -> int:
    if K < 1:
        raise ValueError("K must be >= 1")
    # guard against phi*K landing a hair above an integer boundary
    level = math.ceil(phi * K - 1e-12)
    return min(max(level, 1), K)


def data_type(theta: float, xi: float, K: int) -> DataType:
    """Composite type ``phi = xi * theta`` and its K-level class."""
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"privacy preference xi={xi} outside [0, 1]")
    theta = min(max(float(theta), 0.0), 1.0)
    phi = xi * theta
    return DataType(theta=theta, xi=float(xi), phi=phi, level=quantize(phi, K))


def simulate_signals(xi: Sequence[float], n_obs: Sequence[int] | int, seed: int, noise: float = 1.0) -> list[np.ndarray]:
    """Traded signals ``S = xi + N(0, noise^2)``, one array per device."""
    rng = np.random.default_rng(seed)
    counts = [n_obs] * len(xi) if np.isscalar(n_obs) else list(n_obs)
    return [x + noise * rng.standard_normal(n) for x, n in zip(xi, counts)]


def estimate_types(
    signals: Sequence[Sequence[float] | None], alpha: float = 1.0, beta: float = 0.0
) -> list[float | None]:
    """Least-squares estimate of each device's xi from ``S = alpha * xi + beta + noise``.

    Devices without observations come back as ``None``.
    """
    out: list[float | None] = []
    for s in signals:
        s = np.asarray(s if s is not None else [], dtype=float)
        if s.size == 0:
            out.append(None)
            continue
        A = np.full((s.size, 1), alpha)
        out.append(float(np.linalg.lstsq(A, s - beta, rcond=None)[0][0]))
    return out
