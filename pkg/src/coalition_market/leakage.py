"""Buyer-side correlation inference and the cost side of information leakage."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from ._accel import njit
from .synthetic import SellerDataset

__all__ = [
    "LeakageMatrix",
    "CostParams",
    "sequential_correlation_estimate",
    "influence_matrix",
    "overlap_correlation",
    "opportunity_cost",
    "coalition_cost",
    "trade_order_costs",
]

# per-pair state columns
_N, _MX, _MY, _SXX, _SYY, _SXY, _PREV, _STREAK, _CONV = range(9)
_STATE_COLS = 9


@njit(nogil=True)
def pearson_stream_update(streams, pi, pj, state, tol, patience):
    """Advance running Pearson estimates for pairs ``(pi[k], pj[k])`` over a block.

    ``streams`` is ``(M, T)``; one column is one round.  Co-moments use
    Welford updates.  ``state[k, 8]`` holds the first round at which the pair
    has seen ``patience`` consecutive changes below ``tol`` (-1 until then).
    """
    T = streams.shape[1]
    for k in range(pi.shape[0]):
        xs = streams[pi[k]]
        ys = streams[pj[k]]
        n = state[k, 0]
        mx = state[k, 1]
        my = state[k, 2]
        sxx = state[k, 3]
        syy = state[k, 4]
        sxy = state[k, 5]
        prev = state[k, 6]
        streak = state[k, 7]
        conv = state[k, 8]
        for t in range(T):
            x = xs[t]
            y = ys[t]
            n += 1.0
            dx = x - mx
            mx += dx / n
            dy = y - my
            my += dy / n
            sxx += dx * (x - mx)
            syy += dy * (y - my)
            sxy += dx * (y - my)
            if sxx > 0.0 and syy > 0.0:
                r = sxy / math.sqrt(sxx * syy)
                if prev == prev:
                    if abs(r - prev) < tol:
                        streak += 1.0
                        if streak >= patience and conv < 0.0:
                            conv = n
                    else:
                        streak = 0.0
                prev = r
        state[k, 0] = n
        state[k, 1] = mx
        state[k, 2] = my
        state[k, 3] = sxx
        state[k, 4] = syy
        state[k, 5] = sxy
        state[k, 6] = prev
        state[k, 7] = streak
        state[k, 8] = conv


@dataclass
class LeakageMatrix:
    r: np.ndarray
    g_influence: np.ndarray
    rounds_to_converge: np.ndarray
    undefined_pairs: list[tuple[int, int]] = field(default_factory=list)
    trace: list[tuple[int, np.ndarray]] = field(default_factory=list)

    @property
    def num_devices(self) -> int:
        return self.r.shape[0]


@dataclass(frozen=True)
class CostParams:
    unit_comm_cost: float = 0.0
    coalition_cost_bound: float = math.inf
    phi_threshold: tuple[float, ...] = ()

    def __post_init__(self):
        if self.unit_comm_cost < 0 or self.coalition_cost_bound < 0 or any(t < 0 for t in self.phi_threshold):
            raise ValueError("cost parameters must be non-negative")


def _as_chunks(streams) -> Iterable[np.ndarray]:
    if isinstance(streams, np.ndarray):
        yield np.atleast_2d(streams)
    else:
        for block in streams:
            yield np.atleast_2d(np.asarray(block, dtype=float))


def sequential_correlation_estimate(
    streams,
    tol: float,
    patience: int = 10,
    checkpoints: Sequence[int] = (),
) -> LeakageMatrix:
    """Pairwise running correlations, revealing one sample per round.

    ``streams`` is an ``(M, n)`` array or an iterable of ``(M, k)`` blocks.
    The returned ``r`` holds the estimates after the last round;
    ``rounds_to_converge`` is -1 for pairs that never met the stopping rule.
    ``checkpoints`` (round numbers) are recorded in ``trace`` as ``(round, r)``.
    """
    if tol <= 0:
        raise ValueError("tol must be > 0")
    ckpts = sorted(set(int(c) for c in checkpoints))
    state = None
    M = 0
    seen = 0
    trace: list[tuple[int, np.ndarray]] = []
    for block in _as_chunks(streams):
        block = np.ascontiguousarray(block, dtype=float)
        if state is None:
            M = block.shape[0]
            if M < 2:
                raise ValueError("need at least two devices")
            pi, pj = np.triu_indices(M, 1)
            pi = pi.astype(np.int64)
            pj = pj.astype(np.int64)
            state = np.zeros((len(pi), _STATE_COLS))
            state[:, _PREV] = np.nan
            state[:, _CONV] = -1.0
        start = 0
        T = block.shape[1]
        while start < T:
            nxt = [c for c in ckpts if seen < c <= seen + (T - start)]
            stop = start + (nxt[0] - seen) if nxt else T
            pearson_stream_update(block[:, start:stop], pi, pj, state, float(tol), float(patience))
            seen += stop - start
            start = stop
            if nxt:
                trace.append((seen, _assemble(M, pi, pj, state)[0]))
    if state is None:
        raise ValueError("no samples supplied")
    r, rounds, undefined = _assemble(M, pi, pj, state)
    return LeakageMatrix(r=r, g_influence=influence_matrix(r), rounds_to_converge=rounds,
                         undefined_pairs=undefined, trace=trace)


def _assemble(M, pi, pj, state):
    r = np.eye(M)
    rounds = np.zeros((M, M), dtype=np.int64)
    undefined = []
    for k, (i, j) in enumerate(zip(pi, pj)):
        if state[k, _SXX] > 0 and state[k, _SYY] > 0:
            val = float(np.clip(state[k, _SXY] / math.sqrt(state[k, _SXX] * state[k, _SYY]), -1.0, 1.0))
        else:
            val = 0.0
            undefined.append((int(i), int(j)))
        r[i, j] = r[j, i] = val
        rounds[i, j] = rounds[j, i] = int(state[k, _CONV])
    return r, rounds, undefined


def influence_matrix(r) -> np.ndarray:
    """``|r_ij|`` scaled by the largest off-diagonal ``|r|``; zero diagonal."""
    r = np.asarray(r.r if isinstance(r, LeakageMatrix) else r, dtype=float)
    g = np.abs(r).copy()
    np.fill_diagonal(g, 0.0)
    top = g.max() if g.size else 0.0
    if top <= 0:
        return np.zeros_like(g)
    return g / top


def overlap_correlation(datasets: Sequence[SellerDataset]) -> np.ndarray:
    """Overlap coefficient ``|D_i & D_j| / min(|D_i|, |D_j|)`` between sellers."""
    sets = [ds.id_set for ds in datasets]
    M = len(sets)
    r = np.eye(M)
    for i in range(M):
        for j in range(i + 1, M):
            r[i, j] = r[j, i] = len(sets[i] & sets[j]) / min(len(sets[i]), len(sets[j]))
    return r


def opportunity_cost(j: int, S: Iterable[int], a: Mapping[int, int] | Sequence[int], g_influence) -> float:
    """Leakage cost to ``j``: sum of ``g[i, j] a_i a_j`` over coalition peers ``i``."""
    S = set(S)
    if j not in S:
        raise ValueError(f"device {j} is not in the coalition")
    if not a[j]:
        return 0.0
    g = np.asarray(g_influence)
    return float(sum(g[i, j] * a[i] for i in sorted(S) if i != j))


def coalition_cost(S: Iterable[int], comm_rounds: int, unit_comm_cost: float) -> float:
    """Communication cost of running a coalition; a singleton exchanges nothing."""
    size = len(set(S))
    if size <= 1:
        return 0.0
    return size * comm_rounds * unit_comm_cost


def trade_order_costs(order: Sequence[int], g_influence, coalition: bool) -> dict[int, float | None]:
    """Opportunity costs when sellers reach the platform in ``order``.

    Trading alone, a seller is exposed by everyone who traded before it.  In a
    coalition the first mover trades for the group with every member active,
    so it carries the group's cost and the others report ``None``.
    """
    costs: dict[int, float | None] = {}
    if coalition:
        lead = order[0]
        a = {i: 1 for i in order}
        costs[lead] = opportunity_cost(lead, order, a, g_influence)
        for j in order[1:]:
            costs[j] = None
        return costs
    for pos, j in enumerate(order):
        active = {i: int(k <= pos) for k, i in enumerate(order)}
        costs[j] = opportunity_cost(j, order, active, g_influence)
    return costs
