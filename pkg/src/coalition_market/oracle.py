"""Brute-force ground truth: exhaustive partition search and exact expectations.

The market-game evaluator here is a separate implementation of the value
rules in :mod:`coalition_market.engine`, written against flat arrays so it can
run compiled.  Agreement between the two is what the tests check.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations_with_replacement
from typing import Callable, Iterator, Sequence

import numpy as np

from ._accel import njit
from .engine import MarketGame

log = logging.getLogger(__name__)

__all__ = [
    "MAX_PLAYERS",
    "OracleResult",
    "bell_number",
    "enumerate_partitions",
    "optimal_partition",
    "ratio_bound_check",
    "harmonic",
    "exact_marginal_contribution",
]

MAX_PLAYERS = 13
MAX_EXACT_SAMPLES = 12


def bell_number(n: int) -> int:
    row = [1]
    for _ in range(n):
        nxt = [row[-1]]
        for v in row:
            nxt.append(nxt[-1] + v)
        row = nxt
    return row[0]


def _check_cap(M: int) -> None:
    if not 1 <= M <= MAX_PLAYERS:
        raise ValueError(f"exhaustive search supports 1..{MAX_PLAYERS} players, got {M}")


def _rgs_to_blocks(rgs: Sequence[int]) -> tuple[frozenset[int], ...]:
    blocks: list[set[int]] = []
    for i, b in enumerate(rgs):
        if b == len(blocks):
            blocks.append(set())
        blocks[b].add(i)
    return tuple(frozenset(b) for b in blocks)


def enumerate_partitions(M: int) -> Iterator[tuple[frozenset[int], ...]]:
    """Every set partition of ``0..M-1`` once, in restricted-growth-string order."""
    _check_cap(M)
    a = [0] * M
    while True:
        yield _rgs_to_blocks(a)
        i = M - 1
        while i > 0 and a[i] > max(a[:i]):
            i -= 1
        if i == 0:
            return
        a[i] += 1
        for j in range(i + 1, M):
            a[j] = 0


@njit(nogil=True)
def _block_worth(mask, bud, M, level, n, phi, g, blk_level, blk_samples, unit_cost, rounds, log_m):
    """Worth of one block under budget ``bud`` with individually rational participation."""
    k = blk_level[mask]
    size = 0
    for i in range(M):
        if (mask >> i) & 1:
            size += 1
    price = np.zeros(M)
    a = np.zeros(M, np.int64)
    for i in range(M):
        if (mask >> i) & 1:
            a[i] = 1
            if bud > 0.0 and level[i] == k:
                price[i] = bud * n[i] / blk_samples[mask]
    c_s = size * rounds * unit_cost if size > 1 else 0.0
    gain = 0.0
    while True:
        s = 0.0
        for i in range(M):
            if a[i] == 1:
                s += phi[i]
        gain = math.log1p(s) / log_m
        dropped = False
        for i in range(M):
            if a[i] == 1:
                leak = 0.0
                for j in range(M):
                    if j != i and a[j] >= 1:
                        leak += g[j, i]
                if price[i] + gain - price[i] * leak - c_s < 0.0:
                    a[i] = 2  # marked; cleared after the sweep
                    dropped = True
        for i in range(M):
            if a[i] == 2:
                a[i] = 0
        if not dropped:
            break
    v = 0.0
    for i in range(M):
        if a[i] == 1:
            leak = 0.0
            for j in range(M):
                if j != i and a[j] == 1:
                    leak += g[j, i]
            v += (price[i] + gain) - (price[i] * leak + c_s)
    return v


@njit(nogil=True)
def _subset_tables(M, level, n, rho, phi, g, th, level_samples, budget, rho_max, cost_bound,
                   unit_cost, rounds, log_m):
    """Per-subset summaries and worths, indexed by member bitmask.

    ``paid[mask, L]`` is the worth of ``mask`` as its level's anchor when the
    set of anchored levels is the bitmask ``L``.
    """
    K = level_samples.shape[0]
    S = 1 << M
    blk_level = np.zeros(S, np.int64)
    blk_count = np.zeros(S, np.int64)
    blk_samples = np.zeros(S, np.int64)
    blk_phi = np.zeros(S)
    blk_ok = np.zeros(S, np.bool_)
    counts = np.zeros(K + 1, np.int64)
    for mask in range(1, S):
        counts[:] = 0
        size = 0
        total_n = 0
        for i in range(M):
            if (mask >> i) & 1:
                counts[level[i]] += 1
                size += 1
                total_n += n[i]
        best = 1
        for k in range(2, K + 1):
            if counts[k] > counts[best]:
                best = k
        blk_level[mask] = best
        blk_count[mask] = counts[best]
        rho_sum = 0.0
        for i in range(M):
            if (mask >> i) & 1 and level[i] == best:
                blk_samples[mask] += n[i]
                blk_phi[mask] += phi[i]
                rho_sum += rho[i] * n[i]
        ok = rho_sum / total_n <= rho_max
        cost = size * rounds * unit_cost if size > 1 else 0.0
        if cost > cost_bound:
            ok = False
        for i in range(M):
            if ok and (mask >> i) & 1 and level[i] == best:
                leak = 0.0
                for j in range(M):
                    if j != i and (mask >> j) & 1 and level[j] == best:
                        leak += g[j, i]
                if leak > th[i]:
                    ok = False
        blk_ok[mask] = ok
    unpaid = np.zeros(S)
    paid = np.zeros((S, 1 << K))
    for mask in range(1, S):
        unpaid[mask] = _block_worth(mask, 0.0, M, level, n, phi, g, blk_level, blk_samples,
                                    unit_cost, rounds, log_m)
        if not blk_ok[mask]:
            continue
        k = blk_level[mask]
        for L in range(1 << K):
            if (L >> (k - 1)) & 1:
                n_l = 0
                for q in range(K):
                    if (L >> q) & 1:
                        n_l += level_samples[q]
                bud = budget * level_samples[k - 1] / n_l
                paid[mask, L] = _block_worth(mask, bud, M, level, n, phi, g, blk_level, blk_samples,
                                             unit_cost, rounds, log_m)
    return blk_level, blk_count, blk_samples, blk_phi, blk_ok, unpaid, paid


@njit(nogil=True)
def _rgs_value(rgs, nblocks, K, blk_level, blk_count, blk_samples, blk_phi, blk_ok, unpaid, paid, masks, anchor):
    masks[:nblocks] = 0
    for i in range(rgs.shape[0]):
        masks[rgs[i]] |= 1 << i
    anchor[:] = -1
    # blocks come in min-member order, so strict comparisons keep the earliest on ties
    for b in range(nblocks):
        m = masks[b]
        if not blk_ok[m]:
            continue
        k = blk_level[m]
        c = anchor[k]
        if c < 0:
            anchor[k] = b
        else:
            mc = masks[c]
            if blk_count[m] != blk_count[mc]:
                better = blk_count[m] > blk_count[mc]
            elif blk_samples[m] != blk_samples[mc]:
                better = blk_samples[m] > blk_samples[mc]
            else:
                better = blk_phi[m] > blk_phi[mc]
            if better:
                anchor[k] = b
    L = 0
    for k in range(1, K + 1):
        if anchor[k] >= 0:
            L |= 1 << (k - 1)
    total = 0.0
    for b in range(nblocks):
        m = masks[b]
        if anchor[blk_level[m]] == b:
            total += paid[m, L]
        else:
            total += unpaid[m]
    return total


@njit(nogil=True)
def _best_with_prefix(prefix, M, K, blk_level, blk_count, blk_samples, blk_phi, blk_ok, unpaid, paid):
    """Best (value, block count) over restricted growth strings starting with ``prefix``."""
    p = prefix.shape[0]
    a = np.zeros(M, np.int64)
    mx = np.zeros(M, np.int64)
    masks = np.zeros(M, np.int64)
    anchor = np.zeros(K + 1, np.int64)
    for i in range(p):
        a[i] = prefix[i]
    for i in range(M):
        mx[i] = a[i] if i == 0 else max(mx[i - 1], a[i])
    best = -np.inf
    best_blocks = 0
    best_rgs = a.copy()
    count = 0
    lo = max(p, 1)
    while True:
        nb = mx[M - 1] + 1
        v = _rgs_value(a, nb, K, blk_level, blk_count, blk_samples, blk_phi, blk_ok, unpaid, paid, masks, anchor)
        count += 1
        if v > best or (v == best and nb > best_blocks):
            best = v
            best_blocks = nb
            best_rgs[:] = a
        i = M - 1
        while i >= lo and a[i] > mx[i - 1]:
            i -= 1
        if i < lo:
            break
        a[i] += 1
        mx[i] = max(mx[i - 1], a[i])
        for j in range(i + 1, M):
            a[j] = 0
            mx[j] = mx[i]
    return best, best_blocks, best_rgs, count


def _prefixes(M: int, depth: int) -> list[np.ndarray]:
    out = [[0]]
    for _ in range(1, depth):
        out = [p + [b] for p in out for b in range(max(p) + 2)]
    return [np.array(p, dtype=np.int64) for p in out]


@dataclass(frozen=True)
class OracleResult:
    blocks: tuple[frozenset[int], ...]
    value: float
    visited: int


MAX_TABLE_LEVELS = 8


def _market_arrays(game: MarketGame):
    K = max(game.levels)
    if K > MAX_TABLE_LEVELS:
        raise ValueError(f"exhaustive search supports at most {MAX_TABLE_LEVELS} type levels, got {K}")
    ls = np.array([game.level_samples.get(k, 0) for k in range(1, K + 1)], dtype=np.int64)
    c = game.rules.constraints
    M = game.n_players
    return (
        M,
        np.array([d.level for d in game.devices], dtype=np.int64),
        np.array([d.n_samples for d in game.devices], dtype=np.int64),
        np.array([d.rho for d in game.devices]),
        np.array([d.phi for d in game.devices]),
        np.ascontiguousarray(game.g),
        np.array([c.phi_threshold(i) for i in range(M)]),
        ls,
        float(game.rules.total_budget),
        float(c.rho_max),
        float(c.coalition_cost_bound),
        float(game.rules.unit_comm_cost),
        float(game.rules.comm_rounds),
        math.log1p(M),
    )


def _tables(game: MarketGame):
    arrays = _market_arrays(game)
    return (arrays[0], len(arrays[7])) + tuple(_subset_tables(*arrays))


def partition_value(game: MarketGame, blocks: Sequence[frozenset[int]], tables=None) -> float:
    """Oracle-side value of one partition of a market game."""
    M, K, *tab = tables if tables is not None else _tables(game)
    rgs = np.zeros(M, dtype=np.int64)
    blocks = sorted(blocks, key=min)
    for b, members in enumerate(blocks):
        for m in members:
            rgs[m] = b
    return float(_rgs_value(rgs, len(blocks), K, *tab, np.zeros(M, np.int64), np.zeros(K + 1, np.int64)))


def optimal_partition(game, n_jobs: int = 1, shard_depth: int = 3) -> OracleResult:
    """Exhaustive argmax of the social value.

    Among equal values the partition with the most coalitions wins, then the
    one first in restricted-growth-string order.  Market games are sharded by
    RGS prefix; the result does not depend on ``n_jobs``.
    """
    M = game.n_players
    _check_cap(M)
    if not isinstance(game, MarketGame):
        best, best_blocks, count = (-math.inf, 0), (), 0
        for blocks in enumerate_partitions(M):
            count += 1
            key = (game.social_value(blocks), len(blocks))
            if key > best:
                best, best_blocks = key, blocks
        return OracleResult(tuple(sorted(best_blocks, key=min)), best[0], count)

    tables = _tables(game)
    shards = _prefixes(M, min(shard_depth, M))

    def run(prefix):
        return _best_with_prefix(prefix, *tables)

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, shards))
    else:
        results = [run(p) for p in shards]
    best, best_rgs, total = (-math.inf, 0), None, 0
    for v, nb, rgs, count in results:
        total += int(count)
        if (float(v), int(nb)) > best:
            best, best_rgs = (float(v), int(nb)), rgs
    return OracleResult(_rgs_to_blocks(best_rgs.tolist()), best[0], total)


def harmonic(n: int) -> float:
    return float(sum(Fraction(1, i) for i in range(1, n + 1)))


def ratio_bound_check(v_majp: float, v_star: float, max_coalition_size: int, rel_tol: float = 1e-9) -> bool | None:
    """Whether the heuristic value respects the optimum and the harmonic ratio bound.

    Returns ``None`` (and logs a notice) when ``v_star <= 0``, where the ratio
    is meaningless.  ``rel_tol`` absorbs floating-point summation order.
    """
    if v_star <= 0:
        log.warning("ratio bound skipped: optimal value %.6g is not positive", v_star)
        return None
    slack = rel_tol * max(1.0, abs(v_star))
    return bool(v_majp <= v_star + slack and v_majp / v_star <= harmonic(max_coalition_size) + rel_tol)


def exact_marginal_contribution(z: int, sample_ids: Sequence[int], B: int,
                                potential_fn: Callable[[frozenset[int]], float]) -> float:
    """Exact ``E[J(D u {z}) - J(D)]`` with ``i ~ U{1..B}`` and ``D`` drawn as ``i - 1`` ids with replacement.

    Ordered draws are grouped into multisets weighted by their multinomial count.
    """
    ids = list(sample_ids)
    if not 1 <= len(ids) <= MAX_EXACT_SAMPLES:
        raise ValueError(f"exact expectation supports 1..{MAX_EXACT_SAMPLES} samples, got {len(ids)}")
    if B < 1:
        raise ValueError("batch size B must be >= 1")
    cache: dict[frozenset[int], float] = {}

    def J(s: frozenset[int]) -> float:
        if s not in cache:
            cache[s] = potential_fn(s)
        return cache[s]

    n = len(ids)
    total = 0.0
    for i in range(1, B + 1):
        k = i - 1
        acc = 0.0
        for combo in combinations_with_replacement(range(n), k):
            weight = math.factorial(k)
            for c in set(combo):
                weight //= math.factorial(combo.count(c))
            base = frozenset(ids[c] for c in combo)
            acc += weight * (J(base | {z}) - J(base))
        total += acc / n**k
    return total / B
