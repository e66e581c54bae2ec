"""Scenarios, payoff reports, Monte Carlo batches and figure recipes."""
from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import MarketConfig
from .engine import ConstraintSet, DeviceProfile, MarketGame, MarketRules
from .leakage import influence_matrix, sequential_correlation_estimate
from .learner import Potential, data_type, train
from .solver import majp_solve
from .synthetic import CorrelationSpec, SellerDataset, generate_correlated_profiles
from .valuation import leakage_valuation

log = logging.getLogger(__name__)

__all__ = [
    "Scenario",
    "MetricsReport",
    "build_scenario",
    "retained_value",
    "device_payoffs",
    "baseline_noncooperative",
    "run_scenario",
    "monte_carlo",
    "AggregateReport",
]


@dataclass(frozen=True)
class Scenario:
    config: MarketConfig
    seed: int
    datasets: tuple[SellerDataset, ...]
    game: MarketGame
    groups: np.ndarray
    trade_order: np.ndarray

    @property
    def devices(self) -> list[DeviceProfile]:
        return self.game.devices


def _group_correlation(cfg: MarketConfig, groups: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    M = len(groups)
    same = groups[:, None] == groups[None, :]
    r = np.where(same, rng.uniform(*cfg.r_within, (M, M)), rng.uniform(*cfg.r_across, (M, M)))
    r = np.triu(r, 1)
    r = r + r.T + np.eye(M)
    # nearest PSD correlation by eigenvalue clipping, then rescale the diagonal
    w, v = np.linalg.eigh(r)
    r = (v * np.clip(w, 1e-9, None)) @ v.T
    s = np.sqrt(np.diag(r))
    return r / s[:, None] / s[None, :]


def build_scenario(cfg: MarketConfig, seed: int) -> Scenario:
    """Correlated seller data, learned types, estimated leakage and the market game."""
    rng = np.random.default_rng(seed)
    groups = np.repeat(np.arange(len(cfg.group_sizes)), cfg.group_sizes)
    M = len(groups)
    counts = rng.integers(cfg.samples_range[0], cfg.samples_range[1] + 1, M)
    corr = _group_correlation(cfg, groups, rng)
    spec = CorrelationSpec(M, np.zeros(M), corr, [int(c) for c in counts], n_features=cfg.d)
    datasets = generate_correlated_profiles(spec, seed)

    # data quality: how far one step on a device's data contracts the gradient
    pot = Potential(datasets, train(datasets, 0, 0.05, seed), learning_rate=0.05)
    empty = pot(())
    contrib = np.array([empty - pot(ds.sample_ids) for ds in datasets])
    theta = np.clip(contrib / contrib.max(), 0.0, 1.0) if contrib.max() > 0 else np.ones(M)

    lo = np.array(cfg.xi_ranges[0::2])[groups]
    hi = np.array(cfg.xi_ranges[1::2])[groups]
    xi = rng.uniform(lo, hi)
    rho = rng.uniform(*cfg.rho_range, M)
    devices = [
        DeviceProfile(i, int(counts[i]), data_type(float(theta[i]), float(xi[i]), cfg.K), float(rho[i]), dataset=datasets[i])
        for i in range(M)
    ]

    aligned = int(counts.min())
    streams = np.stack([ds.features[:aligned, 0] for ds in datasets])
    g = influence_matrix(sequential_correlation_estimate(streams, tol=1e-3))
    rules = MarketRules(
        total_budget=cfg.total_budget,
        constraints=ConstraintSet(cfg.rho_max, cfg.coalition_cost_bound, (cfg.phi_threshold,) * M),
        unit_comm_cost=cfg.unit_comm_cost,
        comm_rounds=cfg.comm_rounds,
    )
    order = rng.permutation(M)
    return Scenario(cfg, seed, tuple(datasets), MarketGame(devices, g, rules), groups, order)


def retained_value(exposure: float, cfg: MarketConfig, price: float = 1.0) -> float:
    """Share of a seller's data value left after leakage ``exposure``."""
    shares = cfg.shares
    return leakage_valuation(shares, exposure, cfg.b, price) / leakage_valuation(shares, 0.0, cfg.b, price)


def _exposures(g: np.ndarray, order: np.ndarray, blocks: Sequence[frozenset[int]]) -> np.ndarray:
    """Mean influence on each device from outsiders who traded earlier.

    A coalition trades once, at the slot of its earliest member, so members
    shield each other.
    """
    M = len(order)
    slot = np.empty(M, dtype=np.int64)
    slot[order] = np.arange(M)
    block_of = {m: b for b in blocks for m in b}
    trade_slot = {b: min(slot[m] for m in b) for b in blocks}
    out = np.zeros(M)
    for m in range(M):
        mine = block_of[m]
        earlier = [i for i in range(M) if i not in mine and trade_slot[block_of[i]] < trade_slot[mine]]
        out[m] = float(np.mean(g[earlier, m])) if earlier else 0.0
    return out


def device_payoffs(scn: Scenario, blocks: Sequence[frozenset[int]], prices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-device payoff and participation under a partition and price vector.

    Payoff is ``delta * retained value + bracket``; the bracket is the
    device's price plus its coalition's group gain minus its priced leakage and
    the coalition cost.  Devices with a negative bracket sit out (bracket 0).
    """
    game, cfg = scn.game, scn.config
    exposure = _exposures(game.g, scn.trade_order, blocks)
    pay = np.zeros(game.n_players)
    part = np.zeros(game.n_players, dtype=np.int64)
    for b in blocks:
        a, brackets = game.rational_participation(sorted(b), prices)
        for j, flag in a.items():
            part[j] = flag
            pay[j] = cfg.delta_m * retained_value(exposure[j], cfg) + (brackets[j] if flag else 0.0)
    return pay, part


@dataclass
class MetricsReport:
    seed: int
    payoffs: np.ndarray
    participation: np.ndarray
    coalition_sizes: list[int]
    leakage_mean: float
    leakage_max: float
    runtime_ms: dict[str, float] = field(default_factory=dict)
    value_trace: list[float] = field(default_factory=list)
    social_value: float = 0.0

    @property
    def average_payoff(self) -> float:
        return float(np.mean(self.payoffs))


def _leak_summary(g: np.ndarray) -> tuple[float, float]:
    off = g[~np.eye(len(g), dtype=bool)]
    return (float(off.mean()), float(off.max())) if off.size else (0.0, 0.0)


def baseline_noncooperative(scn: Scenario) -> MetricsReport:
    """Everyone trades alone and is paid in proportion to its sample count."""
    game = scn.game
    n = np.array([d.n_samples for d in game.devices], dtype=float)
    prices = game.rules.total_budget * n / n.sum()
    blocks = [frozenset([i]) for i in range(game.n_players)]
    pay, part = device_payoffs(scn, blocks, prices)
    return MetricsReport(scn.seed, pay, part, [1] * game.n_players, *_leak_summary(game.g))


def run_scenario(cfg: MarketConfig, seed: int) -> tuple[MetricsReport, MetricsReport]:
    """Build a scenario, solve it and report MAJP and non-cooperative payoffs."""
    scn = build_scenario(cfg, seed)
    t0 = time.perf_counter()
    trace = majp_solve(scn.game, seed, max_iters=cfg.max_iters)
    ms = (time.perf_counter() - t0) * 1e3
    blocks = trace.blocks
    pay, part = device_payoffs(scn, blocks, trace.final_prices)
    coop = MetricsReport(seed, pay, part, sorted((len(b) for b in blocks), reverse=True), *_leak_summary(scn.game.g),
                         runtime_ms={"majp": ms}, value_trace=trace.values, social_value=trace.social_value)
    return coop, baseline_noncooperative(scn)


@dataclass(frozen=True)
class AggregateReport:
    n_runs: int
    mean_payoff: float
    stderr_payoff: float
    per_run: tuple[float, ...]


def aggregate(values: Sequence[float]) -> AggregateReport:
    v = np.sort(np.asarray(values, dtype=float))
    n = len(v)
    se = float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return AggregateReport(n, float(math.fsum(v) / n), se, tuple(values))


def monte_carlo(cfg: MarketConfig, n_runs: int, base_seed: int = 0, workers: int = 1):
    """Run ``n_runs`` seeds; returns (MAJP aggregate, baseline aggregate, raw report pairs)."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = [base_seed + k for k in range(n_runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(lambda s: run_scenario(cfg, s), seeds))
    else:
        runs = [run_scenario(cfg, s) for s in seeds]
    coop = aggregate([c.average_payoff for c, _ in runs])
    base = aggregate([b.average_payoff for _, b in runs])
    return coop, base, runs
