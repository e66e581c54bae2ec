"""Seeded random market instances for tests, the oracle and runtime studies."""
from __future__ import annotations

import numpy as np

from .engine import ConstraintSet, DeviceProfile, MarketGame, MarketRules
from .learner import data_type

__all__ = ["random_market"]


def random_market(
    M: int,
    seed: int,
    K: int = 3,
    total_budget: float = 1.0,
    rho_max: float = 0.6,
    unit_comm_cost: float = 0.01,
    coalition_cost_bound: float = np.inf,
    phi_threshold: float = 0.8,
    leakage_scale: float = 0.5,
) -> MarketGame:
    """Devices with random types, sample counts, dissimilarities and a symmetric influence matrix."""
    rng = np.random.default_rng(seed)
    devices = []
    for i in range(M):
        dt = data_type(float(rng.uniform(0.2, 1.0)), float(rng.uniform(0.0, 1.0)), K)
        devices.append(DeviceProfile(i, int(rng.integers(5, 50)), dt, rho=float(rng.uniform(0.0, rho_max))))
    g = rng.uniform(0.0, leakage_scale, (M, M))
    g = (g + g.T) / 2
    np.fill_diagonal(g, 0.0)
    rules = MarketRules(
        total_budget=total_budget,
        constraints=ConstraintSet(rho_max, coalition_cost_bound, (phi_threshold,) * M),
        unit_comm_cost=unit_comm_cost,
    )
    return MarketGame(devices, g, rules)
