"""Valuation functions: set-based, learning precision and leakage-depressed."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

__all__ = [
    "ValuationParams",
    "set_valuation",
    "conditional_valuation",
    "precision_zeta",
    "scaled_valuation",
    "scaled_valuation_curve",
    "leakage_valuation",
    "value_depression_series",
]

N0_MAX = 1.0 - 1e-6


@dataclass(frozen=True)
class ValuationParams:
    gamma: float = 1.0
    A0: float = 0.2
    noise_mu: float = 0.5
    noise_sigma: float = 1.0
    b: float = 0.1
    g: float = 0.0

    def __post_init__(self):
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if not 0.0 < self.A0 <= 1.0:
            raise ValueError("A0 must lie in (0, 1]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.b <= 0:
            raise ValueError("b must be > 0")
        if not 0.0 <= self.g <= 1.0:
            raise ValueError("g must lie in [0, 1]")


def set_valuation(D: Iterable[int]) -> float:
    """Cardinality valuation ``v(D) = |D|``."""
    return float(len(set(D)))


def conditional_valuation(held: Iterable[int], offered: Iterable[int], gamma: float = 1.0) -> float:
    """Value of ``offered`` to a learner already holding ``held``.

    Redundant samples are weighted by ``gamma``; the rest count at face value.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    held, offered = set(held), set(offered)
    return gamma * set_valuation(held & offered) + set_valuation(offered - held)


def _clamp_n0(n0: float) -> float:
    c = min(max(n0, 0.0), N0_MAX)
    if c != n0:
        log.debug("noise factor n0=%.4g clamped to %.4g", n0, c)
    return c


def precision_zeta(overlap: float, A0: float, n0: float = 0.0) -> float:
    """Learning precision reached with ``overlap`` shared samples."""
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    return 1.0 - A0 * math.exp(-2.0 * overlap * (1.0 - _clamp_n0(n0)))


_E = math.e
_J_SCALE = 1.5 / math.log1p(_E)


def scaled_valuation(zeta: float) -> float:
    """Increasing log-concave map of precision onto [0, 1.5]."""
    return _J_SCALE * math.log1p(_E * zeta)


def scaled_valuation_curve(
    A0: float,
    with_noise: bool,
    overlaps: Sequence[float],
    seed: int = 0,
    noise_mu: float = 0.5,
    noise_sigma: float = 1.0,
) -> list[float]:
    if any(b < a for a, b in zip(overlaps, overlaps[1:])):
        raise ValueError("overlaps must be sorted ascending")
    rng = np.random.default_rng(seed)
    out = []
    for x in overlaps:
        n0 = float(rng.normal(noise_mu, noise_sigma)) if with_noise else 0.0
        out.append(scaled_valuation(precision_zeta(x, A0, n0)))
    return out


def leakage_valuation(shares: Sequence[float], g: float, b: float, p: float) -> float:
    """Linear-pricing valuation depressed by the leakage factor ``g``.

    ``V = [sum_i s_i^(1 - b p)]^(1/b) / (1 + g)`` for market shares ``s_i``.
    """
    s = np.asarray(shares, dtype=float)
    if s.size == 0 or np.any(s < 0) or abs(s.sum() - 1.0) > 1e-9:
        raise ValueError("shares must be non-negative and sum to 1")
    if not 0.0 <= g <= 1.0:
        raise ValueError("leakage factor g must lie in [0, 1]")
    if b <= 0 or p < 0:
        raise ValueError("need b > 0 and p >= 0")
    expo = 1.0 - b * p
    if expo <= 0 and np.any(s == 0):
        raise ValueError(f"b*p = {b * p:.6g} >= 1 with a zero share: 0 ** {expo:.6g} is undefined")
    total = float(np.sum(s**expo))
    return total ** (1.0 / b) / (1.0 + g)


def value_depression_series(
    shares: Sequence[float],
    prices: Sequence[float],
    rounds: Sequence[float],
    b: float = 0.1,
    first_mover: int = 0,
) -> list[dict]:
    """Valuation curves over ``prices`` for every seller and leakage round.

    The first mover keeps ``g = 0`` in every round; every other seller uses the
    round's leakage factor.  Rows: ``seller, round, g, price, value``.
    """
    if any(b2 < a for a, b2 in zip(prices, prices[1:])):
        raise ValueError("prices must be ascending")
    rows = []
    for seller in range(len(shares)):
        for t, g in enumerate(rounds):
            g_eff = 0.0 if seller == first_mover else float(g)
            for p in prices:
                rows.append(
                    {"seller": seller, "round": t, "g": g_eff, "price": float(p),
                     "value": leakage_valuation(shares, g_eff, b, p)}
                )
    return rows
