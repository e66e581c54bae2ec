"""Private type discovery, the switch rule and the three-phase MAJP solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import DeviceProfile, MarketGame, Partition, move_device

log = logging.getLogger(__name__)

__all__ = [
    "PlatformView",
    "PrivateChannel",
    "DiscoveryResult",
    "discover_types",
    "IterationRecord",
    "SolveTrace",
    "ConvergenceError",
    "switch",
    "majp_solve",
    "is_nash_stable",
]


@dataclass(frozen=True)
class PlatformView:
    """All the platform learns from discovery: how many devices sit at each level."""

    level_counts: tuple[tuple[int, int], ...]


class PrivateChannel:
    """Trusted in-process broadcast between devices.

    Devices post their composite type; the channel answers each device with its
    level through a private reply and counts one ping per device.
    """

    def __init__(self, K: int, unit_comm_cost: float):
        if K < 1:
            raise ValueError("need at least one proxy type set")
        self.K = K
        self.unit_comm_cost = unit_comm_cost
        self.rounds = 0
        self._posted: dict[int, int] = {}

    def post(self, device: DeviceProfile) -> None:
        self._posted[device.id] = device.level

    def ping(self, device_id: int) -> int:
        self.rounds += 1
        return self._posted[device_id]

    @property
    def cost(self) -> float:
        return self.rounds * self.unit_comm_cost

    def aggregate(self) -> PlatformView:
        counts: dict[int, int] = {}
        for lvl in self._posted.values():
            counts[lvl] = counts.get(lvl, 0) + 1
        return PlatformView(tuple(sorted(counts.items())))


@dataclass(frozen=True)
class DiscoveryResult:
    levels: dict[int, int]
    comm_cost: float
    proxy_sets: tuple[tuple[int, ...], ...]
    platform: PlatformView


def discover_types(devices: Sequence[DeviceProfile], unit_comm_cost: float, seed: int, K: int | None = None) -> DiscoveryResult:
    """Tell every device its type level without exposing types to the platform.

    Devices start in ``K`` seeded proxy sets and are pinged in a random order
    within each set.
    """
    if K is None:
        K = max((d.level for d in devices), default=1)
    channel = PrivateChannel(K, unit_comm_cost)
    for d in devices:
        channel.post(d)
    rng = np.random.default_rng(seed)
    ids = rng.permutation([d.id for d in devices]).tolist()
    proxy = tuple(tuple(ids[k::K]) for k in range(K))
    levels: dict[int, int] = {}
    for members in proxy:
        for m in rng.permutation(list(members)).tolist() if members else ():
            levels[int(m)] = channel.ping(int(m))
    return DiscoveryResult(dict(sorted(levels.items())), channel.cost, proxy, channel.aggregate())


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    device: int
    from_coalition: int
    to_coalition: int
    value_before: float
    value_after: float


@dataclass(frozen=True)
class SolveTrace:
    iterations: tuple[IterationRecord, ...]
    final_partition: Partition
    final_prices: np.ndarray
    final_participation: np.ndarray
    social_value: float
    initial_value: float
    comm_cost: float = 0.0
    levels: dict[int, int] = field(default_factory=dict)

    @property
    def values(self) -> list[float]:
        return [r.value_after for r in self.iterations]

    @property
    def blocks(self) -> tuple[frozenset[int], ...]:
        return self.final_partition.blocks()


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, iterations: Sequence[IterationRecord]):
        super().__init__(message)
        self.iterations = tuple(iterations)


def switch(state, m: int, t: int) -> tuple[bool, float, float]:
    """Try moving ``m`` into coalition ``t``; returns ``(accepted, value_before, value_after)``.

    Accepted iff ``m`` strictly gains and the social value does not drop.
    """
    if t == state.coalition_id(m):
        raise ValueError("source and target coalition coincide")
    before = state.value()
    if not state.preference_if(m, t) > state.preference_now(m):
        return False, before, before
    after = state.value_if(m, t)
    if after < before:
        return False, before, before
    state.move(m, t)
    return True, before, after


def _singletons(n: int) -> tuple[frozenset[int], ...]:
    return tuple(frozenset([i]) for i in range(n))


def majp_solve(game, seed: int, max_iters: int = 10_000, initial: Sequence[frozenset[int]] | None = None,
               unit_comm_cost: float | None = None) -> SolveTrace:
    """Discover types, run switch passes until a full pass changes nothing, then price.

    Every device, visited in a seeded random order, ranks all other coalitions
    and a fresh singleton by the payment it would get there (ties broken by
    the same RNG) and takes the first strictly better move that keeps the
    social value from dropping.
    """
    n = game.n_players
    if n < 1:
        raise ValueError("need at least one device")
    rng = np.random.default_rng(seed)
    comm_cost, levels = 0.0, {}
    if isinstance(game, MarketGame):
        unit = game.rules.unit_comm_cost if unit_comm_cost is None else unit_comm_cost
        found = discover_types(game.devices, unit, int(rng.integers(2**32)))
        comm_cost, levels = found.comm_cost, found.levels

    state = game.new_state(initial if initial is not None else _singletons(n))
    initial_value = state.value()
    records: list[IterationRecord] = []
    changed = True
    while changed:
        changed = False
        for m in rng.permutation(n).tolist():
            targets = state.targets(m)
            rng.shuffle(targets)
            current = state.preference_now(m)
            ranked = sorted(((state.preference_if(m, t), k, t) for k, t in enumerate(targets)),
                            key=lambda x: (-x[0], x[1]))
            for pref, _, t in ranked:
                if not pref > current:
                    break
                src = state.coalition_id(m)
                ok, before, after = switch(state, m, t)
                if ok:
                    records.append(IterationRecord(len(records) + 1, m, src, state.coalition_id(m), before, after))
                    changed = True
                    break
            if len(records) > max_iters:
                raise ConvergenceError(f"no stable partition after {max_iters} accepted switches", records)

    blocks = state.blocks()
    partition = game.to_partition(blocks)
    prices = np.array([game.payments(blocks)[m] for m in range(n)])
    participation = np.zeros(n, dtype=np.int64)
    if isinstance(game, MarketGame):
        for c in partition.coalitions:
            for m, flag in game.participation(c.members, c.budget).items():
                participation[m] = flag
    else:
        participation[:] = 1
    return SolveTrace(tuple(records), partition, prices, participation, game.social_value(blocks),
                      initial_value, comm_cost, levels)


def is_nash_stable(game, blocks: Sequence[frozenset[int]], gated: bool = True) -> bool:
    """Exhaustive unilateral-deviation check.

    With ``gated`` a deviation only counts if it also keeps the social value
    from dropping, which is the admissibility rule the solver uses.
    """
    blocks = tuple(sorted((frozenset(b) for b in blocks), key=min))
    value = game.social_value(blocks)
    pay = game.payments(blocks)
    for m in range(game.n_players):
        own = next(b for b in blocks if m in b)
        options = [b for b in blocks if b != own]
        if len(own) > 1:
            options.append(None)
        for target in options:
            moved = move_device(blocks, m, target)
            if game.payments(moved)[m] > pay[m] and (not gated or game.social_value(moved) >= value):
                return False
    return True
