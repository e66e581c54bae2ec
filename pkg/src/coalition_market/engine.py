"""Coalition value, contracts pricing and the hedonic market game.

Market rules used throughout:

* A coalition's ``type_level`` is the most common level among its members
  (ties go to the smaller level).  Members at that level are *matched*.
* Feasibility is structural: it is checked with every matched member
  participating, which is the worst case for leakage.
* For each level the *anchor* is the feasible coalition of that level with the
  most matched members (then most matched samples, then largest matched phi
  sum, then smallest member id).
  Only anchors are paid.  Level ``k`` receives ``p_S * N_k / N_L``, where
  ``N_k`` counts the samples of all level-``k`` devices in the market and
  ``N_L`` sums ``N_k`` over levels that currently have an anchor.  The anchor
  splits its budget over matched members in proportion to their sample counts.
* Participation is individual rationality: a member participates iff its
  bracket in the coalition value is non-negative, iterated until stable.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .learner import DataType
from .leakage import coalition_cost, opportunity_cost
from .synthetic import SellerDataset

__all__ = [
    "DeviceProfile",
    "Coalition",
    "Partition",
    "ConstraintSet",
    "MarketRules",
    "proportional_price",
    "group_gain",
    "dissimilarity",
    "coalition_value",
    "feasible",
    "MarketGame",
    "TableGame",
    "walkthrough_game",
    "move_device",
]


@dataclass(frozen=True)
class DeviceProfile:
    id: int
    n_samples: int
    dtype: DataType
    rho: float = 0.0
    a: int = 1
    dataset: SellerDataset | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"device {self.id}: rho must be >= 0")
        if self.a not in (0, 1):
            raise ValueError(f"device {self.id}: participation flag must be 0 or 1")
        if self.n_samples < 1:
            raise ValueError(f"device {self.id}: needs at least one sample")

    @property
    def level(self) -> int:
        return self.dtype.level

    @property
    def phi(self) -> float:
        return self.dtype.phi


@dataclass(frozen=True)
class Coalition:
    members: frozenset[int]
    type_level: int
    budget: float = 0.0

    def __post_init__(self):
        if self.budget < 0:
            raise ValueError("coalition budget must be >= 0")


@dataclass(frozen=True)
class Partition:
    coalitions: tuple[Coalition, ...]
    total_budget: float

    def __post_init__(self):
        seen: set[int] = set()
        for c in self.coalitions:
            if seen & c.members:
                raise ValueError("coalitions overlap")
            seen |= c.members

    def blocks(self) -> tuple[frozenset[int], ...]:
        return tuple(c.members for c in self.coalitions)

    @property
    def allocated(self) -> float:
        return float(sum(c.budget for c in self.coalitions))


@dataclass(frozen=True)
class ConstraintSet:
    rho_max: float = math.inf
    coalition_cost_bound: float = math.inf
    phi_thresholds: tuple[float, ...] = ()

    def __post_init__(self):
        if self.rho_max < 0 or self.coalition_cost_bound < 0 or any(t < 0 for t in self.phi_thresholds):
            raise ValueError("constraint bounds must be non-negative")

    def phi_threshold(self, i: int) -> float:
        return self.phi_thresholds[i] if i < len(self.phi_thresholds) else math.inf


@dataclass(frozen=True)
class MarketRules:
    total_budget: float = 1.0
    constraints: ConstraintSet = ConstraintSet()
    unit_comm_cost: float = 0.0
    comm_rounds: int = 1


def proportional_price(budget: float, n_j: int, member_counts: Sequence[int]) -> float:
    """Contract share of ``budget`` for a member holding ``n_j`` of the pooled samples."""
    total = sum(member_counts)
    if not member_counts or total <= 0:
        raise ValueError("proportional price needs a positive pooled sample count")
    return budget * n_j / total


def group_gain(S: Iterable[int], devices: Sequence[DeviceProfile], a: Mapping[int, int] | Sequence[int],
               market_size: int | None = None) -> float:
    """``log(1 + sum of participating phi)`` normalised by ``log(1 + |M|)``."""
    M = market_size if market_size is not None else len(devices)
    total = sum(devices[j].phi for j in sorted(S) if a[j])
    return math.log1p(total) / math.log1p(M)


def dissimilarity(S: Iterable[int], devices: Sequence[DeviceProfile], a: Mapping[int, int] | Sequence[int]) -> float:
    """Participation-weighted average dissimilarity ``rho_S``."""
    S = sorted(S)
    pooled = sum(devices[j].n_samples for j in S)
    if pooled == 0:
        return 0.0
    return sum(a[j] * devices[j].rho * devices[j].n_samples for j in S) / pooled


def coalition_value(
    S: Iterable[int],
    devices: Sequence[DeviceProfile],
    prices: Mapping[int, float] | Sequence[float],
    g_influence,
    a: Mapping[int, int] | Sequence[int] | None = None,
    unit_comm_cost: float = 0.0,
    comm_rounds: int = 1,
    f_S: float | Callable[[], float] | None = None,
) -> float:
    """Sum over participants of price plus group gain minus leakage and coalition costs."""
    S = sorted(S)
    if a is None:
        a = {d.id: d.a for d in devices}
    if f_S is None:
        gain = group_gain(S, devices, a)
    else:
        gain = f_S() if callable(f_S) else float(f_S)
    c_S = coalition_cost(S, comm_rounds, unit_comm_cost)
    total = 0.0
    for j in S:
        if not a[j]:
            continue
        p = prices[j]
        total += (p + gain) - (p * opportunity_cost(j, S, a, g_influence) + c_S)
    return total


def feasible(
    S: Iterable[int],
    devices: Sequence[DeviceProfile],
    constraints: ConstraintSet,
    g_influence,
    a: Mapping[int, int] | Sequence[int] | None = None,
    unit_comm_cost: float = 0.0,
    comm_rounds: int = 1,
    prices: Mapping[int, float] | None = None,
    budget: float | None = None,
    brackets: Mapping[int, float] | None = None,
    visited: Mapping[int, float] | None = None,
) -> tuple[bool, list[str]]:
    """Check a coalition against the market constraints.

    Price-dependent checks (budget balance, participation, visited) run only when their inputs
    are supplied.  Violations are returned, never raised.
    """
    S = sorted(S)
    if a is None:
        a = {d.id: d.a for d in devices}
    bad: list[str] = []
    if prices is not None and budget is not None:
        if abs(sum(prices[j] for j in S) - budget) > 1e-9 * max(1.0, abs(budget)):
            bad.append("budget_balance")
    if brackets is not None:
        if any(a[j] and brackets[j] < 0 for j in S):
            bad.append("participation")
        if visited is not None and any(a[j] and brackets[j] < visited.get(j, -math.inf) for j in S):
            bad.append("visited")
    if dissimilarity(S, devices, a) > constraints.rho_max:
        bad.append("dissimilarity")
    if coalition_cost(S, comm_rounds, unit_comm_cost) > constraints.coalition_cost_bound:
        bad.append("coalition_cost")
    if any(opportunity_cost(j, S, a, g_influence) > constraints.phi_threshold(j) for j in S):
        bad.append("leakage")
    return (not bad, bad)


def move_device(blocks: Sequence[frozenset[int]], m: int, target: frozenset[int] | None) -> tuple[frozenset[int], ...]:
    """Partition after moving ``m`` into ``target`` (``None`` = fresh singleton)."""
    out = []
    for b in blocks:
        if m in b:
            rest = b - {m}
            if rest:
                out.append(rest)
        elif target is not None and b == target:
            out.append(b | {m})
        else:
            out.append(b)
    if target is None:
        out.append(frozenset([m]))
    return tuple(sorted(out, key=min))


@dataclass(frozen=True)
class _Summary:
    level: int
    matched: tuple[int, ...]
    matched_samples: int
    matched_phi: float
    min_id: int
    feasible: bool

    @property
    def key(self) -> tuple[int, int, float, int]:
        return (len(self.matched), self.matched_samples, self.matched_phi, -self.min_id)


class MarketGame:
    """The data-market coalition game over a fixed set of devices."""

    def __init__(self, devices: Sequence[DeviceProfile], g_influence, rules: MarketRules = MarketRules()):
        if [d.id for d in devices] != list(range(len(devices))):
            raise ValueError("device ids must be 0..M-1 in order")
        self.devices = list(devices)
        self.g = np.asarray(g_influence, dtype=float)
        if self.g.shape != (len(devices), len(devices)):
            raise ValueError("influence matrix shape does not match the device count")
        self._g_cols = self.g.T.tolist()  # _g_cols[j][i] == g[i, j]
        self._phi = [d.phi for d in devices]
        self._log_m = math.log1p(len(devices))
        self.rules = rules
        self.levels = sorted({d.level for d in devices})
        self.level_samples = {k: sum(d.n_samples for d in devices if d.level == k) for k in self.levels}
        self._summaries: dict[frozenset[int], _Summary] = {}
        self._values: dict[tuple[frozenset[int], float], tuple[float, dict[int, int]]] = {}

    @property
    def n_players(self) -> int:
        return len(self.devices)

    def summary(self, S: frozenset[int]) -> _Summary:
        s = self._summaries.get(S)
        if s is None:
            counts: dict[int, int] = {}
            for j in S:
                counts[self.devices[j].level] = counts.get(self.devices[j].level, 0) + 1
            level = min(counts, key=lambda k: (-counts[k], k))
            matched = tuple(sorted(j for j in S if self.devices[j].level == level))
            s_matched = set(matched)
            ok = self._structurally_feasible(sorted(S), matched, s_matched)
            phi_sum = 0.0
            for j in matched:
                phi_sum += self._phi[j]
            s = _Summary(level, matched, sum(self.devices[j].n_samples for j in matched), phi_sum, min(S), ok)
            self._summaries[S] = s
        return s

    def anchors(self, blocks: Sequence[frozenset[int]]) -> dict[int, frozenset[int]]:
        best: dict[int, frozenset[int]] = {}
        for b in blocks:
            s = self.summary(b)
            if s.feasible and (s.level not in best or s.key > self.summary(best[s.level]).key):
                best[s.level] = b
        return best

    def level_budget(self, level: int, anchored_samples: int) -> float:
        return self.rules.total_budget * self.level_samples[level] / anchored_samples

    def budgets(self, blocks: Sequence[frozenset[int]]) -> dict[frozenset[int], float]:
        anchors = self.anchors(blocks)
        n_l = sum(self.level_samples[k] for k in anchors)
        out = {b: 0.0 for b in blocks}
        for k, b in anchors.items():
            out[b] = self.level_budget(k, n_l)
        return out

    def member_price(self, m: int, budget: float, S: frozenset[int]) -> float:
        s = self.summary(S)
        if budget == 0.0 or m not in s.matched:
            return 0.0
        return budget * self.devices[m].n_samples / s.matched_samples

    def payments(self, blocks: Sequence[frozenset[int]]) -> dict[int, float]:
        out: dict[int, float] = {}
        for b, budget in self.budgets(blocks).items():
            for m in b:
                out[m] = self.member_price(m, budget, b)
        return out

    def preference(self, m: int, S: Iterable[int], blocks: Sequence[frozenset[int]]) -> float:
        """Contract payment ``m`` receives as a member of ``S`` (moving there if needed)."""
        S = frozenset(S)
        if m not in S:
            target = S if S in blocks else None
            if target is None and S:
                raise ValueError("S must be a coalition of the partition or empty")
            blocks = move_device(blocks, m, target)
        return self.payments(blocks)[m]

    def participation(self, S: frozenset[int], budget: float) -> dict[int, int]:
        return self._evaluate(S, budget)[1]

    def coalition_worth(self, S: frozenset[int], budget: float) -> float:
        return self._evaluate(S, budget)[0]

    def _evaluate(self, S: frozenset[int], budget: float) -> tuple[float, dict[int, int]]:
        key = (S, budget)
        hit = self._values.get(key)
        if hit is not None:
            return hit
        members = sorted(S)
        prices = {j: self.member_price(j, budget, S) for j in members}
        a, brackets = self.rational_participation(members, prices)
        value = 0.0
        for j in members:
            if a[j]:
                value += brackets[j]
        self._values[key] = (value, a)
        return value, a

    def _leak(self, j: int, members: Sequence[int], active) -> float:
        col = self._g_cols[j]
        total = 0.0
        for i in members:
            if i != j and i in active:
                total += col[i]
        return total

    def _structurally_feasible(self, members: list[int], matched: tuple[int, ...], s_matched: set[int]) -> bool:
        """Constraint check with every matched member participating (agrees with :func:`feasible`)."""
        c = self.rules.constraints
        pooled = sum(self.devices[j].n_samples for j in members)
        rho = sum(self.devices[j].rho * self.devices[j].n_samples for j in members if j in s_matched) / pooled
        if rho > c.rho_max:
            return False
        if coalition_cost(members, self.rules.comm_rounds, self.rules.unit_comm_cost) > c.coalition_cost_bound:
            return False
        return all(self._leak(j, members, s_matched) <= c.phi_threshold(j) for j in matched)

    def rational_participation(self, members: Sequence[int], prices) -> tuple[dict[int, int], dict[int, float]]:
        """Drop members with a negative bracket until none is left; returns flags and brackets.

        A bracket is ``(price + gain) - (price * leakage + coalition cost)``.
        """
        members = sorted(members)
        active = set(members)
        c_S = coalition_cost(members, self.rules.comm_rounds, self.rules.unit_comm_cost)
        while True:
            total = 0.0
            for j in members:
                if j in active:
                    total += self._phi[j]
            gain = math.log1p(total) / self._log_m
            brackets = {}
            for j in members:
                if j in active:
                    p = prices[j]
                    brackets[j] = (p + gain) - (p * self._leak(j, members, active) + c_S)
            drop = [j for j, v in brackets.items() if v < 0]
            if not drop:
                return {j: int(j in active) for j in members}, brackets
            active.difference_update(drop)

    def social_value(self, blocks: Sequence[frozenset[int]]) -> float:
        budgets = self.budgets(blocks)
        return float(sum(self.coalition_worth(b, budgets[b]) for b in sorted(blocks, key=min)))

    def to_partition(self, blocks: Sequence[frozenset[int]]) -> Partition:
        budgets = self.budgets(blocks)
        return Partition(
            tuple(Coalition(b, self.summary(b).level, budgets[b]) for b in sorted(blocks, key=min)),
            self.rules.total_budget,
        )

    def new_state(self, blocks: Sequence[frozenset[int]]) -> "MarketState":
        return MarketState(self, blocks)

    def with_reported_level(self, m: int, level: int) -> "MarketGame":
        """Same market, except device ``m`` claims type level ``level``."""
        d = self.devices[m]
        lied = dataclasses.replace(d, dtype=dataclasses.replace(d.dtype, level=int(level)))
        devices = self.devices[:m] + [lied] + self.devices[m + 1:]
        return MarketGame(devices, self.g, self.rules)

    def misreport_payment(self, m: int, level: int, blocks: Sequence[frozenset[int]]) -> float:
        """What ``m`` is actually owed in ``blocks`` after claiming ``level``.

        Contracts only pay a device inside a coalition of its true level, so a
        payment earned under a false level is voided.
        """
        lied = self.with_reported_level(m, level)
        own = next(b for b in blocks if m in b)
        if lied.summary(frozenset(own)).level != self.devices[m].level:
            return 0.0
        return lied.payments(blocks)[m]


class MarketState:
    """Mutable partition with O(1) preference look-ups for the switch rule."""

    NEW = -1

    def __init__(self, game: MarketGame, blocks: Sequence[frozenset[int]]):
        self.game = game
        self.coal: dict[int, frozenset[int]] = {}
        self.member_of = [0] * game.n_players
        self._next = 0
        self.level_counts: dict[int, dict[int, int]] = {}
        self.by_level: dict[int, list[tuple[tuple[int, int, int], int]]] = {k: [] for k in game.levels}
        for b in blocks:
            self._add(frozenset(b))
        for k in self.by_level:
            self.by_level[k].sort(reverse=True)
        self._value: float | None = None

    def _add(self, b: frozenset[int]) -> int:
        idx = self._next
        self._next += 1
        self.coal[idx] = b
        counts: dict[int, int] = {}
        for m in b:
            self.member_of[m] = idx
            lvl = self.game.devices[m].level
            counts[lvl] = counts.get(lvl, 0) + 1
        self.level_counts[idx] = counts
        s = self.game.summary(b)
        if s.feasible:
            self.by_level.setdefault(s.level, []).append((s.key, idx))
        return idx

    def _remove(self, idx: int) -> None:
        b = self.coal.pop(idx)
        del self.level_counts[idx]
        s = self.game.summary(b)
        if s.feasible:
            self.by_level[s.level] = [e for e in self.by_level[s.level] if e[1] != idx]

    def blocks(self) -> tuple[frozenset[int], ...]:
        return tuple(sorted(self.coal.values(), key=min))

    def coalition_id(self, m: int) -> int:
        return self.member_of[m]

    def targets(self, m: int) -> list[int]:
        src = self.member_of[m]
        out = [i for i in self.coal if i != src]
        if len(self.coal[src]) > 1:
            out.append(self.NEW)
        return out

    def _anchored_samples(self) -> int:
        return sum(self.game.level_samples[k] for k, lst in self.by_level.items() if lst)

    def preference_now(self, m: int) -> float:
        g = self.game
        k = g.devices[m].level
        lst = self.by_level.get(k)
        idx = self.member_of[m]
        if not lst or lst[0][1] != idx:
            return 0.0
        budget = g.level_budget(k, self._anchored_samples())
        return g.member_price(m, budget, self.coal[idx])

    def preference_if(self, m: int, t: int) -> float:
        g = self.game
        src = self.member_of[m]
        if t == src:
            return self.preference_now(m)
        k = g.devices[m].level
        if t != self.NEW and self._cannot_win(k, src, t):
            return 0.0
        new_t = (self.coal[t] if t != self.NEW else frozenset()) | {m}
        s_t = g.summary(new_t)
        if s_t.level != k or not s_t.feasible:
            return 0.0
        rest = self.coal[src] - {m}
        s_rest = g.summary(rest) if rest else None
        rivals = [key for key, i in self.by_level.get(k, []) if i != src and i != t][:1]
        if s_rest is not None and s_rest.feasible and s_rest.level == k:
            rivals.append(s_rest.key)
        if any(r > s_t.key for r in rivals):
            return 0.0
        # levels whose anchored status can change: src, t, rest, new_t
        touched = {g.summary(self.coal[src]).level, k}
        if t != self.NEW:
            touched.add(g.summary(self.coal[t]).level)
        if s_rest is not None:
            touched.add(s_rest.level)
        n_l = 0
        for lvl in g.levels:
            lst = self.by_level.get(lvl, [])
            if lvl not in touched:
                n_l += g.level_samples[lvl] if lst else 0
                continue
            count = sum(1 for _, i in lst if i != src and i != t)
            count += int(s_rest is not None and s_rest.feasible and s_rest.level == lvl)
            count += int(s_t.level == lvl)
            n_l += g.level_samples[lvl] if count else 0
        return g.member_price(m, g.level_budget(k, n_l), new_t)

    def _cannot_win(self, k: int, src: int, t: int) -> bool:
        """Cheap sufficient test that joining ``t`` cannot make a paid level-``k`` anchor."""
        counts = self.level_counts[t]
        c = counts.get(k, 0) + 1
        if any(n > c or (n == c and lvl < k) for lvl, n in counts.items() if lvl != k):
            return True
        for key, i in self.by_level.get(k, []):
            if i != src and i != t:
                return key[0] > c
        return False

    def value(self) -> float:
        if self._value is None:
            self._value = self.game.social_value(self.blocks())
        return self._value

    def value_if(self, m: int, t: int) -> float:
        target = None if t == self.NEW else self.coal[t]
        return self.game.social_value(move_device(self.blocks(), m, target))

    def move(self, m: int, t: int) -> int:
        src = self.member_of[m]
        rest = self.coal[src] - {m}
        touched = {self.game.summary(self.coal[src]).level}
        self._remove(src)
        if rest:
            self._add(rest)
            touched.add(self.game.summary(rest).level)
        if t == self.NEW:
            new_idx = self._add(frozenset([m]))
        else:
            touched.add(self.game.summary(self.coal[t]).level)
            merged = self.coal[t] | {m}
            self._remove(t)
            new_idx = self._add(merged)
        touched.add(self.game.summary(self.coal[new_idx]).level)
        for k in touched:
            self.by_level.setdefault(k, []).sort(reverse=True)
        self._value = None
        return new_idx


class TableGame:
    """Game given by an explicit characteristic function; unlisted coalitions are worth 0.

    A member's payment is an equal share of its coalition's worth.
    """

    def __init__(self, n_players: int, table: Mapping[frozenset[int], float], labels: Sequence[int] | None = None):
        self._n = n_players
        self.table = {frozenset(k): float(v) for k, v in table.items()}
        self.labels = list(labels) if labels is not None else list(range(n_players))

    @property
    def n_players(self) -> int:
        return self._n

    def worth(self, S: frozenset[int]) -> float:
        return self.table.get(frozenset(S), 0.0)

    def payments(self, blocks: Sequence[frozenset[int]]) -> dict[int, float]:
        return {m: self.worth(b) / len(b) for b in blocks for m in b}

    def preference(self, m: int, S: Iterable[int], blocks: Sequence[frozenset[int]]) -> float:
        S = frozenset(S) | {m}
        return self.worth(S) / len(S)

    def social_value(self, blocks: Sequence[frozenset[int]]) -> float:
        return float(sum(self.worth(b) for b in sorted(blocks, key=min)))

    def to_partition(self, blocks: Sequence[frozenset[int]]) -> Partition:
        return Partition(tuple(Coalition(b, 0, self.worth(b)) for b in sorted(blocks, key=min)),
                         self.social_value(blocks))

    def new_state(self, blocks: Sequence[frozenset[int]]) -> "_ScratchState":
        return _ScratchState(self, blocks)


class _ScratchState:
    """Recompute-everything state for small games."""

    NEW = -1

    def __init__(self, game, blocks):
        self.game = game
        self.coal = {}
        self.member_of = [0] * game.n_players
        self._next = 0
        for b in blocks:
            self._put(frozenset(b))

    def _put(self, b):
        idx = self._next
        self._next += 1
        self.coal[idx] = b
        for m in b:
            self.member_of[m] = idx
        return idx

    def blocks(self):
        return tuple(sorted(self.coal.values(), key=min))

    def coalition_id(self, m):
        return self.member_of[m]

    def targets(self, m):
        src = self.member_of[m]
        out = [i for i in self.coal if i != src]
        if len(self.coal[src]) > 1:
            out.append(self.NEW)
        return out

    def preference_now(self, m):
        return self.game.payments(self.blocks())[m]

    def preference_if(self, m, t):
        target = None if t == self.NEW else self.coal[t]
        return self.game.payments(move_device(self.blocks(), m, target))[m]

    def value(self):
        return self.game.social_value(self.blocks())

    def value_if(self, m, t):
        target = None if t == self.NEW else self.coal[t]
        return self.game.social_value(move_device(self.blocks(), m, target))

    def move(self, m, t):
        src = self.member_of[m]
        rest = self.coal.pop(src) - {m}
        if rest:
            self._put(rest)
        if t == self.NEW:
            return self._put(frozenset([m]))
        merged = self.coal.pop(t) | {m}
        return self._put(merged)


def walkthrough_game() -> TableGame:
    """Four devices; {1,2} is worth 1, {1,3} is worth 2, everything else 0 (0-based ids)."""
    return TableGame(4, {frozenset({0, 1}): 1.0, frozenset({0, 2}): 2.0}, labels=[1, 2, 3, 4])
