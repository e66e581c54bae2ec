import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coalition_market.engine import (
    Coalition,
    ConstraintSet,
    DeviceProfile,
    MarketGame,
    MarketRules,
    Partition,
    coalition_value,
    dissimilarity,
    feasible,
    group_gain,
    move_device,
    proportional_price,
)
from coalition_market.instances import random_market
from coalition_market.learner import data_type


def dev(i, n=10, phi=0.5, K=2, rho=0.0, a=1):
    return DeviceProfile(i, n, data_type(1.0, phi, K), rho=rho, a=a)


def test_proportional_price():
    assert proportional_price(10.0, 4, [4]) == 10.0
    assert proportional_price(10.0, 3, [3, 2]) == 6.0
    assert proportional_price(10.0, 2, [3, 2]) == 4.0
    with pytest.raises(ValueError):
        proportional_price(1.0, 0, [0, 0])


@given(st.floats(0, 100), st.lists(st.integers(1, 1000), min_size=1, max_size=8))
def test_proportional_prices_balance(budget, counts):
    total = sum(proportional_price(budget, n, counts) for n in counts)
    assert total == pytest.approx(budget, rel=1e-12, abs=1e-12)


def test_coalition_value_examples():
    devices = [dev(0)]
    g = np.zeros((1, 1))
    assert coalition_value([0], devices, [5.0], g, a=[0]) == 0
    assert coalition_value([0], devices, [5.0], g, a=[1], f_S=0.0) == 5.0
    assert coalition_value([0], devices, [5.0], g, a=[1], f_S=lambda: 0.0) == 5.0


@given(st.floats(0.1, 50), st.floats(0.1, 10))
def test_coalition_value_linear_in_price_without_costs(p, scale):
    devices = [dev(i) for i in range(3)]
    g = np.zeros((3, 3))
    v1 = coalition_value(range(3), devices, [p] * 3, g, f_S=0.0)
    v2 = coalition_value(range(3), devices, [p * scale] * 3, g, f_S=0.0)
    assert v2 == pytest.approx(scale * v1, rel=1e-12)


def test_group_gain():
    devices = [dev(i, phi=0.3 + 0.1 * i) for i in range(4)]
    assert group_gain(range(4), devices, [0] * 4) == 0
    full = group_gain(range(4), devices, [1] * 4)
    assert 0 < full <= 1
    assert group_gain(range(3), devices, [1] * 4) < full
    f = lambda x: math.log1p(x)  # noqa: E731
    grid = np.linspace(0, 5, 26)
    assert all(f(x) + f(y) >= f(x + y) - 1e-15 for x in grid for y in grid)


def test_dissimilarity_examples():
    zero = [dev(0, rho=0.0), dev(1, rho=0.0)]
    assert dissimilarity([0, 1], zero, [1, 1]) == 0
    assert dissimilarity([0], [dev(0, rho=0.4)], [1]) == pytest.approx(0.4)
    two = [dev(0, n=1, rho=0.2), dev(1, n=1, rho=0.6)]
    assert dissimilarity([0, 1], two, [1, 1]) == pytest.approx(0.4)


def test_feasible_boundaries():
    devices = [dev(0, rho=0.3)]
    g = np.zeros((1, 1))
    ok, bad = feasible([0], devices, ConstraintSet(rho_max=1.0), g, prices={0: 1.0}, budget=1.0, brackets={0: 1.0})
    assert ok and bad == []
    ok, bad = feasible([0], devices, ConstraintSet(rho_max=0.3 - 1e-9), g)
    assert not ok and bad == ["dissimilarity"]
    pair = [dev(0), dev(1)]
    g2 = np.array([[0, 0.5], [0.5, 0]])
    ok, bad = feasible([0, 1], pair, ConstraintSet(phi_thresholds=(0.4, 1.0)), g2)
    assert bad == ["leakage"]
    ok, bad = feasible([0, 1], pair, ConstraintSet(coalition_cost_bound=0.01), g2, unit_comm_cost=0.1)
    assert bad == ["coalition_cost"]
    ok, bad = feasible([0, 1], pair, ConstraintSet(), g2, prices={0: 1, 1: 1}, budget=3.0,
                       brackets={0: -1.0, 1: 0.5}, visited={1: 0.9})
    assert bad == ["budget_balance", "participation", "visited"]


def test_domain_type_validation():
    with pytest.raises(ValueError):
        dev(0, rho=-1)
    with pytest.raises(ValueError):
        dev(0, a=2)
    with pytest.raises(ValueError):
        Coalition(frozenset({0}), 1, budget=-1)
    with pytest.raises(ValueError):
        Partition((Coalition(frozenset({0, 1}), 1), Coalition(frozenset({1}), 1)), 1.0)
    with pytest.raises(ValueError):
        ConstraintSet(rho_max=-0.1)
    with pytest.raises(ValueError):
        MarketGame([dev(1)], np.zeros((1, 1)))


def test_move_device():
    blocks = (frozenset({0, 1}), frozenset({2}))
    assert move_device(blocks, 1, frozenset({2})) == (frozenset({0}), frozenset({1, 2}))
    assert move_device(blocks, 1, None) == (frozenset({0}), frozenset({1}), frozenset({2}))
    assert move_device(blocks, 2, frozenset({0, 1})) == (frozenset({0, 1, 2}),)


def test_preference_examples():
    game = MarketGame([dev(0, phi=0.2), dev(1, phi=0.9)], np.zeros((2, 2)), MarketRules(total_budget=7.0))
    together = (frozenset({0, 1}),)
    # tie on majority goes to the smaller level, so device 1 is unmatched
    assert game.preference(1, {0, 1}, together) == 0.0
    solo = MarketGame([dev(0)], np.zeros((1, 1)), MarketRules(total_budget=7.0))
    assert solo.preference(0, {0}, (frozenset({0}),)) == 7.0


def test_infeasible_coalition_pays_nothing():
    rules = MarketRules(total_budget=1.0, constraints=ConstraintSet(rho_max=0.1))
    game = MarketGame([dev(0, rho=0.5)], np.zeros((1, 1)), rules)
    assert game.preference(0, {0}, (frozenset({0}),)) == 0.0


def test_linearity_within_coalition():
    n1, n2 = 7, 11
    merged = MarketGame([dev(0, n=n1 + n2), dev(1, n=5)], np.zeros((2, 2)), MarketRules(total_budget=3.0))
    split = MarketGame([dev(0, n=n1), dev(1, n=n2), dev(2, n=5)], np.zeros((3, 3)), MarketRules(total_budget=3.0))
    whole = merged.payments((frozenset({0, 1}),))[0]
    parts = split.payments((frozenset({0, 1, 2}),))
    assert whole == pytest.approx(parts[0] + parts[1], rel=1e-12)


def test_budget_balance_and_partition_record():
    game = random_market(7, 3)
    blocks = (frozenset({0, 1, 2}), frozenset({3, 4}), frozenset({5}), frozenset({6}))
    part = game.to_partition(blocks)
    assert part.allocated == pytest.approx(1.0, abs=1e-12)
    assert sum(game.payments(blocks).values()) == pytest.approx(1.0, abs=1e-12)


def test_misreport_never_pays_more():
    rng = random.Random(0)
    for trial in range(200):
        game = random_market(rng.randint(2, 7), trial)
        M = game.n_players
        labels = [rng.randrange(M) for _ in range(M)]
        blocks = tuple(frozenset(i for i in range(M) if labels[i] == b) for b in set(labels))
        m = rng.randrange(M)
        true = game.devices[m].level
        lie = rng.choice([k for k in (1, 2, 3) if k != true])
        assert game.misreport_payment(m, lie, blocks) <= game.payments(blocks)[m]
        assert game.misreport_payment(m, true, blocks) == game.payments(blocks)[m]


def _random_blocks(rng, M):
    labels = [rng.randrange(M) for _ in range(M)]
    return tuple(frozenset(i for i in range(M) if labels[i] == b) for b in sorted(set(labels)))


@settings(max_examples=60)
@given(st.integers(2, 9), st.integers(0, 10_000))
def test_incremental_preferences_match_scratch(M, seed):
    game = random_market(M, seed)
    rng = random.Random(seed)
    state = game.new_state(_random_blocks(rng, M))
    for _ in range(4):
        blocks = state.blocks()
        pay = game.payments(blocks)
        for m in range(M):
            assert state.preference_now(m) == pytest.approx(pay[m], abs=1e-12)
            for t in state.targets(m):
                target = None if t == state.NEW else state.coal[t]
                moved = move_device(blocks, m, target)
                assert state.preference_if(m, t) == pytest.approx(game.payments(moved)[m], abs=1e-12)
        m = rng.randrange(M)
        state.move(m, rng.choice(state.targets(m) or [state.NEW]))
        assert state.value() == pytest.approx(game.social_value(state.blocks()))


def test_participation_drops_members_with_negative_bracket():
    g = np.array([[0, 5.0], [5.0, 0]])
    game = MarketGame([dev(0, phi=0.1), dev(1, phi=0.1)], g, MarketRules(total_budget=1.0))
    a, brackets = game.rational_participation([0, 1], {0: 0.5, 1: 0.5})
    assert a == {0: 0, 1: 0}
    assert all(v < 0 for v in brackets.values())
    a, _ = game.rational_participation([0, 1], {0: 0.0, 1: 1.0})
    assert a[0] == 1
