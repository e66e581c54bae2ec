import dataclasses

import numpy as np
import pytest

from coalition_market.config import MarketConfig
from coalition_market.experiments import (
    aggregate,
    baseline_noncooperative,
    build_scenario,
    device_payoffs,
    monte_carlo,
    retained_value,
    run_scenario,
)
from coalition_market.recipes import RECIPES, loglog_slope, run_recipe, runtime_comparison, soft_utility

SMALL = MarketConfig(group_sizes=(4, 4))


def test_scenario_shapes_and_types():
    scn = build_scenario(SMALL, 0)
    assert scn.game.n_players == 8
    assert sorted(scn.trade_order.tolist()) == list(range(8))
    assert all(0 <= d.dtype.theta <= 1 and 1 <= d.level <= SMALL.K for d in scn.devices)
    g = scn.game.g
    assert np.allclose(g, g.T) and np.all(np.diag(g) == 0) and g.max() <= 1
    assert max(d.dtype.theta for d in scn.devices) == 1.0


def test_scenarios_are_deterministic():
    a, b = build_scenario(SMALL, 3), build_scenario(SMALL, 3)
    assert np.array_equal(a.game.g, b.game.g)
    assert [d.dtype for d in a.devices] == [d.dtype for d in b.devices]
    c1, b1 = run_scenario(SMALL, 3)
    c2, b2 = run_scenario(SMALL, 3)
    assert np.array_equal(c1.payoffs, c2.payoffs) and np.array_equal(b1.payoffs, b2.payoffs)


def test_retained_value():
    assert retained_value(0.0, SMALL) == pytest.approx(1.0)
    assert retained_value(0.5, SMALL) == pytest.approx(1 / 1.5)
    assert retained_value(0.6, SMALL) < retained_value(0.2, SMALL)


def test_leakage_free_baseline_equals_singleton_payoffs():
    scn = build_scenario(SMALL, 1)
    scn = dataclasses.replace(scn, game=type(scn.game)(scn.devices, np.zeros_like(scn.game.g), scn.game.rules))
    base = baseline_noncooperative(scn)
    n = np.array([d.n_samples for d in scn.devices], dtype=float)
    prices = n / n.sum()
    pay, _ = device_payoffs(scn, [frozenset([i]) for i in range(8)], prices)
    assert np.array_equal(base.payoffs, pay)
    assert np.all(base.payoffs >= SMALL.delta_m)


def test_more_leakage_lowers_baseline():
    scn = build_scenario(SMALL, 2)
    lo = dataclasses.replace(scn, game=type(scn.game)(scn.devices, scn.game.g * 0.5, scn.game.rules))
    assert baseline_noncooperative(lo).average_payoff > baseline_noncooperative(scn).average_payoff


def test_run_scenario_report():
    coop, base = run_scenario(SMALL, 0)
    assert sum(coop.coalition_sizes) == 8 and base.coalition_sizes == [1] * 8
    assert all(b >= a for a, b in zip(coop.value_trace, coop.value_trace[1:]))
    assert coop.runtime_ms["majp"] > 0
    assert set(np.unique(coop.participation)) <= {0, 1}


def test_monte_carlo_aggregation():
    coop, base, runs = monte_carlo(SMALL, 1)
    assert coop.n_runs == 1 and coop.stderr_payoff == 0.0
    assert coop.mean_payoff == runs[0][0].average_payoff
    with pytest.raises(ValueError):
        monte_carlo(SMALL, 0)
    serial = monte_carlo(SMALL, 3, base_seed=5)[0]
    threaded = monte_carlo(SMALL, 3, base_seed=5, workers=3)[0]
    assert serial == threaded


def test_aggregate_is_order_insensitive():
    vals = list(np.random.default_rng(0).normal(size=50) * 1e3)
    a, b = aggregate(vals), aggregate(vals[::-1])
    assert a.mean_payoff == b.mean_payoff and a.stderr_payoff == b.stderr_payoff


def test_soft_utility_peaks_at_own_level():
    cfg = MarketConfig()
    assert soft_utility(3.0, 3, cfg) > soft_utility(2.5, 3, cfg) > soft_utility(2.0, 3, cfg)


@pytest.mark.parametrize("name", ["fig3", "fig8", "fig9"])
def test_quick_recipes_pass(name):
    res = run_recipe(name, MarketConfig(), 1, 0)
    assert res.rows and res.passed, res.checks


def test_recipe_registry():
    assert set(RECIPES) == {"fig3", "fig7", "fig8", "fig9", "fig10", "fig11"}
    with pytest.raises(KeyError):
        run_recipe("fig99", MarketConfig(), 1, 0)


def test_runtime_comparison_shape():
    rows = runtime_comparison([4, 14], reps=1)
    assert [r["M"] for r in rows] == [4, 14]
    assert rows[0]["optimal_ms"] > 0 and rows[1]["optimal_ms"] is None
    assert loglog_slope([1, 2, 4], [3, 12, 48]) == pytest.approx(2.0)
