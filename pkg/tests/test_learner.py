import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coalition_market.learner import (
    ModelParams,
    Potential,
    data_type,
    estimate_types,
    global_loss,
    least_squares_optimum,
    local_loss,
    marginal_contribution,
    marginal_contribution_draws,
    potential,
    quantize,
    simulate_signals,
    train,
)
from coalition_market.oracle import exact_marginal_contribution
from coalition_market.synthetic import SellerDataset, ground_truth_weights, make_overlap_scenario


def _ds(device, X, y, start=0):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return SellerDataset(device, np.arange(start, start + len(y)), X, np.asarray(y, dtype=float))


def test_local_loss_examples():
    w = ModelParams([1.0])
    assert local_loss(w, _ds(0, [[1.0], [2.0]], [1.0, 2.0])) == 0.0
    assert local_loss(w, _ds(0, [[1.0]], [4.0])) == 9.0
    single = _ds(0, [[1.0], [2.0]], [0.0, 5.0])
    doubled = _ds(0, [[1.0], [2.0], [1.0], [2.0]], [0.0, 5.0, 0.0, 5.0])
    assert local_loss(w, doubled) == pytest.approx(local_loss(w, single))


def test_local_loss_rejects_empty_and_dimension_mismatch():
    empty = SellerDataset(0, np.array([], dtype=np.int64), np.zeros((0, 1)), np.zeros(0))
    with pytest.raises(ValueError):
        local_loss(ModelParams([1.0]), empty)
    with pytest.raises(ValueError, match="features"):
        local_loss(ModelParams([1.0, 2.0]), _ds(0, [[1.0]], [1.0]))


def test_global_loss_examples():
    w = ModelParams(ground_truth_weights(2))
    ds = make_overlap_scenario([range(10)], n_features=2, label_noise=0.0)
    assert global_loss(w, ds) == pytest.approx(0.0, abs=1e-24)
    one = _ds(0, [[1.0], [2.0]], [0.0, 1.0])
    assert global_loss(ModelParams([1.0]), [one]) == local_loss(ModelParams([1.0]), one)
    # residuals sqrt(2) and 2 give local losses 2 and 4
    a = _ds(0, [[0.0]], [math.sqrt(2)])
    b = _ds(1, [[0.0]], [2.0], start=1)
    assert global_loss(ModelParams([0.0]), [a, b]) == pytest.approx(3.0)


def test_train_matches_normal_equations_and_is_seed_independent():
    ds = make_overlap_scenario([range(0, 60), range(60, 120)], seed=2, n_features=3)
    opt = least_squares_optimum(ds)
    fits = [train(ds, 500, 0.1, seed) for seed in (0, 1)]
    for w in fits:
        assert global_loss(w, ds) - global_loss(opt, ds) < 1e-3
    assert np.allclose(fits[0].w, fits[1].w, atol=1e-3)


def test_train_zero_steps_returns_initialisation():
    ds = make_overlap_scenario([range(5)])
    assert np.array_equal(train(ds, 0, 0.1, 7).w, np.random.default_rng(7).normal(0.0, 0.1, 1))


def test_train_loss_non_increasing():
    ds = make_overlap_scenario([range(40)], seed=1, n_features=2)
    losses = [global_loss(train(ds, k, 0.05, 0), ds) for k in range(0, 30, 3)]
    assert all(b <= a + 1e-15 for a, b in zip(losses, losses[1:]))


def test_train_divergence_reports_step():
    ds = make_overlap_scenario([range(40)], seed=1)
    with pytest.raises(FloatingPointError, match="step"):
        train(ds, 5000, 50.0, 0)


@pytest.fixture(scope="module")
def convex_task():
    ds = make_overlap_scenario([range(0, 30), range(30, 60)], seed=5, n_features=2)
    return ds, train(ds, 0, 0.05, 0)


def test_potential_examples(convex_task):
    ds, w0 = convex_task
    assert potential(None, w0, ds) == 1.0
    full = make_overlap_scenario([range(60)], seed=5, n_features=2)[0]
    assert potential(full, w0, ds) < 1.0


def test_potential_superset_contracts_more_on_average(convex_task):
    ds, w0 = convex_task
    pot = Potential(ds, w0)
    rng = np.random.default_rng(0)
    gaps = []
    for _ in range(100):
        sub = set(rng.choice(60, 5, replace=False).tolist())
        sup = sub | set(rng.choice(60, 15, replace=False).tolist())
        gaps.append(pot(sub) - pot(sup))
    assert np.mean(gaps) >= 0


def test_potential_stays_in_unit_interval(convex_task):
    ds, w0 = convex_task
    pot = Potential(ds, w0)
    rng = np.random.default_rng(1)
    for _ in range(50):
        ids = rng.choice(60, rng.integers(1, 60), replace=False)
        raw = pot.raw(ids)
        assert 0.0 <= pot(ids) <= 1.0
        assert raw - 1.0 < 0.05


def test_marginal_contribution_zero_when_z_always_present():
    ds = make_overlap_scenario([[7]])[0]
    # with one sample and B large, D contains z whenever i > 1
    pot = lambda s: 0.5 if 7 in s else 1.0  # noqa: E731
    draws = marginal_contribution_draws(7, ds, 1, 20, 0, pot)
    assert np.all(draws == -0.5)
    only_repeats = marginal_contribution_draws(7, ds, 3, 200, 0, pot)
    assert set(np.round(only_repeats, 12)) <= {-0.5, 0.0}


def test_marginal_contribution_singleton_matches_exact(convex_task):
    ds, w0 = convex_task
    one = ds[0].subset([3])
    pot = Potential(ds, w0)
    mc = marginal_contribution(3, one, 1, 5, 0, pot)
    assert abs(mc - exact_marginal_contribution(3, one.sample_ids, 1, pot)) < 1e-12


def test_marginal_contribution_matches_exact_within_three_sigma(convex_task):
    ds, w0 = convex_task
    dm = ds[0].subset([0, 1, 2, 3])
    pot = Potential(ds, w0)
    draws = marginal_contribution_draws(10, dm, 2, 10_000, 0, pot)
    exact = exact_marginal_contribution(10, dm.sample_ids, 2, pot)
    assert abs(draws.mean() - exact) <= 3 * draws.std(ddof=1) / math.sqrt(len(draws))


def test_marginal_contribution_independent_of_workers(convex_task):
    ds, w0 = convex_task
    pot = Potential(ds, w0)
    a = marginal_contribution_draws(4, ds[0], 5, 40, 11, pot, n_jobs=1)
    b = marginal_contribution_draws(4, ds[0], 5, 40, 11, pot, n_jobs=4)
    assert np.array_equal(a, b)


def test_data_type_examples():
    t = data_type(0.8, 0.0, 3)
    assert t.phi == 0.0 and t.level == 1
    assert data_type(1.0, 1.0, 4).level == 4
    t = data_type(0.6, 0.5, 5)
    assert t.phi == pytest.approx(0.3) and t.level == 2
    with pytest.raises(ValueError):
        data_type(0.5, 1.5, 3)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.integers(1, 10))
def test_data_type_monotone(theta, xi, bump, K):
    lo = data_type(theta, xi, K)
    hi_xi = data_type(theta, min(1.0, xi + bump), K)
    hi_theta = data_type(min(1.0, theta + bump), xi, K)
    assert hi_xi.phi >= lo.phi and hi_theta.phi >= lo.phi
    assert hi_xi.level >= lo.level and hi_theta.level >= lo.level
    assert 1 <= lo.level <= K


def test_quantize_bin_edges():
    assert [quantize(p, 4) for p in (0.0, 0.25, 0.2500001, 0.5, 1.0)] == [1, 1, 2, 2, 4]


def test_estimate_types_noiseless_exact():
    xi = [0.1, 0.55, 0.9]
    sig = simulate_signals(xi, 7, seed=0, noise=0.0)
    assert np.allclose(estimate_types(sig), xi, atol=1e-9)
    assert estimate_types([[], None]) == [None, None]


def test_estimate_types_error_shrinks_with_observations():
    xi = [0.3] * 200
    err = {}
    for n in (10, 1000):
        est = estimate_types(simulate_signals(xi, n, seed=n))
        err[n] = float(np.sqrt(np.mean((np.array(est) - 0.3) ** 2)))
    assert err[1000] < err[10] / 5
    single = estimate_types(simulate_signals([0.3], 1, seed=0))[0]
    assert math.isfinite(single)
