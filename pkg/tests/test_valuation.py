import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from coalition_market.valuation import (
    ValuationParams,
    conditional_valuation,
    leakage_valuation,
    precision_zeta,
    scaled_valuation_curve,
    set_valuation,
    value_depression_series,
)

ids = st.frozensets(st.integers(0, 30), max_size=20)


def test_set_valuation_examples():
    assert set_valuation(set()) == 0
    assert set_valuation({1, 2, 3, 4, 5}) == 5
    assert set_valuation({1, 2}) <= set_valuation({1, 2, 3})


@given(ids, ids)
def test_set_valuation_monotone_and_additive(a, b):
    assert set_valuation(a & b) <= set_valuation(a) + set_valuation(b)
    assert set_valuation(a) <= set_valuation(a | b)


def test_conditional_valuation_examples():
    assert conditional_valuation(set(), {1, 2, 3}) == 3
    assert conditional_valuation({1, 2, 3, 4, 5}, {1, 2}) == 2
    assert conditional_valuation({1, 2}, {1, 2, 3, 4, 5}) == 5
    assert conditional_valuation({1, 2}, {1, 2, 3}, gamma=2) == 5
    with pytest.raises(ValueError):
        conditional_valuation({1}, {1}, gamma=0.5)


def test_precision_zeta_examples():
    assert precision_zeta(0, 0.2) == pytest.approx(0.8)
    assert precision_zeta(50, 0.2) == pytest.approx(1.0)
    assert precision_zeta(1, 0.2) == pytest.approx(1 - 0.2 * math.exp(-2))
    assert round(precision_zeta(1, 0.2), 4) == 0.9729


def test_precision_zeta_clamps_noise_factor():
    # n0 >= 1 would freeze the exponent; it is clamped just below 1
    assert precision_zeta(3, 0.2, n0=5.0) < 1 - 0.2 + 1e-4
    assert precision_zeta(3, 0.2, n0=-2.0) == precision_zeta(3, 0.2, n0=0.0)


@given(st.floats(0.01, 1.0), st.floats(0, 20), st.floats(-3, 0.99))
def test_precision_zeta_range_and_increasing(A0, x, n0):
    z = precision_zeta(x, A0, n0)
    assert 0 <= z <= 1
    assert precision_zeta(x + 1e-3, A0, n0) >= z


def test_scaled_valuation_curve_properties():
    xs = [k / 2 for k in range(11)]
    clean = scaled_valuation_curve(0.2, False, xs)
    assert all(b >= a for a, b in zip(clean, clean[1:]))
    assert clean == scaled_valuation_curve(0.2, False, xs, seed=99)
    noisy = np.mean([scaled_valuation_curve(0.2, True, xs, seed=s) for s in range(200)], axis=0)
    assert np.all(noisy <= np.array(clean) + 1e-12)
    assert scaled_valuation_curve(0.7, False, [0.1])[0] < scaled_valuation_curve(0.2, False, [0.1])[0]
    with pytest.raises(ValueError):
        scaled_valuation_curve(0.2, False, [2, 1])


def test_leakage_valuation_examples():
    assert leakage_valuation([1.0], 0.0, 0.1, 3.0) == pytest.approx(1.0)
    assert leakage_valuation([0.3, 0.7], 1.0, 0.1, 2.0) == pytest.approx(leakage_valuation([0.3, 0.7], 0.0, 0.1, 2.0) / 2)
    assert abs(leakage_valuation([0.5, 0.5], 0.0, 0.1, 1.0) - 2.0) < 1e-9


def test_leakage_valuation_domain_errors():
    with pytest.raises(ValueError, match="undefined"):
        leakage_valuation([1.0, 0.0], 0.0, 0.1, 10.0)
    with pytest.raises(ValueError):
        leakage_valuation([0.5, 0.6], 0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        leakage_valuation([1.0], 1.5, 0.1, 1.0)


@given(st.floats(0.05, 0.95), st.floats(0, 1), st.floats(0, 1), st.floats(0, 9.5))
def test_leakage_valuation_invariant_and_decreasing(s, g1, g2, p):
    shares = [s, 1 - s]
    v1, v2 = leakage_valuation(shares, g1, 0.1, p), leakage_valuation(shares, g2, 0.1, p)
    assert v1 * (1 + g1) == pytest.approx(v2 * (1 + g2), rel=1e-12)
    if g2 - g1 > 1e-9:
        assert v1 > v2


def test_value_depression_series():
    flat = value_depression_series([0.6, 0.4], [1, 2, 3], [0.0, 0.0])
    by_round = lambda rows, t: [r["value"] for r in rows if r["seller"] == 1 and r["round"] == t]  # noqa: E731
    assert by_round(flat, 0) == by_round(flat, 1)
    rows = value_depression_series([0.6, 0.4], list(range(1, 11)), [0.0, 0.1, 0.3, 0.5])
    curves = [by_round(rows, t) for t in range(4)]
    for c0, c1 in zip(curves, curves[1:]):
        assert all(b < a for a, b in zip(c0, c1))
    assert all(b > a for c in curves for a, b in zip(c, c[1:]))
    first = [r for r in rows if r["seller"] == 0]
    assert {r["g"] for r in first} == {0.0}


def test_valuation_params_validation():
    ValuationParams()
    for bad in ({"gamma": 0.5}, {"A0": 0.0}, {"b": 0.0}, {"g": 2.0}, {"noise_sigma": -1}):
        with pytest.raises(ValueError):
            ValuationParams(**bad)
