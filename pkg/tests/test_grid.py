import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fracham import expr as ex
from fracham.grid import (
    GridFn,
    UniformGrid,
    classical_derivative,
    cumulative_integral,
    gridfn_from_csv,
    gridfn_to_csv,
    make_grid,
    sample,
)


def test_make_grid_nodes():
    g = make_grid(0, 1, 4)
    np.testing.assert_array_equal(g.nodes, [0, 0.25, 0.5, 0.75, 1])
    assert g.h == 0.25


def test_last_node_is_exactly_b():
    g = make_grid(0.1, 0.7, 7)
    assert g.nodes[0] == 0.1 and g.nodes[-1] == 0.7
    assert np.all(np.diff(g.nodes) > 0)


@pytest.mark.parametrize("a,b,n", [(0, 1, 3), (1, 1, 8), (2, 1, 8)])
def test_make_grid_rejects(a, b, n):
    with pytest.raises(ValueError):
        make_grid(a, b, n)


def test_sample_square():
    g = make_grid(0, 1, 4)
    f = sample(ex.parse("t^2", 1), g)
    np.testing.assert_array_equal(f.values, [0, 0.0625, 0.25, 0.5625, 1])
    assert f.all_valid


def test_sample_constant_and_sine():
    g = make_grid(0, np.pi, 8)
    np.testing.assert_array_equal(sample(ex.parse("1", 1), g).values, np.ones(9))
    assert abs(sample(ex.parse("sin(t)", 1), g).values[4] - 1) <= 1e-15


def test_sample_rejects_other_variables():
    with pytest.raises(ValueError):
        sample(ex.parse("q1 + t", 1), make_grid(0, 1, 4))


def test_sample_roundtrip_pointwise():
    g = make_grid(0, 2, 16)
    e = ex.parse("exp(t)*cos(3*t)", 1)
    f = sample(e, g)
    for k in range(g.n + 1):
        assert f(k) == ex.evaluate(e, {"t": g.nodes[k]})


def test_gridfn_invalid_entries_and_readonly():
    g = make_grid(0, 1, 4)
    valid = np.array([False, True, True, True, True])
    f = GridFn(g, [7.0, 1, 2, 3, 4], valid)
    assert np.isnan(f.values[0])
    with pytest.raises(ValueError):
        f.values[1] = 0.0
    with pytest.raises(ValueError):
        GridFn(g, [np.inf, 1, 2, 3, 4])
    with pytest.raises(ValueError):
        GridFn(g, [1, 2, 3])


def test_gridfn_arithmetic_intersects_masks():
    g = make_grid(0, 1, 4)
    f = GridFn(g, [0, 1, 2, 3, 4], [False, True, True, True, True])
    h = GridFn(g, [1, 1, 1, 1, 1], [True, True, True, True, False])
    s = f + h
    np.testing.assert_array_equal(s.valid, [False, True, True, True, False])
    np.testing.assert_array_equal(s.values[1:4], [2, 3, 4])


def test_classical_derivative_exact_on_quadratics():
    g = make_grid(0, 1, 8)
    d = classical_derivative(sample(ex.parse("t^2", 1), g))
    np.testing.assert_allclose(d.values, 2 * g.nodes, atol=1e-13)
    z = classical_derivative(sample(ex.parse("3", 1), g))
    np.testing.assert_array_equal(z.values, np.zeros(9))


def test_classical_derivative_sine():
    g = make_grid(0, 1, 256)
    d = classical_derivative(sample(ex.parse("sin(t)", 1), g))
    assert np.max(np.abs(d.values - np.cos(g.nodes))) <= 1e-4


def test_classical_derivative_rejects_invalid():
    g = make_grid(0, 1, 4)
    with pytest.raises(ValueError):
        classical_derivative(GridFn(g, [0, 1, 2, 3, 4], [False] + [True] * 4))


def test_cumulative_integral_examples():
    g = make_grid(0, 1, 10)
    np.testing.assert_allclose(cumulative_integral(sample(ex.parse("1", 1), g)).values, g.nodes, atol=1e-15)
    np.testing.assert_array_equal(cumulative_integral(GridFn(g, np.zeros(11))).values, np.zeros(11))
    np.testing.assert_allclose(
        cumulative_integral(sample(ex.parse("2*t", 1), g)).values, g.nodes**2, atol=1e-15
    )


def test_cumulative_integral_patches_one_endpoint(caplog):
    g = make_grid(0, 1, 8)
    vals = 2 * g.nodes
    f = GridFn(g, vals, np.r_[False, np.ones(8, bool)])
    with caplog.at_level(logging.INFO, logger="fracham.grid"):
        out = cumulative_integral(f)
    np.testing.assert_allclose(out.values, g.nodes**2, atol=1e-14)
    assert caplog.records, "imputation must be logged"


def test_cumulative_integral_rejects_two_invalid():
    g = make_grid(0, 1, 8)
    f = GridFn(g, np.ones(9), np.r_[False, False, np.ones(7, bool)])
    with pytest.raises(ValueError):
        cumulative_integral(f)


def test_derivative_of_integral_second_order():
    errs = []
    ns = (64, 128, 256)
    for n in ns:
        g = make_grid(0, 1, n)
        f = sample(ex.parse("sin(t)", 1), g)
        back = classical_derivative(cumulative_integral(f))
        errs.append(np.max(np.abs(back.values - f.values)[1:-1]))
    order = -np.polyfit(np.log(ns), np.log(errs), 1)[0]
    assert order >= 1.9


@settings(max_examples=50, deadline=None)
@given(
    a=st.floats(-3, 3),
    b=st.floats(-3, 3),
    seed=st.integers(0, 2**32 - 1),
)
def test_cumulative_integral_linear(a, b, seed):
    r = np.random.default_rng(seed)
    g = make_grid(0, 1, 16)
    f, h = GridFn(g, r.normal(size=17)), GridFn(g, r.normal(size=17))
    lhs = cumulative_integral(GridFn(g, a * f.values + b * h.values)).values
    rhs = a * cumulative_integral(f).values + b * cumulative_integral(h).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_gridfn_csv_roundtrip():
    g = make_grid(0, 1, 8)
    f = GridFn(g, np.sin(g.nodes) / 3, np.r_[False, np.ones(8, bool)])
    text = gridfn_to_csv(f)
    assert text.splitlines()[0] == "t,value,valid"
    back = gridfn_from_csv(text, g)
    assert back == f
    np.testing.assert_array_equal(back.values[1:], f.values[1:])
