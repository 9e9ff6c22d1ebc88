import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoclab.core import (AnalyticMeta, Fitness, GridFn, Measure, ModelSpec, Mutation, build_grid,
                         canonical, discretize_model, pair, quad, rediscretize)
from hoclab.errors import ConfigurationError, ModelError
from hoclab.spectral import build_gamma, build_h

from oracles import MIDPOINT_X2_64, RHO_C


def test_uniform_grid():
    g = build_grid(0.0, 1.0, 4, 1.0)
    np.testing.assert_allclose(g.edges, [0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(g.weights, 0.25)


def test_geometric_grid_halves_toward_zero():
    g = build_grid(0.0, 1.0, 8, 2.0)
    np.testing.assert_allclose(g.weights[1:] / g.weights[:-1], 2.0)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(g.weights * 255, 2.0 ** np.arange(8))


def test_two_sided_grid_is_symmetric():
    g = build_grid(-1.0, 1.0, 16, 1.5)
    assert 0.0 in g.edges
    assert np.sum(g.midpoints < 0) == 8
    np.testing.assert_allclose(g.weights[:8], g.weights[8:][::-1])
    w = g.weights[8:]
    np.testing.assert_allclose(w[1:] / w[:-1], 1.5)


def test_default_grid_is_hybrid():
    g = build_grid(0.0, 1.0, 512)
    assert g.min_width <= 1e-12
    w = g.weights
    assert np.allclose(w[-50:], w[-1])  # uniform tail
    assert w[0] < w[1] < w[2]


def test_refined_grid_doubles_and_deepens():
    g = build_grid(0.0, 1.0, 256)
    r = g.refined()
    assert r.n_cells == 512
    assert r.min_width < g.min_width * 1e-6


@pytest.mark.parametrize("args", [(1.0, 2.0, 8, 1.2), (0.0, 0.0, 8, 1.2), (0.0, 1.0, 3, 1.2),
                                  (0.0, 1.0, 8, 0.5), (-1.0, math.inf, 8, 1.2)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


@settings(max_examples=60, deadline=None)
@given(lo=st.floats(-5, 0), length=st.floats(0.1, 10), n=st.integers(4, 300),
       grading=st.floats(1.0, 2.0))
def test_grid_invariants(lo, length, n, grading):
    hi = lo + length
    if not lo <= 0.0 <= hi:
        hi = 0.0 if lo < 0 else length
    g = build_grid(lo, hi, n, grading)
    assert np.all(np.diff(g.edges) > 0)
    assert g.edges[0] == lo and g.edges[-1] == hi
    assert np.all(g.weights > 0)
    assert abs(g.weights.sum() - (hi - lo)) <= 4 * n * np.finfo(float).eps * (hi - lo + 1)
    assert not np.any(g.midpoints == 0.0)
    if lo < 0 < hi:
        assert 0.0 in g.edges


def test_quad_examples():
    g = build_grid(0.0, 1.0, 64, 1.0)
    assert quad(np.ones(64), g) == pytest.approx(1.0, abs=1e-15)
    assert quad(g.midpoints, g) == pytest.approx(0.5, abs=1e-15)
    val = quad(g.midpoints ** 2, g)
    assert val == pytest.approx(MIDPOINT_X2_64, abs=1e-15)
    assert abs(val - 1 / 3) < 1e-4


def test_quad_length_mismatch():
    with pytest.raises(ConfigurationError):
        quad(np.ones(5), build_grid(0.0, 1.0, 4, 1.0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=16, max_size=16), st.floats(-3, 3))
def test_quad_linear_and_monotone(vals, c):
    g = build_grid(0.0, 1.0, 16)
    v = np.array(vals)
    assert quad(v, g) >= 0
    assert quad(c * v + 1.0, g) == pytest.approx(c * quad(v, g) + 1.0, rel=1e-12, abs=1e-12)


def test_quad_refinement_order_on_uniform_grids():
    errs = []
    for n in (32, 64, 128):
        g = build_grid(0.0, 1.0, n, 1.0)
        errs.append(abs(quad(np.exp(g.midpoints), g) - (math.e - 1)))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert all(1.9 < o < 2.1 for o in orders)


def test_discretize_uniform_and_power():
    g = build_grid(0.0, 1.0, 4, 1.0)
    m = discretize_model(ModelSpec(0, 1, Fitness("power", 1.0, 1.0), Mutation("uniform")), g)
    np.testing.assert_allclose(m.Q, 1.0)
    np.testing.assert_allclose(m.a, [0.125, 0.375, 0.625, 0.875])
    assert m.a0 == 0.0
    mq = discretize_model(ModelSpec(0, 1, Fitness(), Mutation("power", s=1.0)), g)
    raw = 2 * g.midpoints
    np.testing.assert_allclose(mq.Q, raw / quad(raw, g))
    assert quad(mq.Q, g) == pytest.approx(1.0, abs=1e-15)


def test_discretize_normalizes_q_exactly():
    g = build_grid(-1.0, 2.0, 100)
    m = discretize_model(ModelSpec(-1, 2, Fitness("power", 2.0, 0.7), Mutation("power", s=0.5)), g)
    assert abs(quad(m.Q, g) - 1.0) < 1e-15


@pytest.mark.parametrize("fitness", [Fitness("power", c=-1.0), Fitness("power", p=3.0),
                                     Fitness("affine", c0=0.5, c1=1.0)])
def test_discretize_rejects_bad_fitness(fitness):
    with pytest.raises(ModelError):
        discretize_model(ModelSpec(0, 1, fitness), build_grid(0.0, 1.0, 8))


def test_discretize_rejects_nonpositive_tables():
    g = build_grid(0.0, 1.0, 4, 1.0)
    with pytest.raises(ModelError):
        discretize_model(ModelSpec(0, 1, Fitness("table", values=(1, 0, 1, 1))), g)
    with pytest.raises(ModelError):
        discretize_model(ModelSpec(0, 1, Fitness(), Mutation("table", values=(1, -1, 1, 1))), g)


def test_discretize_rejects_domain_mismatch():
    with pytest.raises(ConfigurationError):
        discretize_model(ModelSpec(0, 2), build_grid(0.0, 1.0, 8))


def test_calibration_pins_rho():
    m = canonical("S", 256)
    assert quad(m.Q / m.a, m.grid) == pytest.approx(1.0, abs=1e-14)
    raw = rediscretize(m, m.grid, calibrate=False)
    assert abs(quad(raw.Q / raw.a, m.grid) - 1.0) > 1e-6


def test_calibration_requires_rho():
    with pytest.raises(ModelError):
        ModelSpec(calibrate_rho=True, meta=AnalyticMeta()).validate()


def test_pair_examples(spec_c, model_c):
    g = build_grid(0.0, 1.0, 8)
    f = GridFn(3.5, np.linspace(0, 1, 8))
    assert pair(Measure.dirac0(g), f, g) == 3.5
    assert pair(Measure.uniform(g), GridFn.constant(g), g) == pytest.approx(1.0, abs=1e-15)
    gamma = build_gamma(model_c, 0.0, "subcritical")
    _, h = build_h(model_c, 0.0, "subcritical")
    assert h.value0 == pytest.approx(1 / (1 - RHO_C), rel=1e-3)
    assert pair(gamma, h, model_c.grid) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 5), st.lists(st.floats(0, 5), min_size=12, max_size=12))
def test_pair_with_one_is_total_mass(atom, dens):
    g = build_grid(0.0, 1.0, 12)
    m = Measure(atom, np.array(dens))
    assert pair(m, GridFn.constant(g), g) == pytest.approx(m.total_mass(g), rel=1e-12, abs=1e-12)


def test_measure_roundtrip_and_helpers():
    g = build_grid(0.0, 1.0, 8)
    m = Measure(0.25, np.arange(8.0))
    assert np.array_equal(Measure.from_vector(m.to_vector()).dens, m.dens)
    assert Measure.cell_mass(g, 3, 2.0).total_mass(g) == pytest.approx(2.0)
    assert Measure.uniform(g, 0.5).total_mass(g) == pytest.approx(0.5)
    assert m.scaled(2.0).atom0 == 0.5
