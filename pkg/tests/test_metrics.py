import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import gregory4_end_weights
from saltcryst.fd1d import Grid1D, Snapshot
from saltcryst.mesh import build_interval, build_prism, build_strip
from saltcryst.metrics import (
    GREGORY4_END,
    TotalsSeries,
    average_crystal,
    average_porosity,
    gregory_integrate,
    gregory_weights,
    integrate,
    l2_error,
    relative_errors,
    time_average,
    totals_series,
)
from saltcryst.model import PhysicalParameters, State

P = PhysicalParameters()


def richardson_slopes(f, exact, order, ms):
    errs = []
    for m in ms:
        x = np.linspace(0, 1, m)
        errs.append(abs(gregory_integrate(f(x), x[1] - x[0], order) - exact))
    h = 1.0 / (np.array(ms) - 1)
    return np.diff(np.log(errs)) / np.diff(np.log(h))


def test_frozen_weights_solve_the_moment_conditions():
    assert tuple(GREGORY4_END) == gregory4_end_weights() == (Fraction(3, 8), Fraction(7, 6), Fraction(23, 24))


@given(st.integers(2, 40), st.floats(0.01, 10))
def test_weights_sum(m, dx):
    for order in (2, 4):
        assert gregory_weights(m, dx, order).sum() == pytest.approx((m - 1) * dx, rel=1e-13)


def test_constants_exact():
    for order in (2, 4):
        for m in (2, 7, 11, 30):
            assert gregory_integrate(np.ones(m), 1.0 / (m - 1), order) == pytest.approx(1.0, rel=1e-15)


@given(st.integers(7, 60), st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_order4_exact_on_cubics(m, c):
    x = np.linspace(0, 1, m)
    f = c[0] + c[1] * x + c[2] * x**2 + c[3] * x**3
    exact = c[0] + c[1] / 2 + c[2] / 3 + c[3] / 4
    assert gregory_integrate(f, x[1] - x[0], 4) == pytest.approx(exact, rel=1e-12, abs=1e-12)


@given(st.integers(2, 60), st.floats(-3, 3), st.floats(-3, 3))
def test_order2_exact_on_affine(m, a, b):
    x = np.linspace(0, 1, m)
    assert gregory_integrate(a + b * x, x[1] - x[0], 2) == pytest.approx(a + b / 2, rel=1e-12, abs=1e-12)


def test_x_cubed_on_nine_points():
    x = np.linspace(0, 1, 9)
    assert gregory_integrate(x**3, 0.125, 4) == pytest.approx(0.25, rel=1e-12)


def test_richardson_slopes():
    s2 = richardson_slopes(lambda x: x**2, 1 / 3, 2, [9, 17, 33, 65])
    assert np.all(np.abs(s2 - 2) < 0.2)
    s4 = richardson_slopes(np.exp, np.e - 1, 4, [9, 17, 33, 65])
    assert np.all(np.abs(s4 - 4) < 0.2)


def test_order4_falls_back_below_seven_samples(caplog):
    with caplog.at_level("INFO", logger="saltcryst.metrics"):
        w = gregory_weights(5, 1.0, 4)
    np.testing.assert_array_equal(w, [0.5, 1, 1, 1, 0.5])
    assert "order 2" in caplog.text
    with pytest.raises(ValueError):
        gregory_weights(1, 1.0)
    with pytest.raises(ValueError):
        gregory_weights(9, 1.0, 3)


def state_from(n=None, cs=None, N=11):
    n = np.full(N, P.n0) if n is None else np.asarray(n, float)
    cs = np.zeros(N) if cs is None else np.asarray(cs, float)
    return State(np.zeros(len(n)), np.zeros(len(n)), cs, n)


def test_averages_1d():
    g = Grid1D(2.0, 10)
    assert average_porosity(state_from(), g) == pytest.approx(P.n0, rel=1e-15)
    lin = P.n0 - 0.05 * g.x / 2.0
    assert average_porosity(state_from(lin), g) == pytest.approx(P.n0 - 0.025, rel=1e-14)
    kappa = 0.01
    s = state_from(np.full(11, P.n0 - P.gamma * kappa), np.full(11, kappa))
    assert average_porosity(s, g) == pytest.approx(P.n0 - P.gamma * kappa, rel=1e-14)
    assert average_crystal(s, g) == pytest.approx(kappa, rel=1e-14)
    assert average_crystal(state_from(), g) == 0.0
    assert average_crystal(state_from(cs=0.3 * g.x), g) == pytest.approx(0.3, rel=1e-14)


def test_averages_multi_d():
    for m in (build_strip(0.2, 0.6, 0.1, 0.2, "crossed"), build_prism(0.2, 0.3, 0.1)):
        N = m.num_nodes
        assert average_porosity(state_from(N=N), m) == pytest.approx(P.n0, rel=1e-14)
        z = m.height
        assert average_crystal(state_from(cs=z, N=N), m) == pytest.approx(m.H / 2, rel=1e-13)


def test_l2_error():
    g = Grid1D(2.0, 12)
    v = np.sin(g.x)
    assert l2_error(v, v, g) == 0.0
    assert l2_error(v + 0.3, v, g) == pytest.approx(0.3 * np.sqrt(2.0), rel=1e-14)
    w = np.cos(g.x)
    assert l2_error(-2.5 * (v + w), -2.5 * v, g) == pytest.approx(2.5 * l2_error(v + w, v, g), rel=1e-14)
    fine = Grid1D(2.0, 48)
    assert l2_error(np.sin(g.x), np.sin(fine.x), g, fine) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        l2_error(v, np.sin(Grid1D(2.0, 17).x), g, Grid1D(2.0, 17))


def test_l2_error_mesh_norm():
    coarse = build_strip(0.2, 0.4, 0.1, 0.2)
    fine = build_strip(0.2, 0.4, 0.05, 0.1)
    f = lambda m: m.nodes[:, 0] + m.height  # noqa: E731
    assert l2_error(f(coarse), f(fine), coarse, fine) == pytest.approx(0, abs=1e-14)
    assert l2_error(f(coarse) + 0.5, f(coarse), coarse) == pytest.approx(0.5 * np.sqrt(0.08), rel=1e-13)


def test_metrics_invariant_under_node_permutation():
    m = build_interval(1.0, 7)  # not routed through Gregory after permutation: use the mesh norm
    strip = build_strip(0.2, 0.4, 0.1, 0.1)
    v = np.random.default_rng(0).normal(size=strip.num_nodes)
    perm = np.random.default_rng(1).permutation(strip.num_nodes)
    from saltcryst.mesh import Mesh

    inv = np.argsort(perm)
    pm = Mesh(
        dim=2, nodes=strip.nodes[perm], elements=inv[strip.elements], facets=inv[strip.facets],
        facet_tags=strip.facet_tags, facet_elements=strip.facet_elements,
        element_measures=strip.element_measures, facet_measures=strip.facet_measures, H=strip.H, L=strip.L,
    )
    assert integrate(v[perm], pm) == pytest.approx(integrate(v, strip), rel=1e-13)
    assert l2_error(v[perm], 0 * v, pm) == pytest.approx(l2_error(v, 0 * v, strip), rel=1e-13)
    assert integrate(np.ones(8), m) == pytest.approx(1.0)


def test_relative_errors():
    t = np.linspace(0, 10, 11)
    run = TotalsSeries(t, 1 + t, 2 + t)
    e_th, e_s, M = relative_errors(run, run)
    assert np.all(e_th == 0) and np.all(e_s == 0) and M == 0
    eps = 0.03
    ref = TotalsSeries(t, run.total_theta * (1 + eps), run.total_cs * (1 + eps))
    e_th, _, M = relative_errors(ref, run)
    np.testing.assert_allclose(e_th, eps / (1 + eps), rtol=1e-13)
    assert M == pytest.approx(eps / (1 + eps), rel=1e-13)
    one = TotalsSeries([5.0], [2.0], [1.0])
    e_th, _, M = relative_errors(one, TotalsSeries([5.0], [1.5], [1.0]))
    assert M == e_th[0] == 0.25
    with pytest.raises(ValueError):
        relative_errors(run, TotalsSeries(t + 1, run.total_theta, run.total_cs))


def test_zero_denominator_is_flagged():
    t = np.arange(4.0)
    run = TotalsSeries(t, [0.0, 1, 1, 1], [0.0, 1, 1, 1])
    ref = TotalsSeries(t, [0.0, 1, 1, 2], [0.0, 1, 1, 1])
    with pytest.warns(RuntimeWarning):
        e_th, _, M = relative_errors(run, ref)
    assert np.isnan(e_th[0]) and M == pytest.approx(time_average(t[1:], np.array([0, 0, 1.0])))


def test_totals_series():
    g = Grid1D(1.0, 4)
    snaps = [Snapshot(k, float(k), State(np.full(5, 0.1 * k), np.zeros(5), np.full(5, 0.01), np.full(5, 0.2))) for k in range(3)]
    ts = totals_series(snaps, g)
    np.testing.assert_allclose(ts.total_theta, [0, 0.1, 0.2])
    np.testing.assert_allclose(ts.total_cs, 0.01)
    with pytest.raises(ValueError):
        TotalsSeries([0, 1], [0], [0, 1])


def test_time_average_nonuniform_falls_back_to_trapezoid():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert time_average(np.array([0.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0])) == pytest.approx(1.0)
