import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import fd_step
from saltcryst.errors import BlowUpError, DivisionDegeneracyError, PoreCloggingError
from saltcryst.fd1d import (
    FDRun,
    Grid1D,
    Phase,
    cfl_hint,
    delta_interior,
    delta_j,
    discrete_velocity,
    initial_state,
    robin_top,
    run_phase_fd,
    step_drying,
    step_imbibition,
)
from saltcryst.model import PhysicalParameters, State, eval_B

P = PhysicalParameters()


def wet_state(N=5, seed=3):
    """A nontrivial state with saturations inside (a, 1) and salt everywhere."""
    g = np.random.default_rng(seed)
    cs = g.uniform(0.0, 0.01, N + 1)
    n = P.n0 - P.gamma * cs
    theta = n * g.uniform(0.3, 0.95, N + 1)
    ci = g.uniform(0.01, 0.12, N + 1)
    return State(theta, ci, cs, n)


def test_grid():
    g = Grid1D.from_spacing(5.85, 0.15)
    assert g.Nx == 39 and g.dx == pytest.approx(0.15, rel=1e-15)
    assert g.x[-1] == pytest.approx(5.85, rel=1e-15)
    with pytest.raises(ValueError):
        Grid1D(1.0, 1)
    with pytest.raises(ValueError):
        Grid1D.from_spacing(1.0, 0.3)


def test_delta_examples():
    x = np.arange(6, dtype=float)
    assert delta_j(np.full(6, 2.7), 3 * x + 1, 2, 1.0) == 0.0
    dx = 0.37
    xs = dx * np.arange(6)
    assert delta_j(np.ones(6), xs**2, 3, dx) == pytest.approx(2.0, rel=1e-13)
    assert delta_j(x, x, 1, 1.0) == 1.0
    with pytest.raises(IndexError):
        delta_j(x, x, 0, 1.0)
    with pytest.raises(IndexError):
        delta_j(x, x, 5, 1.0)


@given(st.lists(st.floats(-10, 10), min_size=4, max_size=12), st.floats(0.01, 3))
def test_delta_interior_matches_pointwise(vals, dx):
    w = np.array(vals)
    r = np.abs(w) + 0.5
    vec = delta_interior(r, w, dx)
    assert np.array_equal(vec, [delta_j(r, w, j, dx) for j in range(1, len(w) - 1)])


def test_velocity_examples():
    g = Grid1D(1.0, 4)
    uniform = State(np.full(5, 0.2), np.zeros(5), np.zeros(5), np.full(5, P.n0))
    assert np.all(discrete_velocity(uniform, g, P) == 0)
    dry = State(np.full(5, 0.01) * np.arange(1, 6), np.zeros(5), np.zeros(5), np.full(5, P.n0))
    assert np.all(discrete_velocity(dry, g, P) == 0)
    theta = np.full(5, P.a * P.n0)
    theta[3] = P.n0
    s = State(theta, np.zeros(5), np.zeros(5), np.full(5, P.n0))
    V = discrete_velocity(s, g, P)
    assert V[0] == 0.0
    assert V[2] == pytest.approx(2 / 3 * P.c * (1 - P.a) / (2 * g.dx), rel=1e-14)
    assert discrete_velocity(s, g, P, bottom="one-sided")[0] == 0.0  # B(0)=B(1)=0 here
    bad = State(theta, np.zeros(5), np.zeros(5), np.array([P.n0, 0, P.n0, P.n0, P.n0]))
    with pytest.raises(PoreCloggingError):
        discrete_velocity(bad, g, P)


def test_top_velocity_is_backward_difference():
    g = Grid1D(1.0, 4)
    s = wet_state(4)
    V = discrete_velocity(s, g, P)
    B = eval_B(s.theta / s.n, P.law)
    assert V[-1] == pytest.approx((B[-1] - B[-2]) * (s.n[-1] / P.n0) ** 2 / g.dx, rel=1e-14)


def test_robin_fixed_point():
    assert robin_top(P.theta_bar, P.theta_bar, 0.15, P) == pytest.approx(P.theta_bar, rel=1e-15)


def test_robin_closure_second_order():
    # exact nodal values of theta = exp(x) leave an O(dx^2) residual in the
    # discrete Robin relation; the solved top value is then O(dx^3)
    H, Kw = 1.0, 1.0
    p = P.replace(Kw=Kw, theta_bar=2 * np.exp(H))  # theta'(H) = Kw (theta_bar - theta(H))

    def residual(dx):
        t0, t1, t2 = np.exp(H), np.exp(H - dx), np.exp(H - 2 * dx)
        return abs((3 * t0 - 4 * t1 + t2) / (2 * dx) - Kw * (p.theta_bar - t0))

    def top_error(dx):
        return abs(robin_top(np.exp(H - dx), np.exp(H - 2 * dx), dx, p) - np.exp(H))

    dxs = 0.1 / 2 ** np.arange(4)
    for fn, order in ((residual, 2), (top_error, 3)):
        slopes = np.diff(np.log([fn(d) for d in dxs])) / np.log(0.5)
        assert np.all(np.abs(slopes - order) < 0.15), (fn.__name__, slopes)
    # quadratics are reproduced exactly
    x = np.array([0.8, 0.9, 1.0])
    th = 0.1 + 0.3 * (x - 0.7) ** 2
    q = P.replace(Kw=1.0, theta_bar=th[-1] + 0.6 * 0.3)
    assert robin_top(th[1], th[0], 0.1, q) == pytest.approx(th[-1], rel=1e-13)


@pytest.mark.parametrize("drying", [False, True])
@pytest.mark.parametrize("onesided", [False, True])
def test_one_step_matches_hand_oracle(drying, onesided):
    s = wet_state(5)
    g = Grid1D(0.75, 5)
    run = FDRun(g, 0.05, 1, Phase.DRYING if drying else Phase.IMBIBITION, P, state=s,
                bottom_velocity="one-sided" if onesided else "zero")
    got = (step_drying if drying else step_imbibition)(run)
    want = fd_step(list(s.theta), list(s.ci), list(s.cs), list(s.n), g.dx, 0.05, drying, P, onesided)
    for name, w in zip(("theta", "ci", "cs", "n"), want):
        np.testing.assert_allclose(getattr(got, name), w, rtol=1e-14, atol=0, err_msg=name)


def test_first_step_from_initial_data_at_node_one():
    g = Grid1D.from_spacing(5.85, 0.15)
    run = FDRun(g, 0.25, 1, Phase.IMBIBITION, P)
    got = step_imbibition(run)
    s = run.state
    want = fd_step(list(s.theta), list(s.ci), list(s.cs), list(s.n), g.dx, 0.25, False, P)
    for name, w in zip(("theta", "ci", "cs", "n"), want):
        assert getattr(got, name)[1] == pytest.approx(w[1], rel=1e-14, abs=1e-300)


def test_compiled_kernel_is_bitwise_equal_to_numpy():
    for phase in Phase:
        s = wet_state(20, seed=11)
        runs = [FDRun(Grid1D(3.0, 20), 0.25, 200, phase, P, state=s.copy()) for _ in range(2)]
        a = run_phase_fd(runs[0], [50, 200], compiled=True)
        b = run_phase_fd(runs[1], [50, 200], compiled=False)
        for x, y in zip(a, b):
            assert x.step == y.step
            for f in ("theta", "ci", "cs", "n"):
                assert np.array_equal(getattr(x.state, f), getattr(y.state, f)), (phase, f)


def test_saturated_saltfree_column_is_inert():
    g = Grid1D(1.0, 6)
    s = State(np.full(7, P.n0), np.zeros(7), np.zeros(7), np.full(7, P.n0))
    out = step_imbibition(FDRun(g, 0.1, 1, Phase.IMBIBITION, P, state=s))
    assert np.all(out.cs == 0) and np.all(out.n == P.n0)


def test_dry_column_stays_dry():
    g = Grid1D(1.0, 6)
    s = State(np.zeros(7), np.zeros(7), np.zeros(7), np.full(7, P.n0))
    s.theta[:] = 0.0
    with pytest.raises(DivisionDegeneracyError):
        step_drying(FDRun(g, 0.1, 1, Phase.DRYING, P, state=s))


def test_drying_with_no_moisture_below_threshold_keeps_theta():
    # theta/n < a everywhere: all transport coefficients vanish
    g = Grid1D(1.0, 6)
    th = np.full(7, 0.1 * P.n0)
    th[[0, -1]] = 0.0
    s = State(th, np.full(7, 0.05), np.zeros(7), np.full(7, P.n0))
    out = run_phase_fd(FDRun(g, 0.5, 40, Phase.DRYING, P, state=s), compiled=False)[-1].state
    np.testing.assert_array_equal(out.theta, th)


def test_pure_reaction_identity():
    p = P.replace(D=1e-300)
    g = Grid1D(1.0, 6)
    th = np.full(7, 0.1 * P.n0)  # below threshold: B = 0, V = 0
    s = State(th, np.linspace(0.05, 0.5, 7), np.zeros(7), np.full(7, P.n0))
    out = step_drying(FDRun(g, 2.0, 1, Phase.DRYING, p, state=s))
    from saltcryst.model import crystallization_rate

    R = crystallization_rate(s.ci, s.theta, s.n, p)
    np.testing.assert_allclose(out.theta[1:-1] * out.ci[1:-1], s.theta[1:-1] * s.ci[1:-1] - 2.0 * R[1:-1], rtol=1e-13)


def test_drying_boundaries():
    s = wet_state(8)
    out = step_drying(FDRun(Grid1D(1.2, 8), 0.01, 1, Phase.DRYING, P, state=s))
    assert out.theta[0] == 0 and out.theta[-1] == 0
    assert out.ci[0] == pytest.approx((4 * out.ci[1] - out.ci[2]) / 3, rel=1e-15)
    assert out.ci[-1] == pytest.approx((4 * out.ci[-2] - out.ci[-3]) / 3, rel=1e-15)


def test_imbibition_boundaries():
    s = wet_state(8)
    out = step_imbibition(FDRun(Grid1D(1.2, 8), 0.01, 1, Phase.IMBIBITION, P, state=s))
    assert out.theta[0] == P.n0 and out.ci[0] == P.ci_bar


def test_blowup_reports_step_and_hint():
    g = Grid1D.from_spacing(5.85, 0.15)
    run = FDRun(g, 200.0, 50, Phase.IMBIBITION, P)
    with pytest.raises((BlowUpError, DivisionDegeneracyError)) as info:
        run_phase_fd(run)
    assert "step" in str(info.value)
    assert cfl_hint(g, P) == pytest.approx(0.15**2 * P.n0 / (2 * P.c))


def test_run_phase_snapshots_and_handoff():
    g = Grid1D.from_spacing(1.5, 0.15)
    run = FDRun(g, 0.25, 0, Phase.IMBIBITION, P)
    snaps = run_phase_fd(run, [0])
    assert [s.step for s in snaps] == [0]
    run = FDRun(g, 0.25, 40, Phase.IMBIBITION, P)
    snaps = run_phase_fd(run, [0, 10, 40])
    assert [s.step for s in snaps] == [0, 10, 40]
    assert snaps[1].time == 2.5
    handoff = snaps[-1].state
    dry = FDRun(g, 0.25, 0, Phase.DRYING, P, state=handoff.copy())
    first = run_phase_fd(dry, [0])[0].state
    for f in ("theta", "ci", "cs", "n"):
        assert np.array_equal(getattr(first, f), getattr(handoff, f))
    with pytest.raises(ValueError):
        run_phase_fd(FDRun(g, 0.25, 5, Phase.IMBIBITION, P), [6])


def test_run_validation():
    g = Grid1D(1.0, 4)
    with pytest.raises(ValueError):
        FDRun(g, 0.1, 1, Phase.DRYING, P)
    with pytest.raises(ValueError):
        FDRun(g, -0.1, 1, Phase.IMBIBITION, P)
    with pytest.raises(ValueError):
        FDRun(g, 0.1, 1, Phase.IMBIBITION, P, bottom_velocity="sideways")
    with pytest.raises(ValueError):
        FDRun(g, 0.1, 1, Phase.IMBIBITION, P, state=wet_state(7))


def _independent_run(N, dt, steps):
    g = Grid1D(N * 0.15, N)
    s = initial_state(g, P)
    th, ci, cs, n = (list(getattr(s, f)) for f in ("theta", "ci", "cs", "n"))
    for _ in range(steps):
        th, ci, cs, n = fd_step(th, ci, cs, n, g.dx, dt, False, P)
    return g, np.array(th)


def test_early_imbibition_profile_is_monotone():
    g, th_oracle = _independent_run(39, 0.25, 400)
    out = run_phase_fd(FDRun(g, 0.25, 400, Phase.IMBIBITION, P))[-1].state
    np.testing.assert_allclose(out.theta, th_oracle, rtol=1e-12)
    assert np.all(np.diff(out.theta) <= 1e-15)


def test_invariants_along_a_two_phase_run():
    g = Grid1D.from_spacing(1.5, 0.15)
    imb = FDRun(g, 0.25, 4000, Phase.IMBIBITION, P)
    seen = []
    run_phase_fd(imb, observer=lambda k, s: seen.append(s))
    dry = FDRun(g, 0.25, 400, Phase.DRYING, P, state=imb.state.copy())
    run_phase_fd(dry, observer=lambda k, s: seen.append(s))
    prev = None
    for s in seen:
        assert np.array_equal(s.n, P.n0 - P.gamma * s.cs)
        if prev is not None and np.all(prev.ci >= 0) and np.all(prev.theta >= 0):
            assert np.all(s.cs >= prev.cs)
        prev = s


def test_deterministic():
    g = Grid1D.from_spacing(1.5, 0.15)
    a = run_phase_fd(FDRun(g, 0.25, 500, Phase.IMBIBITION, P))[-1].state
    b = run_phase_fd(FDRun(g, 0.25, 500, Phase.IMBIBITION, P))[-1].state
    assert a.as_array().tobytes() == b.as_array().tobytes()
