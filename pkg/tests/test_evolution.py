import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blowuplab.errors import BlowupOverflow, ConfigurationError, ConsistencyError, PreconditionError
from blowuplab.evolution import (BLOWUP, NO_BLOWUP, UNDETERMINED, EvolutionState, History, Nonlinearity,
                                 StepControls, continue_past_blowup, estimate_blowup_time, run, run_until_blowup,
                                 step)
from blowuplab.grid import RadialField, build_grid

ODE = StepControls(disable_diffusion=True)


def const_state(a, N=3, M=16):
    g = build_grid(N, 1.0, M)
    return EvolutionState.initial(RadialField(g, np.full(g.size, float(a))))


def parabola(N, a, M=200, ratio=1.0):
    g = build_grid(N, 1.0, M, ratio)
    return RadialField(g, a * (1.0 - g.nodes ** 2))


# reaction flows


def test_exponential_flow_is_exact():
    nl = Nonlinearity.exponential()
    u = np.array([-2.0, 0.0, 1.5])
    out = nl.flow(u, 0.1)
    np.testing.assert_allclose(out, -np.log(np.exp(-u) - 0.1), rtol=1e-15)


def test_exponential_flow_raises_past_blowup():
    with pytest.raises(FloatingPointError):
        Nonlinearity.exponential().flow(np.array([0.0]), 1.0)


def test_truncated_flow_switches_to_linear():
    n = math.e ** 2
    nl = Nonlinearity.truncated(n)
    # from u = 0 the exponential flow reaches 2 at t = 1 - e^-2
    tau = 1.0 - math.exp(-2.0)
    out = nl.flow(np.array([0.0, 0.0, 3.0]), np.array(0.5))
    assert out[0] == pytest.approx(-math.log(0.5), rel=1e-14)
    out = nl.flow(np.array([0.0, 3.0]), tau + 0.25)
    assert out[0] == pytest.approx(2.0 + n * 0.25, rel=1e-12)
    assert out[1] == pytest.approx(3.0 + n * (tau + 0.25), rel=1e-14)


@settings(max_examples=50, deadline=None)
@given(u=st.floats(-5, 8), dt=st.floats(1e-6, 2.0), lv=st.floats(1.0, 12.0))
def test_truncated_flow_is_a_semigroup(u, dt, lv):
    nl = Nonlinearity.truncated(math.exp(lv))
    x = np.array([u])
    one = nl.flow(x, dt)
    two = nl.flow(nl.flow(x, 0.5 * dt), 0.5 * dt)
    assert one[0] == pytest.approx(two[0], rel=1e-9, abs=1e-9)


def test_nonlinearity_validation():
    with pytest.raises(ConfigurationError):
        Nonlinearity.truncated(0.0)
    with pytest.raises(ConfigurationError):
        Nonlinearity("cubic")
    with pytest.raises(ConfigurationError):
        Nonlinearity("linear")


# ODE mode oracles


def test_ode_mode_reproduces_minus_log_one_minus_t():
    s = const_state(0.0)
    run(s, ODE, 0.5)
    assert s.t == 0.5
    np.testing.assert_allclose(s.values[:-1], math.log(2.0), atol=1e-6)


@pytest.mark.parametrize("a", [0.0, 1.0, -1.0])
def test_ode_mode_blowup_time(a):
    _, est = run_until_blowup(const_state(a), ODE)
    assert est.status == BLOWUP
    assert est.T == pytest.approx(math.exp(-a), abs=1e-4)


def test_truncated_ode_stays_finite():
    g = build_grid(3, 1.0, 16)
    s = EvolutionState.initial(RadialField(g, np.zeros(g.size)), Nonlinearity.truncated(10.0))
    run(s, ODE, 2.0)
    assert np.all(np.isfinite(s.values))
    # exponential phase until u = log 10 at t = 0.9, then slope 10
    assert s.values[0] == pytest.approx(math.log(10.0) + 10.0 * 1.1, rel=1e-9)


def test_overflow_carries_state_and_finite_estimate():
    s = const_state(0.0)
    with pytest.raises(BlowupOverflow) as info:
        step(s, 2.0, ODE)
    assert info.value.state is s
    assert s.t == 0.0
    _, est = run_until_blowup(const_state(0.0), StepControls(disable_diffusion=True, u_stop=800.0))
    assert est.finite
    assert est.T == pytest.approx(1.0, abs=1e-4)


# diffusion


def test_heat_flow_decays_monotonically():
    f = parabola(3, 1.0, 64)
    s = EvolutionState.initial(f, Nonlinearity("zero"))
    run(s, StepControls(disable_reaction=True, dt_max=1e-3), 0.5, output_times=np.linspace(0.05, 0.5, 10))
    maxes = [snap.maxu for snap in s.snapshots]
    assert all(b < a for a, b in zip(maxes, maxes[1:]))
    # first Dirichlet eigenvalue of the unit ball in R^3 is pi^2
    ratio = s.snapshots[-1].maxu / s.snapshots[-2].maxu
    assert math.log(ratio) / -0.05 == pytest.approx(math.pi ** 2, rel=0.02)


@pytest.mark.parametrize("theta", [0.5, 1.0])
def test_boundary_value_stays_zero(theta):
    s = EvolutionState.initial(parabola(2, 2.0, 40))
    run(s, StepControls(theta=theta), 0.05, output_times=[0.01, 0.02])
    assert all(snap.values[-1] == 0.0 for snap in s.snapshots)


def test_boundary_reset_is_flagged():
    g = build_grid(3, 1.0, 16)
    s = EvolutionState.initial(RadialField(g, np.ones(g.size)))
    assert "boundary_value_reset" in s.flags and s.values[-1] == 0.0
    s = EvolutionState.initial(RadialField(g, -(1 - g.nodes)))
    assert "negative_initial_data" in s.flags


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ConfigurationError):
        step(const_state(0.0), 0.0)


def test_history_must_increase():
    h = History()
    h.append(0.0, 1.0, 0.0)
    with pytest.raises(ConsistencyError):
        h.append(0.0, 1.0, 0.0)


def test_run_lands_on_output_times():
    s = EvolutionState.initial(parabola(3, 1.0, 32))
    times = [0.013, 0.0271, 0.05]
    run(s, StepControls(), 0.05, output_times=times)
    got = [snap.t for snap in s.snapshots]
    for t in times:
        assert t in got


def test_run_until_blowup_needs_exponential():
    g = build_grid(3, 1.0, 16)
    s = EvolutionState.initial(RadialField(g, np.zeros(g.size)), Nonlinearity.truncated(5.0))
    with pytest.raises(PreconditionError):
        run_until_blowup(s)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.0, 3.0), k=st.integers(1, 4), b=st.floats(0.0, 1.0))
def test_nonnegative_data_stay_nonnegative(a, k, b):
    g = build_grid(3, 1.0, 32, 10.0)
    u0 = RadialField(g, a * (1 - g.nodes ** 2) + b * np.cos(0.5 * math.pi * k * g.nodes) ** 2 * (1 - g.nodes))
    s = EvolutionState.initial(u0)
    run(s, StepControls(), 0.02, output_times=[0.005, 0.01])
    assert min(float(snap.values.min()) for snap in s.snapshots) >= 0.0


@settings(max_examples=15, deadline=None)
@given(a=st.floats(0.0, 2.0), d=st.floats(0.01, 1.0))
def test_comparison_of_ordered_data(a, d):
    g = build_grid(3, 1.0, 32, 10.0)
    lo = EvolutionState.initial(RadialField(g, a * (1 - g.nodes ** 2)))
    hi = EvolutionState.initial(RadialField(g, (a + d) * (1 - g.nodes ** 2)))
    c = StepControls(dt_max=1e-4)
    times = np.linspace(0.002, 0.02, 10)
    run(lo, c, 0.02, output_times=times)
    run(hi, c, 0.02, output_times=times)
    for t in times:
        ul = next(s.values for s in lo.snapshots if s.t == t)
        uh = next(s.values for s in hi.snapshots if s.t == t)
        assert np.all(uh >= ul - 1e-12)


# blow-up time estimate


def test_estimate_exact_on_synthetic_history():
    T = 0.3
    t = T - np.geomspace(1e-2, 1e-9, 200)
    est = estimate_blowup_time(t, -np.log(T - t))
    assert est.status == BLOWUP
    assert est.T == pytest.approx(T, abs=1e-12)


def test_estimate_with_perturbed_history():
    T = 0.3
    tau = np.geomspace(1e-2, 1e-9, 200)
    t = T - tau
    m = -np.log(tau) + 0.01 * np.sin(np.log(tau)) * tau / 1e-2
    est = estimate_blowup_time(t, m)
    assert abs(est.T - T) < 1e-6


def test_estimate_undetermined_cases():
    assert estimate_blowup_time(np.arange(5.0), np.arange(5.0)).status == UNDETERMINED
    t = np.linspace(0, 1, 50)
    assert estimate_blowup_time(t, -t).status == UNDETERMINED


@settings(max_examples=40, deadline=None)
@given(T=st.floats(1e-3, 10.0), shift=st.floats(-5, 5))
def test_estimate_invariant_under_time_shift(T, shift):
    tau = np.geomspace(T * 0.5, T * 1e-8, 120)
    e1 = estimate_blowup_time(T - tau, -np.log(tau))
    e2 = estimate_blowup_time(T + shift - tau, -np.log(tau))
    assert e2.T - e1.T == pytest.approx(shift, abs=1e-9 * max(1.0, T))


def test_zero_data_in_three_dimensions_do_not_blow_up():
    # u0 = 0 lies below the minimal steady state and converges to it
    g = build_grid(3, 1.0, 64)
    s = EvolutionState.initial(RadialField(g, np.zeros(g.size)))
    s, est = run_until_blowup(s, StepControls(horizon=5.0))
    assert est.status == NO_BLOWUP
    t, m, _ = s.history.arrays()
    # the split scheme's fixed point moves by O(dt) when the last step is shortened
    assert np.all(np.diff(m) >= -1e-4)
    tail = m[t >= 4.0]
    assert tail.max() - tail.min() < 1e-4
    assert 0.15 < m[-1] < 0.25


def test_blowup_time_converges_at_second_order():
    # sigma refined with h^2 so time and space errors shrink together
    Ts = []
    for M, sigma in [(32, 0.08), (64, 0.02), (128, 0.005)]:
        _, est = run_until_blowup(EvolutionState.initial(parabola(3, 4.0, M)), StepControls(sigma=sigma, u_stop=20))
        Ts.append(est.T)
    d = np.abs(np.diff(Ts))
    assert d[0] / d[1] >= 3.0


def test_time_resolution_guard():
    s = EvolutionState.initial(parabola(3, 6.0, 100, 1e3))
    s, est = run_until_blowup(s, StepControls(u_stop=1e9))
    assert "time_resolution_exhausted" in s.flags or "overflow" in s.flags
    assert est.finite


# continuation


def test_continuation_levels_are_ordered_and_match_below_blowup():
    f = parabola(3, 2.0, 64, 10.0)
    levels = [math.exp(k) for k in (4, 6, 8)]
    res = continue_past_blowup(f, levels, 0.05, output_times=[0.01, 0.05])
    assert res.max_order_violation <= 1e-8
    assert res.regular_at(0) and res.regular_at(1)
    ref = EvolutionState.initial(f)
    run(ref, StepControls(), 0.05, output_times=[0.01])
    np.testing.assert_allclose(res.limit[-1], ref.values, atol=1e-3)


def test_continuation_flags_singular_limit_and_event():
    f = parabola(3, 8.0, 100, 100.0)
    levels = [math.exp(k) for k in (6, 8, 10)]
    res = continue_past_blowup(f, levels, 0.05, output_times=[0.05])
    assert not res.regular_at(0)
    assert res.singular[0, 0]
    assert np.isinf(res.limit_maxu()[0])
    ev = res.blowup_events()
    assert len(ev) == 1 and ev[0][1] == math.inf


def test_continuation_validation():
    f = parabola(3, 1.0, 32)
    with pytest.raises(ConfigurationError):
        continue_past_blowup(f, [5.0], 0.1)
    with pytest.raises(ConfigurationError):
        continue_past_blowup(f, [5.0, 4.0], 0.1)
    with pytest.raises(ConfigurationError):
        continue_past_blowup(f, [4.0, 5.0], 0.0)


def test_stacked_flow_matches_single_level_flow():
    from blowuplab.evolution import _StackedTruncation
    levels = np.array([math.exp(2), math.exp(5), math.exp(9)])
    rng = np.random.default_rng(4)
    U = rng.uniform(-2, 10, size=(30, 3))
    for dt in (1e-6, 1e-3, 0.2, 0.9):
        stacked = _StackedTruncation(levels).flow(U, dt)
        for k, n in enumerate(levels):
            single = Nonlinearity.truncated(n).flow(U[:, k], dt)
            np.testing.assert_allclose(stacked[:, k], single, rtol=1e-13)
