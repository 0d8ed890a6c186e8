import numpy as np
import pytest

from src.dynamics.costs import QuadCost
from src.dynamics.linear_system import LinearSystem, natures_x, natures_y, simulate
from src.errors import DimensionError, InsufficientHistoryError
from src.oracles.markov import build_markov, default_horizon, estimate_natures_y, recover_disturbance
from src.oracles.peo import (
    PeoContext,
    counterfactual_signal,
    _finite_difference_grad,
    counterfactual_rollout,
    joint_peo_eval,
    local_peo_eval,
    local_peo_grad,
)
from src.policies.linear_policies import disturbance_window

M_LEN = 2


def _played_run(sys, rng, T=14, m=M_LEN):
    """Agents play a different random DAC matrix every step on true disturbances."""
    w = rng.standard_normal((T, sys.d_x))
    thetas = [rng.standard_normal((T, d, m * sys.d_x)) for d in sys.input_dims]
    controls = np.zeros((T, sys.d_u))
    for t in range(T):
        v = disturbance_window(w, t, m).ravel()
        for i in range(sys.k):
            controls[t, sys.agent_slice(i)] = thetas[i][t] @ v
    states = simulate(sys, controls, w)
    return w, thetas, controls, states


def _context(sys, cost, w, controls, t, h, agent=None):
    return PeoContext(
        markov=build_markov(sys, h),
        cost=cost,
        t=t,
        controls=controls[: t + 1],
        natural=natures_x(sys, w)[t],
        signals=tuple(w for _ in range(sys.k)),
        m=M_LEN,
        agent=agent,
    )


def test_markov_blocks_are_powers_of_a():
    sys = LinearSystem(np.array([[0.5, 1.0], [0.0, 0.2]]), (np.array([[1.0], [1.0]]),))
    G = build_markov(sys, 3)
    assert np.allclose(G.blocks[0], sys.B)
    assert np.allclose(G.blocks[1], sys.A @ sys.B)
    assert np.allclose(G.blocks[2], sys.A @ sys.A @ sys.B)
    assert G.stacked().shape == (2, 3)
    with pytest.raises(ValueError):
        build_markov(sys, 0)


def test_contribution_ignores_steps_before_zero(two_agent_system):
    G = build_markov(two_agent_system, 4)
    assert np.array_equal(G.contribution(np.ones((3, 2)), 0), np.zeros(2))
    assert np.allclose(G.contribution(np.ones((3, 2)), 1), two_agent_system.B @ np.ones(2))


def test_disturbance_recovery_is_exact(two_agent_system, rng):
    x, u, w = rng.standard_normal(2), rng.standard_normal(2), rng.standard_normal(2)
    x_next = two_agent_system.A @ x + two_agent_system.B @ u + w
    assert np.allclose(recover_disturbance(two_agent_system, x, u, x_next), w)


def test_natures_y_estimate_is_exact_with_full_horizon(rng):
    C = (np.array([[1.0, 0.0]]), np.array([[1.0, 1.0]]))
    sys = LinearSystem(np.array([[0.7, 0.1], [0.0, 0.4]]), (np.eye(2)[:, [0]], np.eye(2)[:, [1]]), C)
    T = 6
    w = rng.standard_normal((T, 2))
    e = rng.standard_normal((T + 1, 1))
    controls = rng.standard_normal((T, 2))
    y = simulate(sys, controls, w) @ C[1].T + e
    G = build_markov(sys, 10, 1)
    estimate = estimate_natures_y(sys, y, controls, G, agent=1, t=T)
    assert np.allclose(estimate, natures_y(sys, w, e, 1)[T])


def test_default_horizon():
    assert default_horizon(1000, 0.5) == 10
    assert default_horizon(1000, 0.0) == 1
    with pytest.raises(ValueError):
        default_horizon(10, 1.0)


def test_oracle_matches_realized_cost_when_truncation_is_exact(nilpotent_system, unit_cost, rng):
    h = 2
    w, thetas, controls, states = _played_run(nilpotent_system, rng)
    for t in range(M_LEN + h, 14):
        ctx = _context(nilpotent_system, unit_cost, w, controls, t, h, agent=0)
        window = list(thetas[0][t - h : t + 1])
        assert local_peo_eval(ctx, window) == pytest.approx(unit_cost(states[t], controls[t]), abs=1e-10)


def test_local_and_rollout_agree_for_any_window(nilpotent_system, unit_cost, rng):
    h = 2
    w, _, controls, states = _played_run(nilpotent_system, rng)
    t = 10
    ctx = _context(nilpotent_system, unit_cost, w, controls, t, h, agent=1)
    window = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
    exact = counterfactual_rollout(nilpotent_system, ctx, states, w, {1: window})
    assert local_peo_eval(ctx, window) == pytest.approx(exact, abs=1e-10)


def test_joint_oracle_reduces_to_local(two_agent_system, unit_cost, rng):
    h = 3
    w, thetas, controls, _ = _played_run(two_agent_system, rng)
    ctx = _context(two_agent_system, unit_cost, w, controls, 9, h, agent=0)
    window = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
    assert joint_peo_eval(ctx, [window, None]) == pytest.approx(local_peo_eval(ctx, window))


def test_analytic_gradient_matches_finite_differences(two_agent_system, rng):
    h = 3
    cost = QuadCost(np.diag([1.0, 2.0]), np.diag([0.5, 1.5]), N=np.array([[0.1, 0.0], [0.0, 0.2]]))
    w, thetas, controls, _ = _played_run(two_agent_system, rng)
    ctx = _context(two_agent_system, cost, w, controls, 11, h, agent=1)
    window = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
    analytic = local_peo_grad(ctx, window)
    numeric = _finite_difference_grad(ctx, window)
    for a, n in zip(analytic, numeric):
        assert np.allclose(a, n, atol=1e-5)


def test_gradient_falls_back_for_generic_costs(two_agent_system, rng):
    h = 2
    w, _, controls, _ = _played_run(two_agent_system, rng)

    def quartic(x, u):
        return float(np.sum(x**4) + np.sum(u**2))

    ctx = _context(two_agent_system, quartic, w, controls, 8, h, agent=0)
    window = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
    grads = local_peo_grad(ctx, window)
    assert [g.shape for g in grads] == [(1, 4)] * (h + 1)


def test_oracle_refuses_queries_before_burn_in(two_agent_system, unit_cost, rng):
    h = 3
    w, _, controls, _ = _played_run(two_agent_system, rng)
    ctx = _context(two_agent_system, unit_cost, w, controls, M_LEN + h - 1, h, agent=0)
    with pytest.raises(InsufficientHistoryError):
        local_peo_eval(ctx, [np.zeros((1, 4))] * (h + 1))


def test_window_length_must_be_h_plus_one(two_agent_system, unit_cost, rng):
    h = 3
    w, _, controls, _ = _played_run(two_agent_system, rng)
    ctx = _context(two_agent_system, unit_cost, w, controls, 9, h, agent=0)
    with pytest.raises(DimensionError):
        local_peo_eval(ctx, [np.zeros((1, 4))] * h)


def _random_stable_system(rng, d_x, k, rho=0.8):
    basis, _ = np.linalg.qr(rng.standard_normal((d_x, d_x)))
    A = basis @ np.diag(rho * rng.uniform(-1.0, 1.0, d_x)) @ basis.T
    blocks = tuple(rng.standard_normal((d_x, 1)) for _ in range(k))
    return LinearSystem(A, blocks)


def test_oracle_battery_on_random_stable_systems(rng):
    for _ in range(50):
        d_x, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        sys = _random_stable_system(rng, d_x, k)
        h = default_horizon(10**8, 0.9)
        T = M_LEN + h + 3
        w, _, controls, states = _played_run(sys, rng, T=T)
        agent = int(rng.integers(0, k))
        ctx = _context(sys, QuadCost.identity(d_x, k), w, controls, T - 1, h, agent=agent)
        window = [0.5 * rng.standard_normal((1, M_LEN * d_x)) for _ in range(h + 1)]
        exact = counterfactual_rollout(sys, ctx, states, w, {agent: window})
        assert abs(local_peo_eval(ctx, window) - exact) <= 1e-6


def test_analytic_gradient_matches_finite_differences_on_random_systems(rng):
    for _ in range(50):
        d_x, k = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        sys = _random_stable_system(rng, d_x, k)
        h = 4
        w, _, controls, _ = _played_run(sys, rng, T=M_LEN + h + 3)
        agent = int(rng.integers(0, k))
        cost = QuadCost(np.diag(rng.uniform(0.5, 2.0, d_x)), np.diag(rng.uniform(0.5, 2.0, k)))
        ctx = _context(sys, cost, w, controls, M_LEN + h + 2, h, agent=agent)
        window = [0.5 * rng.standard_normal((1, M_LEN * d_x)) for _ in range(h + 1)]
        for a, n in zip(local_peo_grad(ctx, window), _finite_difference_grad(ctx, window)):
            assert np.allclose(a, n, rtol=1e-5, atol=1e-7)


def test_local_oracle_is_convex_in_the_window(two_agent_system, rng):
    h = 3
    cost = QuadCost(np.diag([1.0, 2.0]), np.diag([0.5, 1.5]))
    w, _, controls, _ = _played_run(two_agent_system, rng)
    ctx = _context(two_agent_system, cost, w, controls, 11, h, agent=0)
    for _ in range(30):
        a = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
        b = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
        mid = [0.5 * (x + y) for x, y in zip(a, b)]
        assert local_peo_eval(ctx, mid) <= 0.5 * (local_peo_eval(ctx, a) + local_peo_eval(ctx, b)) + 1e-10


def test_truncation_error_decays_with_the_horizon(rng):
    sys = _random_stable_system(rng, 3, 2, rho=0.8)
    T = M_LEN + 40 + 1
    w, _, controls, states = _played_run(sys, rng, T=T)
    nat = natures_x(sys, w)
    window_rng = np.random.default_rng(99)
    for h in (5, 10, 20, 40):
        t = T - 1
        ctx = _context(sys, QuadCost.identity(3, 2), w, controls, t, h, agent=1)
        window = [0.5 * window_rng.standard_normal((1, M_LEN * 3)) for _ in range(h + 1)]
        exact = counterfactual_rollout(sys, ctx, states, w, {1: window})
        out, u = counterfactual_signal(ctx, {1: window})
        drift = states[t - h] - nat[t - h]
        delta = np.linalg.matrix_power(sys.A, h) @ drift
        assert exact == pytest.approx(QuadCost.identity(3, 2)(out + delta, u), rel=1e-9, abs=1e-12)
        assert np.linalg.norm(delta) <= 0.8**h * np.linalg.norm(drift) + 1e-12
        error = abs(local_peo_eval(ctx, window) - exact)
        size = np.linalg.norm(delta)
        assert error <= 2.0 * np.sqrt(exact) * size + size**2 + 1e-12


def test_local_oracle_ignores_how_the_other_controls_were_generated(two_agent_system, unit_cost, rng):
    h = 3
    w, thetas, controls, _ = _played_run(two_agent_system, rng)
    t = 11
    ctx = _context(two_agent_system, unit_cost, w, controls, t, h, agent=1)
    own = [rng.standard_normal((1, 4)) for _ in range(h + 1)]
    generating = list(thetas[0][t - h : t + 1])
    aliases = []
    for j, theta in enumerate(generating):
        v = disturbance_window(w, t - h + j, M_LEN).ravel()
        n = rng.standard_normal(4)
        n -= (n @ v) / (v @ v) * v
        aliases.append(theta + np.outer(rng.standard_normal(1), n))
    local = local_peo_eval(ctx, own)
    assert joint_peo_eval(ctx, [generating, own]) == pytest.approx(local, abs=1e-10)
    assert joint_peo_eval(ctx, [aliases, own]) == pytest.approx(local, abs=1e-10)
