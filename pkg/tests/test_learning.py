import numpy as np
import pytest

from src.errors import DimensionError, InsufficientHistoryError
from src.learning.multiplayer import (
    BestInHindsightOracle,
    JointDecision,
    Quadratic,
    QuadraticMemoryLoss,
    eval_multiagent_regret,
    multiplayer_oco_round,
    multiplayer_ocom_round,
    play_ocom,
    split_blocks,
)
from src.learning.ogd import (
    AdaptiveStep,
    BallDomain,
    ConstantStep,
    InverseSqrtStep,
    LearnerState,
    ScriptedLearner,
)


def _random_convex(rng, dim: int) -> Quadratic:
    A = rng.standard_normal((dim, dim))
    return Quadratic(A @ A.T + 0.1 * np.eye(dim), rng.standard_normal(dim), 0.0)


def test_projection_keeps_interior_points_and_clips_outside():
    domain = BallDomain(2.0, (2,))
    inside = np.array([0.5, -1.0])
    assert np.array_equal(domain.project(inside), inside)
    projected = domain.project(np.array([30.0, 40.0]))
    assert np.linalg.norm(projected) == pytest.approx(2.0)
    assert np.allclose(projected, [1.2, 1.6])


def test_projection_is_non_expansive(rng):
    domain = BallDomain(1.0, (3,))
    for _ in range(200):
        a, b = 3 * rng.standard_normal(3), 3 * rng.standard_normal(3)
        assert np.linalg.norm(domain.project(a) - domain.project(b)) <= np.linalg.norm(a - b) + 1e-12


def test_large_step_lands_on_the_boundary():
    learner = LearnerState.start(BallDomain(1.0, (2,)), ConstantStep(10.0))
    learner = learner.step(np.array([1.0, 0.0]))
    assert np.linalg.norm(learner.decision) == pytest.approx(1.0)
    assert learner.t == 1


def test_step_rejects_wrong_shapes_and_nan():
    learner = LearnerState.start(BallDomain(1.0, (2,)), ConstantStep(0.1))
    with pytest.raises(DimensionError):
        learner.step(np.ones(3))
    with pytest.raises(ValueError):
        learner.step(np.array([np.nan, 0.0]))


def test_step_scale_divides_the_rate_but_not_the_ledger():
    domain = BallDomain(10.0, (2,))
    g = np.array([1.0, -2.0])
    plain = LearnerState.start(domain, ConstantStep(0.4)).step(g)
    scaled = LearnerState.start(domain, ConstantStep(0.4)).step(g, scale=4.0)
    assert np.allclose(scaled.decision, plain.decision / 4.0)
    assert scaled.ledger.played == plain.ledger.played
    assert np.array_equal(scaled.ledger.grad_sum, plain.ledger.grad_sum)
    with pytest.raises(ValueError):
        plain.step(g, scale=0.0)


def test_constant_gradient_regret_vanishes():
    radius, T = 2.0, 10_000
    g = np.array([0.3, -0.4])
    learner = LearnerState.start(BallDomain(radius, (2,)), AdaptiveStep(radius))
    for _ in range(T):
        learner = learner.step(g)
    average = learner.ledger.best_regret(learner.domain) / T
    assert average <= 3.0 * radius * np.linalg.norm(g) / np.sqrt(T)


def test_joint_gradient_splits_by_player(rng):
    loss = _random_convex(rng, 5)
    decision = JointDecision((rng.standard_normal(2), rng.standard_normal(3)))
    per_agent = loss.agent_gradients(decision)
    assert np.allclose(np.concatenate(per_agent), loss.gradient(decision.concat()), atol=1e-10)


def test_restriction_fixes_the_other_players(rng):
    loss = _random_convex(rng, 4)
    decision = JointDecision((rng.standard_normal(2), rng.standard_normal(2)))
    z = rng.standard_normal(2)
    local = loss.restrict(1, decision)
    assert local(z) == pytest.approx(loss(np.concatenate([decision.blocks[0], z])))


def test_split_blocks_checks_width():
    with pytest.raises(DimensionError):
        split_blocks(np.zeros(4), [(2,), (3,)])


def test_multiagent_regret_is_below_the_sum_of_ledger_regrets(rng):
    loss = _random_convex(rng, 4)
    domains = [BallDomain(1.0, (2,)), BallDomain(1.0, (2,))]
    learners = [LearnerState.start(d, InverseSqrtStep(0.5)) for d in domains]
    decisions = []
    T = 400
    for _ in range(T):
        decision, learners = multiplayer_oco_round(learners, loss.agent_gradients)
        decisions.append(decision)
    measured = eval_multiagent_regret([loss] * T, decisions, BestInHindsightOracle(domains))
    blocks = split_blocks(measured.comparator, [d.shape for d in domains])
    ledger_total = sum(l.ledger.regret(b) for l, b in zip(learners, blocks))
    assert measured.value * T <= ledger_total + 1e-9 * T


def test_identical_schedules_give_identical_histories(rng):
    loss = _random_convex(rng, 2)
    domains = [BallDomain(1.0, (1,)), BallDomain(1.0, (1,))]

    def run():
        learners = [LearnerState.start(d, InverseSqrtStep(1.0)) for d in domains]
        out = []
        for _ in range(50):
            decision, learners = multiplayer_oco_round(learners, loss.agent_gradients)
            out.append(decision.concat())
        return np.array(out)

    assert np.array_equal(run(), run())


def test_oracle_finds_boundary_minimizer():
    # (x - 3)^2 over |x| <= 1
    loss = Quadratic(np.array([[1.0]]), np.array([-6.0]), 9.0)
    result = BestInHindsightOracle([BallDomain(1.0, (1,))]).minimize(loss)
    assert result.minimizer[0] == pytest.approx(1.0, abs=1e-6)
    assert result.value == pytest.approx(4.0, abs=1e-5)
    assert result.converged


def test_collapsed_memory_loss_equals_repeated_window(rng):
    window_loss = _random_convex(rng, 6)
    loss = QuadraticMemoryLoss(window_loss, h=2)
    x = JointDecision((rng.standard_normal(1), rng.standard_normal(1)))
    assert loss.collapse()(x.concat()) == pytest.approx(loss([x, x, x]))


def test_memory_round_needs_a_full_window(rng):
    loss = QuadraticMemoryLoss(_random_convex(rng, 4), h=1)
    learners = [LearnerState.start(BallDomain(1.0, (1,)), ConstantStep(0.1)) for _ in range(2)]
    with pytest.raises(InsufficientHistoryError):
        multiplayer_ocom_round(learners, 1, [JointDecision.of(learners)], loss.window_gradients)


def test_memory_round_charges_the_window(rng):
    loss = QuadraticMemoryLoss(_random_convex(rng, 4), h=1)
    learners = [LearnerState.start(BallDomain(1.0, (1,)), ConstantStep(0.1), np.array([0.5])) for _ in range(2)]
    older = JointDecision((np.array([0.2]), np.array([-0.3])))
    window = [older, JointDecision.of(learners)]
    grads = loss.window_gradients(window)
    _, updated = multiplayer_ocom_round(learners, 1, window, loss.window_gradients)
    for i, learner in enumerate(updated):
        expected = sum(float(grads[i][r] @ window[r].blocks[i]) for r in range(2))
        assert learner.ledger.played == pytest.approx(expected)
        assert np.allclose(learner.ledger.grad_sum, grads[i].sum(axis=0))


def test_play_ocom_records_every_round(rng):
    losses = [QuadraticMemoryLoss(_random_convex(rng, 6), h=2) for _ in range(25)]
    learners = [LearnerState.start(BallDomain(1.0, (1,)), InverseSqrtStep(0.3)) for _ in range(2)]
    history = play_ocom(learners, losses)
    assert len(history.decisions) == 25
    assert all(l.t == 25 for l in history.learners)
    assert np.all(np.isfinite(history.played))


def test_scripted_learner_cycles_its_plays():
    learner = ScriptedLearner(((1.0,), (-1.0,)))
    plays = []
    for _ in range(4):
        plays.append(float(learner.decision[0]))
        learner = learner.step(np.array([0.0]))
    assert plays == [1.0, -1.0, 1.0, -1.0]
    assert learner.ledger.rounds == 4


@pytest.mark.parametrize("seed", range(20))
def test_memory_regret_is_below_the_sum_of_ledger_regrets(seed):
    rng = np.random.default_rng(seed)
    k, h = 2 + seed % 2, 1 + seed % 3
    dims = [1 + int(rng.integers(2)) for _ in range(k)]
    domains = [BallDomain(1.0, (d,)) for d in dims]
    T = 60
    losses = [QuadraticMemoryLoss(_random_convex(rng, (h + 1) * sum(dims)), h) for _ in range(T)]
    history = play_ocom([LearnerState.start(d, InverseSqrtStep(0.3)) for d in domains], losses)
    measured = eval_multiagent_regret(losses, history.decisions, BestInHindsightOracle(domains))
    assert measured.played == pytest.approx(history.played.sum())
    blocks = split_blocks(measured.comparator, [d.shape for d in domains])
    ledger_total = sum(l.ledger.regret(b) for l, b in zip(history.learners, blocks))
    assert measured.value * T <= ledger_total + 1e-9 * T
