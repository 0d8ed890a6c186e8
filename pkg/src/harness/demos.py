"""Two small games that show why the multi-agent protocol is set up the way it is.

``demo_oco_counterexample``: independent no-regret players can each have
negative regret while the team does badly. ``demo_shared_controls``: when
controls are not shared, a deterministic agent can be forced into constant
average regret.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, List, Tuple

import numpy as np
import pandas as pd

from ..learning.multiplayer import (
    BestInHindsightOracle,
    JointDecision,
    Quadratic,
    eval_multiagent_regret,
    multiplayer_oco_round,
)
from ..learning.ogd import BallDomain, InverseSqrtStep, LearnerState, ScriptedLearner

logger = logging.getLogger(__name__)

# (x1 - x2)^2 + 0.1 * ||(x1, x2)||^2
COORDINATION_GAME = Quadratic(np.array([[1.1, -1.0], [-1.0, 1.1]]), np.zeros(2))
SCRIPTED_PLAYS = ((1.0,), (-1.0,))
OGD_START = (1.0, 0.5)


def _player_best_losses(decisions: List[JointDecision], domain: BallDomain) -> Tuple[float, float]:
    """Each player's best fixed reply in hindsight against the other's recorded plays."""
    oracle = BestInHindsightOracle([domain])
    best = []
    for agent in range(2):
        total = Quadratic.zero(1)
        for decision in decisions:
            total = total + COORDINATION_GAME.restrict(agent, decision)
        best.append(oracle.minimize(total).value)
    return best[0], best[1]


def _play(learners, T: int) -> Tuple[List[JointDecision], list]:
    decisions = []
    for _ in range(T):
        decision, learners = multiplayer_oco_round(learners, COORDINATION_GAME.agent_gradients)
        decisions.append(decision)
    return decisions, learners


def demo_oco_counterexample(T: int) -> Tuple[pd.DataFrame, Dict[str, float]]:
    """Scripted alternating players against linearized OGD players on the same game."""
    if T < 2 or T % 2:
        raise ValueError(f"T must be an even number >= 2, got {T}.")
    domain = BallDomain(1.0, (1,))
    joint_oracle = BestInHindsightOracle([domain, domain])

    scripted, _ = _play([ScriptedLearner(SCRIPTED_PLAYS), ScriptedLearner(SCRIPTED_PLAYS)], T)
    ogd_start = [LearnerState.start(domain, InverseSqrtStep(1.0), np.array([x])) for x in OGD_START]
    ogd, _ = _play(ogd_start, T)

    losses = [COORDINATION_GAME] * T
    scripted_regret = eval_multiagent_regret(losses, scripted, joint_oracle)
    ogd_regret = eval_multiagent_regret(losses, ogd, joint_oracle)
    best_1, best_2 = _player_best_losses(scripted, domain)
    scripted_played = scripted_regret.played

    frame = pd.DataFrame(
        {
            "t": np.arange(T),
            "scripted_x1": [d.blocks[0][0] for d in scripted],
            "scripted_x2": [d.blocks[1][0] for d in scripted],
            "scripted_loss": [COORDINATION_GAME(d.concat()) for d in scripted],
            "ogd_x1": [d.blocks[0][0] for d in ogd],
            "ogd_x2": [d.blocks[1][0] for d in ogd],
            "ogd_loss": [COORDINATION_GAME(d.concat()) for d in ogd],
        }
    )
    summary = {
        "T": T,
        "scripted_joint_loss": scripted_played / T,
        "scripted_player1_best_loss": best_1 / T,
        "scripted_player2_best_loss": best_2 / T,
        "scripted_player1_regret": (scripted_played - best_1) / T,
        "scripted_player2_regret": (scripted_played - best_2) / T,
        "scripted_multiagent_regret": scripted_regret.value,
        "ogd_multiagent_regret": ogd_regret.value,
    }
    logger.info(
        "Scripted pair: joint loss %.4f, per-player regret %.4f; OGD multi-agent regret %.4g",
        summary["scripted_joint_loss"], summary["scripted_player1_regret"], summary["ogd_multiagent_regret"],
    )
    return frame, summary


class ConstantStrategy:
    def __init__(self, value: float) -> None:
        self.value = value

    def __call__(self, observed_costs: List[float], own_history: List[float]) -> float:
        return self.value


class OgdStrategy:
    """OGD on u in [0, 1] that assumes the unseen partner plays 0.

    The observed cost is constant on every trajectory, so only the agent's own
    plays drive the update.

    The search runs on z = u - 1/2 over a ball of radius 1/2, so the iterate
    stays inside the constant-policy class.
    """

    def __init__(self, scale: float = 0.5, start: float = 1.0) -> None:
        self.learner = LearnerState.start(BallDomain(0.5, (1,)), InverseSqrtStep(scale), np.array([start - 0.5]))

    def __call__(self, observed_costs: List[float], own_history: List[float]) -> float:
        if own_history:
            self.learner = self.learner.step(np.array([2.0 * own_history[-1]]))
        return float(self.learner.decision[0] + 0.5)


SHARED_STRATEGIES: Dict[str, Callable[[], Callable]] = {
    "constant_0": lambda: ConstantStrategy(0.0),
    "constant_1": lambda: ConstantStrategy(1.0),
    "constant_0.5": lambda: ConstantStrategy(0.5),
    "ogd": OgdStrategy,
}


def _replay(strategy: Callable, partner: float, T: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Agent 1 against open-loop partners u2 = partner and u3 chosen to pin the cost at 1."""
    u1, u3, costs = np.zeros(T), np.zeros(T), np.zeros(T)
    seen: List[float] = []
    own: List[float] = []
    for t in range(T):
        raw = float(strategy(seen, own))
        u = float(np.clip(raw, 0.0, 1.0))
        if u != raw:
            logger.warning("Strategy output %.6g at t=%d clamped to [0, 1]", raw, t)
        u1[t] = u
        u3[t] = np.sqrt(max(1.0 - (u - partner) ** 2, 0.0))
        costs[t] = (u - partner) ** 2 + u3[t] ** 2
        own.append(u)
        seen.append(costs[t])
    return u1, u3, costs


def _average_regret(costs: np.ndarray, partner: float, u3: np.ndarray) -> float:
    # best constant agent-1 action against the same open-loop partners
    comparator = float(np.clip(partner, 0.0, 1.0))
    return float(np.mean(costs - ((comparator - partner) ** 2 + u3**2)))


def demo_shared_controls(strategy: str, T: int) -> Tuple[pd.DataFrame, Dict[str, object]]:
    """Regret of a deterministic agent-1 strategy on the two hidden-partner trajectories."""
    if strategy not in SHARED_STRATEGIES:
        raise ValueError(f"Unknown strategy {strategy!r}; expected one of {sorted(SHARED_STRATEGIES)}.")
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}.")
    u1_a, u3_a, costs_a = _replay(SHARED_STRATEGIES[strategy](), 0.0, T)
    u1_b, u3_b, costs_b = _replay(SHARED_STRATEGIES[strategy](), 1.0, T)
    regret_a = _average_regret(costs_a, 0.0, u3_a)
    regret_b = _average_regret(costs_b, 1.0, u3_b)
    frame = pd.DataFrame(
        {
            "t": np.arange(T),
            "u1": u1_a,
            "u3_partner0": u3_a,
            "u3_partner1": u3_b,
            "cost_partner0": costs_a,
            "cost_partner1": costs_b,
        }
    )
    summary = {
        "strategy": strategy,
        "T": T,
        "regret_partner0": regret_a,
        "regret_partner1": regret_b,
        "max_regret": max(regret_a, regret_b),
        "identical_plays": bool(np.array_equal(u1_a, u1_b)),
    }
    logger.info("Strategy %s: regrets %.4f / %.4f", strategy, regret_a, regret_b)
    return frame, summary
