"""Offline comparator and the four-term regret decomposition of a learned run."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..dynamics.costs import QuadCost
from ..dynamics.linear_system import LinearSystem, natures_x
from ..learning.multiplayer import BestInHindsightOracle, Quadratic, split_blocks
from ..learning.ogd import BallDomain
from ..oracles.markov import build_markov
from ..oracles.peo import PeoContext, counterfactual_signal
from ..policies.decoupling import simulate_policies
from ..policies.linear_policies import DacPolicy, disturbance_window

logger = logging.getLogger(__name__)

TERMS = ("burn_in", "algorithm_truncation", "policy_regret", "comparator_truncation")


def closed_system(trajectory: dict) -> LinearSystem:
    """The loop the learners acted on, with B split into the learners' input blocks."""
    B = np.asarray(trajectory["B"], dtype=float)
    bounds = np.cumsum((0,) + tuple(trajectory["input_dims"]))
    blocks = tuple(B[:, bounds[i] : bounds[i + 1]] for i in range(len(bounds) - 1))
    return LinearSystem(np.asarray(trajectory["A_closed"], dtype=float), blocks)


def _wrapped_cost(trajectory: dict) -> QuadCost:
    Q, R, N = trajectory["wrapped_cost"]
    return QuadCost(Q, R, N)


def _require_learned(trajectory: dict) -> None:
    if trajectory.get("thetas") is None:
        raise ValueError("Trajectory has no learned policies; regret needs a magpc or gpc run.")


@dataclass(frozen=True, eq=False)
class OfflineOptimum:
    """Best fixed DAC roster in hindsight and its rollout on the same disturbances."""

    policies: List[np.ndarray]
    value: float
    states: np.ndarray
    controls: np.ndarray
    converged: bool
    residual: float


def dac_cost_quadratic(sys: LinearSystem, cost: QuadCost, w: np.ndarray, m: int) -> Quadratic:
    """Total cost of a fixed DAC roster as an exact quadratic in the stacked parameters.

    The stacked vector is the concatenation of every agent's row-major M_i.
    Both the state and the control are affine in it, so the T-step cost is
    accumulated in closed form.
    """
    d_sig = m * sys.d_x
    dim = sum(d * d_sig for d in sys.input_dims)
    F = np.zeros((sys.d_x, dim))
    f = np.zeros(sys.d_x)
    P = np.zeros((dim, dim))
    q = np.zeros(dim)
    c = 0.0
    N = cost.cross
    for t in range(w.shape[0]):
        v = disturbance_window(w, t, m).ravel()
        U = np.zeros((sys.d_u, dim))
        offset = 0
        for i, d_ui in enumerate(sys.input_dims):
            U[sys.agent_slice(i), offset : offset + d_ui * d_sig] = np.kron(np.eye(d_ui), v)
            offset += d_ui * d_sig
        Q, R = cost.Q, cost.R
        P += F.T @ Q @ F + U.T @ R @ U + 2.0 * F.T @ N @ U
        q += 2.0 * (F.T @ Q @ f + U.T @ N.T @ f)
        c += float(f @ Q @ f)
        F = sys.A @ F + sys.B @ U
        f = sys.A @ f + w[t]
    return Quadratic(P, q, c)


def offline_optimal_dac(trajectory: dict, settings: Optional[dict] = None) -> OfflineOptimum:
    """Minimize the recorded run's total cost over fixed per-agent DAC policies.

    ``settings`` holds the search options (resolution, max_iter, tol, strict).
    """
    _require_learned(trajectory)
    sys = closed_system(trajectory)
    cost = _wrapped_cost(trajectory)
    w = np.asarray(trajectory["w"], dtype=float)
    m, radius = int(trajectory["m"]), float(trajectory["radius"])
    shapes = [(d, m * sys.d_x) for d in sys.input_dims]
    oracle = BestInHindsightOracle([BallDomain(radius, s) for s in shapes], **(settings or {}))
    result = oracle.minimize(dac_cost_quadratic(sys, cost, w, m))
    policies = split_blocks(result.minimizer, shapes)
    states, controls = simulate_policies(sys, [DacPolicy(M, m) for M in policies], w)
    logger.info("Offline DAC comparator: total cost %.6g (converged=%s)", result.value, result.converged)
    return OfflineOptimum(policies, result.value, states, controls, result.converged, result.residual)


@dataclass(frozen=True, eq=False)
class RegretReport:
    terms: Dict[str, float]
    total: float
    ledger_regret: float
    burn_in_bound: float
    epsilon: float
    T: int
    converged: bool

    @property
    def identity_gap(self) -> float:
        return abs(sum(self.terms.values()) - self.total)

    @property
    def bound(self) -> float:
        """Average-regret bound: ledger regret plus burn-in, over T, plus twice the oracle error."""
        epsilon = 0.0 if np.isnan(self.epsilon) else self.epsilon
        return (self.ledger_regret + self.burn_in_bound) / self.T + 2.0 * epsilon

    def as_dict(self) -> Dict[str, float]:
        report = {f"term_{name}": value for name, value in self.terms.items()}
        report.update(
            {
                "total_regret": self.total,
                "average_regret": self.total / self.T,
                "identity_gap": self.identity_gap,
                "ledger_regret": self.ledger_regret,
                "regret_bound": self.bound,
                "within_bound": bool(self.total / self.T <= self.bound + 1e-6),
                "comparator_converged": self.converged,
            }
        )
        return report


def _window(thetas: np.ndarray, t: int, h: int) -> List[np.ndarray]:
    return [thetas[s] for s in range(t - h, t + 1)]


def measure_regret_terms(
    trajectory: dict, offline: Optional[OfflineOptimum] = None, epsilon: float = float("nan")
) -> RegretReport:
    """Split the run's regret against the offline DAC comparator into four terms.

    For t >= T_b the surrogate loss l_t rebuilds the output from the true
    natural state and the last h controls regenerated from a policy window,
    so the terms telescope to the total exactly.
    """
    _require_learned(trajectory)
    offline = offline or offline_optimal_dac(trajectory)
    sys = closed_system(trajectory)
    cost = _wrapped_cost(trajectory)
    w = np.asarray(trajectory["w"], dtype=float)
    states = np.asarray(trajectory["states"], dtype=float)
    learned = np.asarray(trajectory["learned"], dtype=float)
    m, h, burn_in = int(trajectory["m"]), int(trajectory["h"]), int(trajectory["burn_in"])
    T = w.shape[0]
    markov = build_markov(sys, h)
    xnat = natures_x(sys, w)
    signals = tuple(w for _ in range(sys.k))
    comparator = {i: [M] * (h + 1) for i, M in enumerate(offline.policies)}

    terms = dict.fromkeys(TERMS, 0.0)
    for t in range(T):
        actual = cost(states[t], learned[t])
        best = cost(offline.states[t], offline.controls[t])
        if t < burn_in:
            terms["burn_in"] += actual - best
            continue
        ctx = PeoContext(markov, cost, t, learned[: t + 1], xnat[t], signals, m)
        played = {i: _window(thetas, t, h) for i, thetas in enumerate(trajectory["thetas"])}
        loss_played = cost(*counterfactual_signal(ctx, played))
        loss_best = cost(*counterfactual_signal(ctx, comparator))
        terms["algorithm_truncation"] += actual - loss_played
        terms["policy_regret"] += loss_played - loss_best
        terms["comparator_truncation"] += loss_best - best

    total = float(sum(cost(states[t], learned[t]) - cost(offline.states[t], offline.controls[t]) for t in range(T)))
    ledger = sum(
        float(played - np.sum(grad_sum * M))
        for (played, grad_sum), M in zip(trajectory.get("ledgers", []), offline.policies)
    )
    r_nat = float(np.max(np.linalg.norm(xnat, axis=1)))
    report = RegretReport(
        terms=terms,
        total=total,
        ledger_regret=ledger,
        burn_in_bound=burn_in * cost.constant * r_nat**2,
        epsilon=epsilon,
        T=T,
        converged=offline.converged,
    )
    logger.info("Regret %.6g split as %s (gap %.3g)", total, {k: round(v, 6) for k, v in terms.items()}, report.identity_gap)
    return report
