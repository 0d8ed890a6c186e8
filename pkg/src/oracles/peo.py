"""Local and joint policy-evaluation oracles over DAC/DRC parameter windows.

The counterfactual output at step t is affine in every parameter matrix:

    out_t = nat_t + sum_{r<h} G_r u_{t-1-r},  u_s = theta_s [sig_{s-m}; ...; sig_{s-1}]

so quadratic costs give closed-form gradients.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..dynamics.costs import QuadCost
from ..dynamics.linear_system import LinearSystem
from ..errors import DimensionError, InsufficientHistoryError
from ..policies.linear_policies import disturbance_window
from .markov import MarkovOperator

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class PeoContext:
    """Snapshot of what an agent knows once step t's controls and cost are revealed.

    ``controls`` holds joint controls for steps 0..t, ``natural`` the natural
    output at t (x^nat_t, or y^nat_t for output feedback) and ``signals[i]``
    the history agent i's policy reads (recovered w, or its y^nat estimates).
    """

    markov: MarkovOperator
    cost: Callable
    t: int
    controls: np.ndarray
    natural: np.ndarray
    signals: Tuple[np.ndarray, ...]
    m: int
    agent: Optional[int] = None
    epsilon: float = float("nan")

    @property
    def h(self) -> int:
        return self.markov.h

    @property
    def burn_in(self) -> int:
        return self.m + self.h

    def with_agent(self, agent: int) -> "PeoContext":
        return PeoContext(self.markov, self.cost, self.t, self.controls, self.natural, self.signals, self.m, agent, self.epsilon)


def _check(ctx: PeoContext, windows: Mapping[int, Sequence[np.ndarray]]) -> None:
    if ctx.t < ctx.burn_in:
        raise InsufficientHistoryError(f"Oracle needs t >= T_b = {ctx.burn_in}, got t = {ctx.t}.")
    if ctx.controls.shape[0] < ctx.t + 1:
        raise InsufficientHistoryError(f"Controls recorded up to {ctx.controls.shape[0] - 1}, need {ctx.t}.")
    for agent, window in windows.items():
        if len(window) != ctx.h + 1:
            raise DimensionError(f"Agent {agent + 1} window has {len(window)} policies, expected {ctx.h + 1}.")


def policy_input(ctx: PeoContext, agent: int, s: int) -> np.ndarray:
    """Stacked signal window agent ``agent``'s policy reads at step ``s``."""
    return disturbance_window(ctx.signals[agent], s, ctx.m).ravel()


def regenerated_controls(ctx: PeoContext, agent: int, window: Sequence[np.ndarray]) -> np.ndarray:
    """Controls agent ``agent`` would have played at t-h..t under ``window``; (h+1, d_ui)."""
    return np.stack([np.asarray(theta) @ policy_input(ctx, agent, ctx.t - ctx.h + j) for j, theta in enumerate(window)])


def counterfactual_controls(ctx: PeoContext, windows: Mapping[int, Sequence[np.ndarray]]) -> np.ndarray:
    """Recorded joint controls with the windowed agents' steps t-h..t regenerated."""
    controls = np.array(ctx.controls[: ctx.t + 1], dtype=float)
    for agent, window in windows.items():
        cols = ctx.markov.agent_slice(agent)
        replay = regenerated_controls(ctx, agent, window)
        for j in range(ctx.h + 1):
            s = ctx.t - ctx.h + j
            if s >= 0:
                controls[s, cols] = replay[j]
    return controls


def counterfactual_signal(ctx: PeoContext, windows: Mapping[int, Sequence[np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    """(counterfactual output at t, counterfactual joint control at t)."""
    controls = counterfactual_controls(ctx, windows)
    return ctx.natural + ctx.markov.contribution(controls, ctx.t), controls[ctx.t]


def local_peo_eval(ctx: PeoContext, theta_window: Sequence[np.ndarray]) -> float:
    """Cost at t had agent ``ctx.agent`` played ``theta_window``, others held at their recorded controls."""
    if ctx.agent is None:
        raise ValueError("Local oracle needs the context's agent index.")
    windows = {ctx.agent: theta_window}
    _check(ctx, windows)
    out, u = counterfactual_signal(ctx, windows)
    return float(ctx.cost(out, u))


def joint_peo_eval(ctx: PeoContext, theta_windows: Sequence[Optional[Sequence[np.ndarray]]]) -> float:
    """Cost at t with every agent's window regenerated; a None entry keeps that agent's recorded controls."""
    windows = {i: w for i, w in enumerate(theta_windows) if w is not None}
    _check(ctx, windows)
    out, u = counterfactual_signal(ctx, windows)
    return float(ctx.cost(out, u))


def _analytic_grad(ctx: PeoContext, theta_window: Sequence[np.ndarray]) -> list:
    out, u = counterfactual_signal(ctx, {ctx.agent: theta_window})
    grad_out, grad_u = ctx.cost.gradient(out, u)
    view = ctx.markov.agent_view(ctx.agent)
    cols = ctx.markov.agent_slice(ctx.agent)
    grads = []
    for j, theta in enumerate(theta_window):
        s = ctx.t - ctx.h + j
        if s < 0:
            grads.append(np.zeros_like(theta, dtype=float))
            continue
        direction = view[ctx.h - 1 - j].T @ grad_out if j < ctx.h else grad_u[cols]
        grads.append(np.outer(direction, policy_input(ctx, ctx.agent, s)))
    return grads


def _finite_difference_grad(ctx: PeoContext, theta_window: Sequence[np.ndarray], step: float = FD_STEP) -> list:
    base = [np.array(theta, dtype=float) for theta in theta_window]
    grads = []
    for j, theta in enumerate(base):
        grad = np.zeros_like(theta)
        for idx in np.ndindex(theta.shape):
            plus = [b.copy() for b in base]
            minus = [b.copy() for b in base]
            plus[j][idx] += step
            minus[j][idx] -= step
            grad[idx] = (local_peo_eval(ctx, plus) - local_peo_eval(ctx, minus)) / (2.0 * step)
        grads.append(grad)
    return grads


def local_peo_grad(ctx: PeoContext, theta_window: Sequence[np.ndarray]) -> list:
    """Gradient of the local oracle with respect to each of the h + 1 parameter matrices.

    Closed form for quadratic costs; central finite differences otherwise.
    """
    if ctx.agent is None:
        raise ValueError("Local oracle needs the context's agent index.")
    _check(ctx, {ctx.agent: theta_window})
    if isinstance(ctx.cost, QuadCost):
        return _analytic_grad(ctx, theta_window)
    logger.debug("Cost is not quadratic; using finite differences with step %g", FD_STEP)
    return _finite_difference_grad(ctx, theta_window)


def counterfactual_rollout(
    sys: LinearSystem,
    ctx: PeoContext,
    states,
    w_trace,
    theta_windows: Mapping[int, Sequence[np.ndarray]],
    observation_noise: Optional[np.ndarray] = None,
) -> float:
    """Exact counterfactual cost: roll ``sys`` forward from the true x_{t-h}.

    Uses the true disturbances w_{t-h..t-1} and the regenerated controls, then
    observes through the operator's sensor (plus ``observation_noise`` at t).
    """
    _check(ctx, theta_windows)
    states = np.asarray(states, dtype=float)
    w_trace = np.asarray(w_trace, dtype=float)
    controls = counterfactual_controls(ctx, theta_windows)
    start = max(ctx.t - ctx.h, 0)
    x = states[start].copy()
    for s in range(start, ctx.t):
        x = sys.A @ x + sys.B @ controls[s] + w_trace[s]
    if ctx.markov.observer is not None:
        x = sys.observation(ctx.markov.observer) @ x
    if observation_noise is not None:
        x = x + observation_noise
    return float(ctx.cost(x, controls[ctx.t]))
