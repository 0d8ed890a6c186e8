"""Multi-agent gradient perturbation control and its single-controller baseline.

Each agent runs online gradient descent on its own DAC (or DRC) parameters,
fed through a local policy-evaluation oracle built from the shared control
record. GPC is the same machinery with one controller owning every input.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..dynamics.costs import QuadCost
from ..dynamics.linear_system import LinearSystem
from ..errors import DimensionError
from ..learning.ogd import BallDomain, LearnerState
from ..oracles.markov import MarkovOperator, build_markov, estimate_natures_y, recover_disturbance
from ..oracles.peo import PeoContext, local_peo_eval, local_peo_grad
from ..policies.linear_policies import disturbance_window
from .plant import StabilizedPlant

logger = logging.getLogger(__name__)

STATE = "state"
OUTPUT = "output"


class TrajectoryMemory:
    """One agent's record: observations, shared controls, policy signal, natural output.

    In ``state`` mode the agent sees x_t, recovers w_{t-1} and propagates
    Nature's x. In ``output`` mode it sees its own y_t and estimates Nature's y.
    """

    def __init__(self, sys: LinearSystem, T: int, markov: MarkovOperator, mode: str = STATE, agent: int = 0) -> None:
        if mode not in (STATE, OUTPUT):
            raise ValueError(f"Unknown memory mode {mode!r}.")
        self.sys = sys
        self.markov = markov
        self.mode = mode
        self.agent = agent
        d_obs = sys.d_x if mode == STATE else sys.observation(agent).shape[0]
        self.observations = np.zeros((T + 1, d_obs))
        self.controls = np.zeros((T, sys.d_u))
        self.natural = np.zeros((T + 1, d_obs))
        self.disturbances = np.zeros((T, sys.d_x))
        self.last_observed = -1
        self.last_control = -1

    def observe(self, t: int, observation) -> None:
        if t != self.last_observed + 1 or (t > 0 and self.last_control != t - 1):
            raise DimensionError(f"Out-of-order observation at t={t}.")
        self.observations[t] = observation
        if self.mode == STATE:
            if t > 0:
                self.disturbances[t - 1] = recover_disturbance(
                    self.sys, self.observations[t - 1], self.controls[t - 1], self.observations[t]
                )
                self.natural[t] = self.sys.A @ self.natural[t - 1] + self.disturbances[t - 1]
        else:
            self.natural[t] = estimate_natures_y(
                self.sys, self.observations[: t + 1], self.controls[:t], self.markov, self.agent
            )
        self.last_observed = t

    def record_control(self, t: int, u) -> None:
        if t != self.last_observed:
            raise DimensionError(f"Control for t={t} recorded before its observation.")
        self.controls[t] = u
        self.last_control = t

    @property
    def signal(self) -> np.ndarray:
        """History the agent's policy reads: recovered w, or Nature's-y estimates."""
        return self.disturbances if self.mode == STATE else self.natural

    def context(self, t: int, cost, m: int, agent: int, k: int) -> PeoContext:
        signals = tuple(self.signal if j == agent or self.mode == STATE else None for j in range(k))
        return PeoContext(
            markov=self.markov,
            cost=cost,
            t=t,
            controls=self.controls[: t + 1],
            natural=self.natural[t],
            signals=signals,
            m=m,
            agent=agent,
        )


@dataclass
class MagpcAgent:
    """Agent ``index``: OGD learner over its parameter ball plus its trajectory memory.

    The zero policy is played for t < burn_in; ``thetas`` keeps the last h + 1
    policies actually in force. With ``scale_steps`` the scheduled rate is
    divided by max(1, running mean square of the policy input).
    """

    index: int
    learner: LearnerState
    m: int
    h: int
    burn_in: int
    memory: TrajectoryMemory
    repeat_current: bool = False
    scale_steps: bool = False
    thetas: Deque[np.ndarray] = field(default_factory=deque)
    last_eval: Optional[Tuple[PeoContext, List[np.ndarray], float]] = None
    input_energy: float = 0.0

    def __post_init__(self) -> None:
        self.thetas = deque(self.thetas, maxlen=self.h + 1)

    @property
    def theta(self) -> np.ndarray:
        return self.learner.decision

    def propose(self, t: int) -> np.ndarray:
        theta = self.learner.decision if t >= self.burn_in else np.zeros(self.learner.domain.shape)
        self.thetas.append(theta)
        return theta @ disturbance_window(self.memory.signal, t, self.m).ravel()

    def step_scale(self, t: int) -> float:
        """Update the running input energy and return the divisor for this round's rate."""
        rounds = self.learner.t + 1
        current = float(np.mean(np.square(disturbance_window(self.memory.signal, t, self.m))))
        self.input_energy += (current - self.input_energy) / rounds
        return max(1.0, self.input_energy) if self.scale_steps else 1.0

    def learn(self, t: int, cost, k: int) -> None:
        if t < self.burn_in:
            return
        ctx = self.memory.context(t, cost, self.m, self.index, k)
        window = [self.theta] * (self.h + 1) if self.repeat_current else list(self.thetas)
        grads = local_peo_grad(ctx, window)
        played = None
        if not self.repeat_current:
            played = sum(float(np.sum(g * theta)) for g, theta in zip(grads, window))
        self.last_eval = (ctx, window, local_peo_eval(ctx, window))
        self.learner = self.learner.step(np.sum(grads, axis=0), played=played, scale=self.step_scale(t))


@dataclass(frozen=True, eq=False)
class StepRecord:
    t: int
    intended: np.ndarray
    applied: np.ndarray
    learning: bool


def _system(plant: Union[StabilizedPlant, LinearSystem]) -> LinearSystem:
    return plant.closed if isinstance(plant, StabilizedPlant) else plant


def _mask_controls(
    plant: Union[StabilizedPlant, LinearSystem],
    u: np.ndarray,
    failure_mask: Optional[Sequence[bool]],
    state: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Learned-coordinate controls after failures: a failed channel applies nothing at all.

    On a stabilized plant the applied input is -K x + u, so a dead channel's
    learned part is set to (K x)_i to cancel its share of the baseline too.
    """
    sys = _system(plant)
    applied = np.array(u, dtype=float)
    if failure_mask is None or not any(failure_mask):
        return applied
    hold = np.zeros(sys.d_u)
    if isinstance(plant, StabilizedPlant) and np.any(plant.baseline.K):
        if state is None:
            raise DimensionError("Silencing a channel of a stabilized plant needs the current state.")
        hold = plant.baseline.K @ np.asarray(state, dtype=float)
    for i, failed in enumerate(failure_mask):
        if failed:
            applied[sys.agent_slice(i)] = hold[sys.agent_slice(i)]
    return applied


def make_magpc_agents(
    plant: Union[StabilizedPlant, LinearSystem],
    T: int,
    m: int,
    h: int,
    radius: float,
    step_schedule,
    mode: str = STATE,
    burn_in: Optional[int] = None,
    scale_steps: bool = False,
) -> List[MagpcAgent]:
    """One agent per input block, each starting from the zero policy."""
    sys = _system(plant)
    burn_in = m + h if burn_in is None else burn_in
    agents = []
    for i in range(sys.k):
        markov = build_markov(sys, h, None if mode == STATE else i)
        d_signal = sys.d_x if mode == STATE else sys.observation(i).shape[0]
        domain = BallDomain(radius, (sys.input_dims[i], m * d_signal))
        agents.append(
            MagpcAgent(
                index=i,
                learner=LearnerState.start(domain, step_schedule),
                m=m,
                h=h,
                burn_in=burn_in,
                memory=TrajectoryMemory(sys, T, markov, mode, i),
                scale_steps=scale_steps,
            )
        )
    return agents


def magpc_step(
    agents: Sequence[MagpcAgent],
    plant: Union[StabilizedPlant, LinearSystem],
    t: int,
    observations: Sequence[np.ndarray],
    cost_t: Union[QuadCost, Sequence[QuadCost]],
    failure_mask: Optional[Sequence[bool]] = None,
    state: Optional[np.ndarray] = None,
):
    """One protocol round: observe, play, see the applied joint control and cost, learn.

    ``observations[i]`` is what agent i sees at t (the state, or its own y).
    ``cost_t`` is shared, or one local cost per agent for output feedback.
    A failed agent's whole input is zeroed and every agent records the applied
    value. ``state`` defaults to the first observation in state mode.
    """
    sys = _system(plant)
    if len(agents) != sys.k or len(observations) != sys.k:
        raise DimensionError(f"Expected {sys.k} agents and observations, got {len(agents)} and {len(observations)}.")
    if state is None and agents[0].memory.mode == STATE:
        state = observations[0]
    for agent, observation in zip(agents, observations):
        agent.memory.observe(t, observation)
    intended = np.zeros(sys.d_u)
    for agent in agents:
        intended[sys.agent_slice(agent.index)] = agent.propose(t)
    applied = _mask_controls(plant, intended, failure_mask, state)
    for agent in agents:
        agent.memory.record_control(t, applied)
    if len({a.memory.last_control for a in agents}) != 1:
        raise DimensionError("Agents disagree on the shared control history.")
    for agent in agents:
        local_cost = cost_t if callable(cost_t) else cost_t[agent.index]
        agent.learn(t, local_cost, sys.k)
    return applied, list(agents), StepRecord(t, intended, applied, t >= agents[0].burn_in)


class GpcController(MagpcAgent):
    """Single controller over the whole input, evaluated at the repeated current policy."""


def make_gpc(
    plant: Union[StabilizedPlant, LinearSystem],
    T: int,
    m: int,
    h: int,
    radius: float,
    step_schedule,
    burn_in: Optional[int] = None,
    scale_steps: bool = False,
) -> GpcController:
    sys = _system(plant)
    joint = LinearSystem(sys.A, (sys.B,))
    markov = build_markov(joint, h)
    domain = BallDomain(radius, (sys.d_u, m * sys.d_x))
    return GpcController(
        index=0,
        learner=LearnerState.start(domain, step_schedule),
        m=m,
        h=h,
        burn_in=m + h if burn_in is None else burn_in,
        memory=TrajectoryMemory(joint, T, markov, STATE, 0),
        repeat_current=True,
        scale_steps=scale_steps,
    )


def gpc_step(
    controller: GpcController,
    plant: Union[StabilizedPlant, LinearSystem],
    t: int,
    observation,
    cost_t: QuadCost,
    failure_mask: Optional[Sequence[bool]] = None,
):
    """One GPC round. The controller records the control it chose, not the applied one."""
    controller.memory.observe(t, observation)
    intended = controller.propose(t)
    applied = _mask_controls(plant, intended, failure_mask, observation)
    controller.memory.record_control(t, intended)
    controller.learn(t, cost_t, 1)
    return applied, controller, StepRecord(t, intended, applied, t >= controller.burn_in)
