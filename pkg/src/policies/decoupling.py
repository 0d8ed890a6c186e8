"""Joint closed-loop rollouts of per-agent policies and the decoupling test."""

from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from ..dynamics.linear_system import LinearSystem, natures_y
from ..errors import DimensionError
from .linear_policies import (
    DacPolicy,
    DrcPolicy,
    LdcPolicy,
    LinearFeedback,
    OpenLoopPolicy,
    dac_control,
    disturbance_window,
    drc_control,
    feedback_control,
)

logger = logging.getLogger(__name__)


def simulate_policies(
    sys: LinearSystem,
    roster: Sequence,
    w_trace,
    e_trace: Optional[Sequence[np.ndarray]] = None,
) -> Tuple[np.ndarray, np.ndarray]:
    """Roll out one policy per agent from x_0 = 0.

    DAC agents read true disturbances, DRC agents read their true Nature's y
    (``e_trace[i]`` is agent i's observation noise, zero when omitted), while
    feedback and LDC agents read the raw state. Returns (states, controls).
    """
    w_trace = np.asarray(w_trace, dtype=float)
    if len(roster) != sys.k:
        raise DimensionError(f"Roster has {len(roster)} policies for {sys.k} agents.")
    T = w_trace.shape[0]
    ynat = {}
    internal = {}
    for i, policy in enumerate(roster):
        if isinstance(policy, DrcPolicy):
            d_y = sys.observation(i).shape[0]
            e = np.zeros((T + 1, d_y)) if e_trace is None else e_trace[i]
            ynat[i] = natures_y(sys, w_trace, e, i)
        elif isinstance(policy, LdcPolicy):
            internal[i] = np.zeros(policy.d_s)

    states = np.zeros((T + 1, sys.d_x))
    controls = np.zeros((T, sys.d_u))
    for t in range(T):
        for i, policy in enumerate(roster):
            if isinstance(policy, DrcPolicy):
                u = drc_control(policy, disturbance_window(ynat[i], t, policy.m))
            elif isinstance(policy, DacPolicy):
                u = dac_control(policy, disturbance_window(w_trace, t, policy.m))
            elif isinstance(policy, LinearFeedback):
                u = feedback_control(policy, states[t])
            elif isinstance(policy, OpenLoopPolicy):
                u = policy.control(t)
            elif isinstance(policy, LdcPolicy):
                u, internal[i] = policy.step(internal[i], states[t])
            else:
                raise TypeError(f"Unsupported policy type {type(policy).__name__}.")
            controls[t, sys.agent_slice(i)] = u
        states[t + 1] = sys.A @ states[t] + sys.B @ controls[t] + w_trace[t]
    return states, controls


def decoupling_check(
    sample: Tuple[Sequence, Sequence],
    sys: LinearSystem,
    w_trace,
    e_trace: Optional[Sequence[np.ndarray]] = None,
) -> bool:
    """True iff agents whose policy is shared by both rosters play identical controls.

    ``sample`` holds two rosters that differ only in the varied agents' policies.
    """
    baseline, variant = sample
    fixed = [i for i, (a, b) in enumerate(zip(baseline, variant)) if a is b]
    _, u_base = simulate_policies(sys, baseline, w_trace, e_trace)
    _, u_var = simulate_policies(sys, variant, w_trace, e_trace)
    for i in fixed:
        cols = sys.agent_slice(i)
        if not np.array_equal(u_base[:, cols], u_var[:, cols]):
            logger.debug("Agent %d controls changed when other agents' policies varied", i + 1)
            return False
    return True
