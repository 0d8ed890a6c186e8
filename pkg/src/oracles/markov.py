"""Truncated Markov operators, disturbance recovery and Nature's-y estimation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..dynamics.linear_system import LinearSystem
from ..errors import DimensionError, InsufficientHistoryError


@dataclass(frozen=True, eq=False)
class MarkovOperator:
    """Blocks G_r = C A^r B for r < h, stored as an (h, d_out, d_u) array.

    ``C`` is the identity under full observation; ``observer`` records which
    agent's sensor built it (None for the state or a shared sensor).
    """

    blocks: np.ndarray
    input_dims: tuple
    observer: Optional[int] = None

    def __post_init__(self) -> None:
        self.blocks.setflags(write=False)

    @property
    def h(self) -> int:
        return self.blocks.shape[0]

    @property
    def d_out(self) -> int:
        return self.blocks.shape[1]

    @property
    def d_u(self) -> int:
        return self.blocks.shape[2]

    def agent_slice(self, agent: int) -> slice:
        start = int(sum(self.input_dims[:agent]))
        return slice(start, start + self.input_dims[agent])

    def agent_view(self, agent: int) -> np.ndarray:
        """Column blocks acting on ``agent``'s controls, shape (h, d_out, d_ui)."""
        return self.blocks[:, :, self.agent_slice(agent)]

    def stacked(self) -> np.ndarray:
        """[G_0, G_1, ..., G_{h-1}] as one d_out x (h d_u) matrix."""
        return np.hstack(list(self.blocks))

    def contribution(self, controls, t: int, agent: Optional[int] = None) -> np.ndarray:
        """sum_{r<h} G_r u_{t-1-r}; rows of ``controls`` before time 0 count as zero.

        With ``agent`` set, ``controls`` holds only that agent's inputs.
        """
        controls = np.asarray(controls, dtype=float)
        view = self.blocks if agent is None else self.agent_view(agent)
        total = np.zeros(self.d_out)
        for r in range(self.h):
            s = t - 1 - r
            if s < 0:
                break
            if s >= controls.shape[0]:
                raise InsufficientHistoryError(f"Control history ends at {controls.shape[0] - 1}, need step {s}.")
            total += view[r] @ controls[s]
        return total


def build_markov(sys: LinearSystem, h: int, observed: Union[None, int, np.ndarray] = None) -> MarkovOperator:
    """[B, AB, ..., A^{h-1}B], left-multiplied by C when ``observed`` is given.

    ``observed`` is an agent index (its sensor C_i) or an explicit matrix.
    """
    if h < 1:
        raise ValueError(f"Markov horizon must be >= 1, got {h}.")
    observer = None
    if observed is None:
        C = np.eye(sys.d_x)
    elif isinstance(observed, (int, np.integer)):
        observer = int(observed)
        C = sys.observation(observer)
    else:
        C = np.atleast_2d(np.asarray(observed, dtype=float))
        if C.shape[1] != sys.d_x:
            raise DimensionError(f"Observation matrix needs {sys.d_x} columns, got {C.shape}.")
    blocks = np.zeros((h, C.shape[0], sys.d_u))
    propagated = sys.B.copy()
    for r in range(h):
        blocks[r] = C @ propagated
        propagated = sys.A @ propagated
    return MarkovOperator(blocks=blocks, input_dims=sys.input_dims, observer=observer)


def recover_disturbance(sys: LinearSystem, x_t, u_t, x_next) -> np.ndarray:
    """w_t = x_{t+1} - A x_t - B u_t."""
    x_t = np.asarray(x_t, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    x_next = np.asarray(x_next, dtype=float)
    if x_t.shape != (sys.d_x,) or x_next.shape != (sys.d_x,) or u_t.shape != (sys.d_u,):
        raise DimensionError(
            f"Expected x in R^{sys.d_x} and u in R^{sys.d_u}, got {x_t.shape}, {u_t.shape}, {x_next.shape}."
        )
    return x_next - sys.A @ x_t - sys.B @ u_t


def estimate_natures_y(
    sys: LinearSystem,
    y_history,
    u_history,
    Ghat: MarkovOperator,
    agent: Optional[int] = None,
    t: Optional[int] = None,
) -> np.ndarray:
    """y^nat_t ~ y_t - sum_{r<h} G_r u_{t-1-r}, subtracting every agent's controls.

    ``t`` defaults to the last row of ``y_history``.
    """
    y_history = np.atleast_2d(np.asarray(y_history, dtype=float))
    t = y_history.shape[0] - 1 if t is None else t
    if not 0 <= t < y_history.shape[0]:
        raise InsufficientHistoryError(f"No observation recorded for step {t}.")
    if agent is not None and sys.observation(agent).shape[0] != Ghat.d_out:
        raise DimensionError(f"Operator output {Ghat.d_out} does not match agent {agent + 1}'s sensor.")
    if y_history.shape[1] != Ghat.d_out:
        raise DimensionError(f"Observations have width {y_history.shape[1]}, operator expects {Ghat.d_out}.")
    return y_history[t] - Ghat.contribution(u_history, t)


def default_horizon(T: int, rho: float) -> int:
    """ceil(log T / log(1/rho)), the horizon giving 1/T truncation error."""
    if rho <= 0.0:
        return 1
    if rho >= 1.0:
        raise ValueError(f"Horizon rule needs rho < 1, got {rho}.")
    return max(1, math.ceil(math.log(max(T, 2)) / math.log(1.0 / rho)))
