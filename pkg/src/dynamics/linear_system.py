"""Linear time-invariant plants with per-agent actuators and observations."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError, UnstableSystemError

logger = logging.getLogger(__name__)

DEFAULT_MARGIN = 1e-9
CERT_FIT_HORIZON = 200


def _frozen(matrix, name: str, ndim: int = 2) -> np.ndarray:
    array = np.array(matrix, dtype=float, ndmin=ndim)
    if array.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-dimensional, got shape {array.shape}.")
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """x_{t+1} = A x_t + sum_i B_i u^i_t + w_t, y^i_t = C_i x_t + e^i_t.

    ``C_blocks`` set to None means every agent observes the full state.
    """

    A: np.ndarray
    B_blocks: Tuple[np.ndarray, ...]
    C_blocks: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self) -> None:
        A = _frozen(self.A, "A")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}.")
        if len(self.B_blocks) < 1:
            raise DimensionError("At least one agent input block is required.")
        blocks = tuple(_frozen(block, f"B_{i + 1}") for i, block in enumerate(self.B_blocks))
        for i, block in enumerate(blocks):
            if block.shape[0] != A.shape[0]:
                raise DimensionError(
                    f"B_{i + 1} has {block.shape[0]} rows, expected {A.shape[0]}."
                )
        observations = None
        if self.C_blocks is not None:
            if len(self.C_blocks) != len(blocks):
                raise DimensionError("One observation matrix per agent is required.")
            observations = tuple(_frozen(c, f"C_{i + 1}") for i, c in enumerate(self.C_blocks))
            for i, c in enumerate(observations):
                if c.shape[1] != A.shape[0]:
                    raise DimensionError(f"C_{i + 1} must have {A.shape[0]} columns.")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B_blocks", blocks)
        object.__setattr__(self, "C_blocks", observations)
        joint = np.hstack(blocks)
        joint.setflags(write=False)
        object.__setattr__(self, "_B", joint)

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def k(self) -> int:
        return len(self.B_blocks)

    @property
    def input_dims(self) -> Tuple[int, ...]:
        return tuple(block.shape[1] for block in self.B_blocks)

    @property
    def d_u(self) -> int:
        return int(sum(self.input_dims))

    @property
    def B(self) -> np.ndarray:
        return self._B  # type: ignore[attr-defined]

    def agent_slice(self, agent: int) -> slice:
        """Columns of the joint input owned by ``agent`` (0-based)."""
        if not 0 <= agent < self.k:
            raise DimensionError(f"Agent index {agent} out of range for {self.k} agents.")
        start = int(sum(self.input_dims[:agent]))
        return slice(start, start + self.input_dims[agent])

    def observation(self, agent: int) -> np.ndarray:
        """Observation matrix of ``agent``; identity under full observation."""
        if not 0 <= agent < self.k:
            raise DimensionError(f"Agent index {agent} out of range for {self.k} agents.")
        if self.C_blocks is None:
            return np.eye(self.d_x)
        return self.C_blocks[agent]

    def with_dynamics(self, A: np.ndarray) -> "LinearSystem":
        """Same actuators and sensors, different transition matrix."""
        return LinearSystem(A, self.B_blocks, self.C_blocks)


@dataclass(frozen=True)
class StrongStabilityCert:
    """Empirical (kappa, gamma) with ||A^n|| <= kappa^2 (1 - gamma)^n over the fit range."""

    kappa: float
    gamma: float
    spectral_radius: float

    @property
    def decay(self) -> float:
        return 1.0 - self.gamma


def _vector(value, size: int, name: str) -> np.ndarray:
    array = np.asarray(value, dtype=float)
    if array.shape != (size,):
        raise DimensionError(f"{name} must have shape ({size},), got {array.shape}.")
    return array


def step_dynamics(sys: LinearSystem, x, u, w) -> np.ndarray:
    """Return A x + B u + w."""
    x = _vector(x, sys.d_x, "x")
    u = _vector(u, sys.d_u, "u")
    w = _vector(w, sys.d_x, "w")
    return sys.A @ x + sys.B @ u + w


def simulate(sys: LinearSystem, controls, w_trace, x0=None) -> np.ndarray:
    """Open-loop rollout from ``x0`` (zero by default); returns T+1 states."""
    controls = np.asarray(controls, dtype=float)
    w_trace = np.asarray(w_trace, dtype=float)
    if controls.shape != (w_trace.shape[0], sys.d_u):
        raise DimensionError(
            f"controls must have shape ({w_trace.shape[0]}, {sys.d_u}), got {controls.shape}."
        )
    states = np.zeros((w_trace.shape[0] + 1, sys.d_x))
    if x0 is not None:
        states[0] = _vector(x0, sys.d_x, "x0")
    for t in range(w_trace.shape[0]):
        states[t + 1] = step_dynamics(sys, states[t], controls[t], w_trace[t])
    return states


def natures_x(sys: LinearSystem, w_trace) -> np.ndarray:
    """States under identically zero control: x_0 = 0, x_{t+1} = A x_t + w_t."""
    w_trace = np.asarray(w_trace, dtype=float)
    if w_trace.ndim != 2 or w_trace.shape[1] != sys.d_x:
        raise DimensionError(f"w_trace must have shape (T, {sys.d_x}), got {w_trace.shape}.")
    states = np.zeros((w_trace.shape[0] + 1, sys.d_x))
    for t in range(w_trace.shape[0]):
        states[t + 1] = sys.A @ states[t] + w_trace[t]
    return states


def natures_y(sys: LinearSystem, w_trace, e_trace, agent: int) -> np.ndarray:
    """Observations of Nature's x for ``agent``: y_t = C_i x^nat_t + e^i_t.

    The result has one row per row of ``e_trace`` (at most T + 1).
    """
    C = sys.observation(agent)
    states = natures_x(sys, w_trace)
    e_trace = np.asarray(e_trace, dtype=float)
    if e_trace.ndim != 2 or e_trace.shape[1] != C.shape[0] or e_trace.shape[0] > states.shape[0]:
        raise DimensionError(
            f"e_trace must have shape (<= {states.shape[0]}, {C.shape[0]}), got {e_trace.shape}."
        )
    return states[: e_trace.shape[0]] @ C.T + e_trace


def spectral_radius(A) -> float:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"Spectral radius needs a square matrix, got shape {A.shape}.")
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def fit_strong_stability(A: np.ndarray, rho: float, horizon: int = CERT_FIT_HORIZON) -> Tuple[float, float]:
    """Fit (kappa, gamma) so that ||A^n||_2 <= kappa^2 (1 - gamma)^n for n <= horizon."""
    decay = rho + 0.05 * (1.0 - rho)
    power = np.eye(A.shape[0])
    kappa_sq = 1.0
    for n in range(1, horizon + 1):
        power = power @ A
        kappa_sq = max(kappa_sq, np.linalg.norm(power, 2) / decay**n)
    return float(np.sqrt(kappa_sq)), 1.0 - decay


def certify_stability(sys, margin: float = DEFAULT_MARGIN) -> StrongStabilityCert:
    """Certify rho(A) < 1 - margin, or raise UnstableSystemError carrying rho(A).

    Accepts a LinearSystem or a bare transition matrix.
    """
    A = np.asarray(sys.A if isinstance(sys, LinearSystem) else sys, dtype=float)
    rho = spectral_radius(A)
    if rho >= 1.0 - margin:
        raise UnstableSystemError(
            f"Spectral radius {rho:.6g} is not below 1 - {margin:g}.", spectral_radius=rho
        )
    kappa, gamma = fit_strong_stability(A, rho)
    logger.debug("Certified rho=%.6g kappa=%.4g gamma=%.4g", rho, kappa, gamma)
    return StrongStabilityCert(kappa=kappa, gamma=gamma, spectral_radius=rho)


ADMIRE_A = (
    (1.5109, 0.0084, 0.0009, 0.8598, -0.0043),
    (0.0, -0.0295, 0.0903, 0.0, -0.4500),
    (0.0, -3.1070, -0.1427, 0.0, 2.7006),
    (2.3057, 0.0097, 0.0006, 1.5439, -0.0029),
    (0.0, 0.5000, 0.0125, 0.0, 0.4878),
)

ADMIRE_B = (
    (0.6981, -0.5388, -0.5367, 0.0029),
    (0.0, -0.2031, 0.2031, 0.3912),
    (0.0, -2.0768, 2.0768, -0.4667),
    (1.8415, -1.4190, -1.4190, 0.0035),
    (0.0, -0.1854, 0.1854, -0.7047),
)


def admire_system(observations: Optional[Sequence[np.ndarray]] = None) -> LinearSystem:
    """Overactuated aircraft: state (alpha, beta, p, q, r), four scalar actuators."""
    B = np.array(ADMIRE_B)
    blocks = tuple(B[:, [i]] for i in range(B.shape[1]))
    return LinearSystem(np.array(ADMIRE_A), blocks, None if observations is None else tuple(observations))
