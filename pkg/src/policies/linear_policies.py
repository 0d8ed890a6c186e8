"""Policy classes read by the controllers: DAC, DRC, state feedback, open loop, LDC."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from ..dynamics.linear_system import LinearSystem, certify_stability
from ..errors import DimensionError, NotStabilizableError, UnstableSystemError


def _matrix(value, name: str) -> np.ndarray:
    array = np.array(value, dtype=float, ndmin=2)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got shape {array.shape}.")
    array.setflags(write=False)
    return array


def disturbance_window(history, t: int, m: int) -> np.ndarray:
    """Rows t-m .. t-1 of ``history`` in chronological order; rows before 0 are zeros."""
    history = np.asarray(history, dtype=float)
    window = np.zeros((m, history.shape[1]))
    for r, s in enumerate(range(t - m, t)):
        if 0 <= s < history.shape[0]:
            window[r] = history[s]
    return window


def _stacked(window, m: int, width: int) -> np.ndarray:
    window = np.atleast_2d(np.asarray(window, dtype=float))
    if window.size == 0:
        window = np.zeros((0, width))
    if window.shape[1] != width or window.shape[0] > m:
        raise DimensionError(f"Window must have at most {m} rows of width {width}, got {window.shape}.")
    padded = np.zeros((m, width))
    if window.shape[0]:
        padded[m - window.shape[0] :] = window
    return padded.ravel()


@dataclass(frozen=True, eq=False)
class DacPolicy:
    """u = M [w_{t-m}; ...; w_{t-1}] with M of shape (d_ui, m d_x)."""

    M: np.ndarray
    m: int
    radius: Optional[float] = None

    def __post_init__(self) -> None:
        M = _matrix(self.M, "M")
        if self.m < 1 or M.shape[1] % self.m:
            raise DimensionError(f"M has {M.shape[1]} columns, not a multiple of m={self.m}.")
        if self.radius is not None and np.linalg.norm(M) > self.radius * (1.0 + 1e-12):
            raise ValueError(f"||M||_F = {np.linalg.norm(M):.6g} exceeds the policy radius {self.radius}.")
        object.__setattr__(self, "M", M)

    @classmethod
    def zeros(cls, d_u: int, d_signal: int, m: int) -> "DacPolicy":
        return cls(np.zeros((d_u, m * d_signal)), m)

    @property
    def d_u(self) -> int:
        return self.M.shape[0]

    @property
    def d_signal(self) -> int:
        return self.M.shape[1] // self.m

    def blocks(self) -> np.ndarray:
        """M as (m, d_u, d_signal), block r acting on the r-th oldest signal."""
        return self.M.reshape(self.d_u, self.m, self.d_signal).transpose(1, 0, 2)


class DrcPolicy(DacPolicy):
    """u = M [y^nat_{t-m}; ...; y^nat_{t-1}] with M of shape (d_ui, m d_yi)."""


def dac_control(p: DacPolicy, w_window) -> np.ndarray:
    """M times the zero-left-padded, chronologically stacked disturbance window."""
    return p.M @ _stacked(w_window, p.m, p.d_signal)


def drc_control(p: DrcPolicy, ynat_window) -> np.ndarray:
    """M times the zero-left-padded, chronologically stacked Nature's-y window."""
    return p.M @ _stacked(ynat_window, p.m, p.d_signal)


@dataclass(frozen=True, eq=False)
class LinearFeedback:
    """u_t = -K x_t."""

    K: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "K", _matrix(self.K, "K"))

    @classmethod
    def stabilizing(cls, sys: LinearSystem, K) -> "LinearFeedback":
        """Build and certify rho(A - BK) < 1 on ``sys``."""
        policy = cls(K)
        policy.certify(sys)
        return policy

    def closed_loop(self, sys: LinearSystem) -> np.ndarray:
        if self.K.shape != (sys.d_u, sys.d_x):
            raise DimensionError(f"K must have shape {(sys.d_u, sys.d_x)}, got {self.K.shape}.")
        return sys.A - sys.B @ self.K

    def certify(self, sys: LinearSystem):
        try:
            return certify_stability(self.closed_loop(sys))
        except UnstableSystemError as exc:
            raise NotStabilizableError(
                f"Gain is not stabilizing: rho(A - BK) = {exc.spectral_radius:.6g}."
            ) from exc


def feedback_control(K: LinearFeedback, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (K.K.shape[1],):
        raise DimensionError(f"State must have shape ({K.K.shape[1]},), got {x.shape}.")
    return -K.K @ x


@dataclass(frozen=True, eq=False)
class OpenLoopPolicy:
    """Replays a fixed control schedule."""

    u_schedule: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "u_schedule", _matrix(self.u_schedule, "u_schedule"))

    @classmethod
    def constant(cls, u, T: int) -> "OpenLoopPolicy":
        return cls(np.tile(np.atleast_1d(np.asarray(u, dtype=float)), (T, 1)))

    @property
    def d_u(self) -> int:
        return self.u_schedule.shape[1]

    def control(self, t: int) -> np.ndarray:
        if not 0 <= t < self.u_schedule.shape[0]:
            raise DimensionError(f"Schedule covers {self.u_schedule.shape[0]} steps, asked for t={t}.")
        return self.u_schedule[t]


@dataclass(frozen=True, eq=False)
class LdcPolicy:
    """Linear dynamic controller: s' = A_pi s + B_pi x, u = C_pi s + D_pi x."""

    A_pi: np.ndarray
    B_pi: np.ndarray
    C_pi: np.ndarray
    D_pi: np.ndarray

    def __post_init__(self) -> None:
        for name in ("A_pi", "B_pi", "C_pi", "D_pi"):
            object.__setattr__(self, name, _matrix(getattr(self, name), name))
        d_s = self.A_pi.shape[0]
        if self.A_pi.shape != (d_s, d_s) or self.B_pi.shape[0] != d_s or self.C_pi.shape[1] != d_s:
            raise DimensionError("Inconsistent LDC internal-state dimensions.")
        if self.D_pi.shape != (self.C_pi.shape[0], self.B_pi.shape[1]):
            raise DimensionError(f"D_pi must have shape {(self.C_pi.shape[0], self.B_pi.shape[1])}.")

    @property
    def d_s(self) -> int:
        return self.A_pi.shape[0]

    @property
    def d_u(self) -> int:
        return self.C_pi.shape[0]

    def step(self, s: np.ndarray, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """(u_t, s_{t+1})."""
        return self.C_pi @ s + self.D_pi @ x, self.A_pi @ s + self.B_pi @ x


def ldc_rollout(sys: LinearSystem, policy: LdcPolicy, w_trace, s0=None):
    """Closed loop of ``sys`` under an LDC acting on the full joint input.

    Returns (states (T+1, d_x), controls (T, d_u), internal states (T+1, d_s)).
    """
    w_trace = np.asarray(w_trace, dtype=float)
    if policy.d_u != sys.d_u or policy.B_pi.shape[1] != sys.d_x:
        raise DimensionError("LDC dimensions do not match the system.")
    T = w_trace.shape[0]
    states = np.zeros((T + 1, sys.d_x))
    internal = np.zeros((T + 1, policy.d_s))
    if s0 is not None:
        internal[0] = s0
    controls = np.zeros((T, sys.d_u))
    for t in range(T):
        controls[t], internal[t + 1] = policy.step(internal[t], states[t])
        states[t + 1] = sys.A @ states[t] + sys.B @ controls[t] + w_trace[t]
    return states, controls, internal
