"""Online gradient descent over Frobenius balls, with a linear-loss regret ledger."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError


@dataclass(frozen=True)
class BallDomain:
    """{x : ||x||_F <= radius} over arrays of the given shape."""

    radius: float
    shape: Tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ValueError(f"Ball radius must be positive, got {self.radius}.")
        object.__setattr__(self, "shape", tuple(int(n) for n in self.shape))

    def contains(self, x: np.ndarray, tol: float = 1e-12) -> bool:
        return bool(np.linalg.norm(x) <= self.radius * (1.0 + tol))

    def project(self, x: np.ndarray) -> np.ndarray:
        norm = np.linalg.norm(x)
        if norm <= self.radius:
            return x
        return x * (self.radius / norm)

    def center(self) -> np.ndarray:
        return np.zeros(self.shape)


class ConstantStep:
    def __init__(self, eta: float) -> None:
        self.eta = eta

    def __call__(self, t: int, grad_max: float) -> float:
        return self.eta


class InverseSqrtStep:
    """eta_t = scale / sqrt(t)."""

    def __init__(self, scale: float) -> None:
        self.scale = scale

    def __call__(self, t: int, grad_max: float) -> float:
        return self.scale / np.sqrt(t)


class InverseTimeStep:
    """eta_t = scale / t, the decaying rate used for the aircraft runs."""

    def __init__(self, scale: float) -> None:
        self.scale = scale

    def __call__(self, t: int, grad_max: float) -> float:
        return self.scale / t


class AdaptiveStep:
    """Anytime OGD rate D / (G sqrt(t)) with G the running max gradient norm."""

    def __init__(self, diameter: float) -> None:
        self.diameter = diameter

    def __call__(self, t: int, grad_max: float) -> float:
        if grad_max <= 0.0:
            return 0.0
        return self.diameter / (grad_max * np.sqrt(t))


@dataclass(frozen=True)
class RegretLedger:
    """Running sums for sum_t <g_t, x_t - x> against any fixed comparator x."""

    played: float
    grad_sum: np.ndarray
    rounds: int = 0

    @classmethod
    def empty(cls, shape: Sequence[int]) -> "RegretLedger":
        return cls(played=0.0, grad_sum=np.zeros(tuple(shape)), rounds=0)

    def record(self, g: np.ndarray, played: float) -> "RegretLedger":
        return RegretLedger(self.played + played, self.grad_sum + g, self.rounds + 1)

    def regret(self, comparator: np.ndarray) -> float:
        return float(self.played - np.sum(self.grad_sum * comparator))

    def best_regret(self, domain: BallDomain) -> float:
        """Regret against the best fixed point of the ball (closed form for linear losses)."""
        return float(self.played + domain.radius * np.linalg.norm(self.grad_sum))


@dataclass(frozen=True)
class LearnerState:
    """OGD iterate, step schedule and ledger; ``t`` counts completed rounds."""

    iterate: np.ndarray
    domain: BallDomain
    step_schedule: object
    t: int = 0
    grad_max: float = 0.0
    ledger: Optional[RegretLedger] = None

    def __post_init__(self) -> None:
        iterate = np.asarray(self.iterate, dtype=float)
        if iterate.shape != self.domain.shape:
            raise DimensionError(f"Iterate shape {iterate.shape} != domain shape {self.domain.shape}.")
        object.__setattr__(self, "iterate", self.domain.project(iterate))
        if self.ledger is None:
            object.__setattr__(self, "ledger", RegretLedger.empty(self.domain.shape))

    @classmethod
    def start(cls, domain: BallDomain, step_schedule, initial: Optional[np.ndarray] = None) -> "LearnerState":
        return cls(domain.center() if initial is None else np.asarray(initial, dtype=float), domain, step_schedule)

    @property
    def decision(self) -> np.ndarray:
        return self.iterate

    def step(self, g: np.ndarray, played: Optional[float] = None, scale: float = 1.0) -> "LearnerState":
        return ogd_step(self, g, played, scale)


def ogd_step(state: LearnerState, g, played: Optional[float] = None, scale: float = 1.0) -> LearnerState:
    """iterate <- project(iterate - eta_t g / scale); the linear loss <g, .> enters the ledger.

    ``played`` overrides the ledger's incurred linear loss (used when the loss
    was evaluated on a window of past iterates rather than the current one).
    ``scale`` divides the scheduled rate for this round only.
    """
    if not scale > 0:
        raise ValueError(f"Step scale must be positive, got {scale}.")
    g = np.asarray(g, dtype=float)
    if g.shape != state.domain.shape:
        raise DimensionError(f"Gradient shape {g.shape} != domain shape {state.domain.shape}.")
    if not np.all(np.isfinite(g)):
        raise ValueError("Gradient has non-finite entries.")
    t = state.t + 1
    grad_max = max(state.grad_max, float(np.linalg.norm(g)))
    eta = state.step_schedule(t, grad_max) / scale
    incurred = float(np.sum(g * state.iterate)) if played is None else float(played)
    return replace(
        state,
        iterate=state.domain.project(state.iterate - eta * g),
        t=t,
        grad_max=grad_max,
        ledger=state.ledger.record(g, incurred),
    )


@dataclass(frozen=True)
class ScriptedLearner:
    """Plays a fixed cyclic list of decisions whatever the feedback; keeps the same ledger."""

    plays: Tuple[np.ndarray, ...]
    t: int = 0
    ledger: Optional[RegretLedger] = None

    def __post_init__(self) -> None:
        plays = tuple(np.atleast_1d(np.asarray(p, dtype=float)) for p in self.plays)
        object.__setattr__(self, "plays", plays)
        if self.ledger is None:
            object.__setattr__(self, "ledger", RegretLedger.empty(plays[0].shape))

    @property
    def decision(self) -> np.ndarray:
        return self.plays[self.t % len(self.plays)]

    def step(self, g: np.ndarray, played: Optional[float] = None, scale: float = 1.0) -> "ScriptedLearner":
        g = np.asarray(g, dtype=float)
        incurred = float(np.sum(g * self.decision)) if played is None else float(played)
        return replace(self, t=self.t + 1, ledger=self.ledger.record(g, incurred))
