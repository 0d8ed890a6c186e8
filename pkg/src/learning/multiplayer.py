"""Multiplayer OCO reductions: each player learns from its own linearized loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..errors import DimensionError, InsufficientHistoryError, OracleConvergenceError
from .ogd import BallDomain

logger = logging.getLogger(__name__)

GRID_RESOLUTION = 1e-3
GRID_MAX_POINTS = 2001
PGD_MAX_ITER = 10_000
PGD_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class JointDecision:
    """Per-agent decisions x^1..x^k with a flat concatenated view."""

    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(np.array(b, dtype=float) for b in self.blocks))

    @classmethod
    def of(cls, learners: Sequence) -> "JointDecision":
        return cls(tuple(learner.decision for learner in learners))

    @property
    def k(self) -> int:
        return len(self.blocks)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(b.size for b in self.blocks)

    def concat(self) -> np.ndarray:
        return np.concatenate([b.ravel() for b in self.blocks])


def split_blocks(vector: np.ndarray, shapes: Sequence[Tuple[int, ...]]) -> List[np.ndarray]:
    """Cut a flat joint vector into per-agent arrays of the given shapes."""
    sizes = [int(np.prod(shape)) for shape in shapes]
    if vector.shape[-1] != sum(sizes):
        raise DimensionError(f"Joint vector has {vector.shape[-1]} entries, agents need {sum(sizes)}.")
    bounds = np.cumsum([0] + sizes)
    return [
        vector[..., bounds[i] : bounds[i + 1]].reshape(vector.shape[:-1] + tuple(shape))
        for i, shape in enumerate(shapes)
    ]


def _check_gradients(grads, learners, leading: Tuple[int, ...] = ()) -> List[np.ndarray]:
    grads = [np.asarray(g, dtype=float) for g in grads]
    if len(grads) != len(learners):
        raise DimensionError(f"Oracle returned {len(grads)} gradients for {len(learners)} learners.")
    for i, (g, learner) in enumerate(zip(grads, learners)):
        expected = leading + tuple(learner.ledger.grad_sum.shape)
        if g.shape != expected:
            raise DimensionError(f"Gradient for agent {i + 1} has shape {g.shape}, expected {expected}.")
    return grads


def multiplayer_oco_round(learners: Sequence, grad_oracle: Callable[[JointDecision], Sequence[np.ndarray]]):
    """One round of the linearized multiplayer protocol.

    All decisions are committed first; ``grad_oracle`` then returns, for every
    agent i, the gradient of l_t(., x^{-i}_t) at x^i_t, and each learner is fed
    only its own linear loss.
    """
    decision = JointDecision.of(learners)
    grads = _check_gradients(grad_oracle(decision), learners)
    return decision, [learner.step(g) for learner, g in zip(learners, grads)]


def multiplayer_ocom_round(
    learners: Sequence,
    h: int,
    window: Sequence[JointDecision],
    grad_oracle: Callable[[Sequence[JointDecision]], Sequence[np.ndarray]],
):
    """One round with memory: the loss reads the last h + 1 joint decisions.

    ``window`` is ordered oldest first and ends with the current decision.
    ``grad_oracle`` returns per-agent gradients of shape (h + 1, *decision
    shape), block r taken with respect to window entry r. The learner sees
    the block sum, and its ledger is charged sum_r <g_r, x_{t-h+r}>.
    """
    if len(window) < h + 1:
        raise InsufficientHistoryError(f"Window holds {len(window)} decisions, need {h + 1}.")
    window = list(window)[-(h + 1) :]
    decision = JointDecision.of(learners)
    grads = _check_gradients(grad_oracle(window), learners, leading=(h + 1,))
    updated = []
    for i, (learner, g) in enumerate(zip(learners, grads)):
        played = sum(float(np.sum(g[r] * window[r].blocks[i])) for r in range(h + 1))
        updated.append(learner.step(g.sum(axis=0), played=played))
    return decision, updated


@dataclass(frozen=True, eq=False)
class Quadratic:
    """l(x) = x'Px + q'x + c over a flat vector."""

    P: np.ndarray
    q: np.ndarray
    c: float = 0.0

    def __post_init__(self) -> None:
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        if P.shape != (q.size, q.size):
            raise DimensionError(f"P has shape {P.shape}, q has {q.size} entries.")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "c", float(self.c))

    @property
    def dim(self) -> int:
        return self.q.size

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.P @ x + self.q @ x + self.c)

    def batch(self, X: np.ndarray) -> np.ndarray:
        """Values at each row of X."""
        return np.einsum("ni,ij,nj->n", X, self.P, X) + X @ self.q + self.c

    def gradient(self, x) -> np.ndarray:
        return 2.0 * self.P @ np.asarray(x, dtype=float) + self.q

    def __add__(self, other: "Quadratic") -> "Quadratic":
        return Quadratic(self.P + other.P, self.q + other.q, self.c + other.c)

    def agent_gradients(self, decision: JointDecision) -> List[np.ndarray]:
        g = self.gradient(decision.concat())
        return split_blocks(g, [b.shape for b in decision.blocks])

    def restrict(self, agent: int, decision: JointDecision) -> "Quadratic":
        """l(., x^{-i}) as a quadratic in agent ``agent``'s block."""
        bounds = np.cumsum((0,) + decision.dims)
        own = np.arange(bounds[agent], bounds[agent + 1])
        rest = np.setdiff1d(np.arange(self.dim), own)
        x_rest = decision.concat()[rest]
        P_oo = self.P[np.ix_(own, own)]
        P_or = self.P[np.ix_(own, rest)]
        q = self.q[own] + 2.0 * P_or @ x_rest
        c = self.c + x_rest @ self.P[np.ix_(rest, rest)] @ x_rest + self.q[rest] @ x_rest
        return Quadratic(P_oo, q, c)

    @classmethod
    def zero(cls, dim: int) -> "Quadratic":
        return cls(np.zeros((dim, dim)), np.zeros(dim), 0.0)


@dataclass(frozen=True, eq=False)
class QuadraticMemoryLoss:
    """Quadratic in the stacked window (x_{t-h}, ..., x_t) of joint decisions."""

    window_loss: Quadratic
    h: int

    @property
    def dim(self) -> int:
        return self.window_loss.dim // (self.h + 1)

    def _stack(self, window: Sequence[JointDecision]) -> np.ndarray:
        if len(window) != self.h + 1:
            raise InsufficientHistoryError(f"Loss needs {self.h + 1} decisions, got {len(window)}.")
        return np.concatenate([d.concat() for d in window])

    def __call__(self, window: Sequence[JointDecision]) -> float:
        return self.window_loss(self._stack(window))

    def window_gradients(self, window: Sequence[JointDecision]) -> List[np.ndarray]:
        """Per-agent gradients of shape (h + 1, *block shape)."""
        g = self.window_loss.gradient(self._stack(window)).reshape(self.h + 1, self.dim)
        return split_blocks(g, [b.shape for b in window[-1].blocks])

    def collapse(self) -> Quadratic:
        """l_bar(x) = l(x, ..., x)."""
        n, d = self.h + 1, self.dim
        P = self.window_loss.P.reshape(n, d, n, d).sum(axis=(0, 2))
        q = self.window_loss.q.reshape(n, d).sum(axis=0)
        return Quadratic(P, q, self.window_loss.c)


@dataclass(frozen=True, eq=False)
class OracleResult:
    minimizer: np.ndarray
    value: float
    converged: bool
    residual: float
    iterations: int


def project_product(x: np.ndarray, domains: Sequence[BallDomain]) -> np.ndarray:
    """Project a flat joint vector onto the product of per-agent balls."""
    blocks = split_blocks(x, [d.shape for d in domains])
    return np.concatenate([d.project(b).ravel() for d, b in zip(domains, blocks)])


class BestInHindsightOracle:
    """Minimizes a convex quadratic over a product of balls.

    Exhaustive grid (then projected-gradient polish) when the joint dimension
    is at most two, projected gradient descent otherwise.
    """

    def __init__(
        self,
        domains: Sequence[BallDomain],
        resolution: float = GRID_RESOLUTION,
        max_iter: int = PGD_MAX_ITER,
        tol: float = PGD_TOLERANCE,
        strict: bool = False,
    ) -> None:
        self.domains = list(domains)
        self.resolution = resolution
        self.max_iter = max_iter
        self.tol = tol
        self.strict = strict
        self.dim = int(sum(np.prod(d.shape) for d in self.domains))

    def _grid_start(self, loss: Quadratic) -> np.ndarray:
        axes = []
        for domain in self.domains:
            n = int(min(GRID_MAX_POINTS, np.floor(2 * domain.radius / self.resolution) + 1))
            axes.extend([np.linspace(-domain.radius, domain.radius, n)] * int(np.prod(domain.shape)))
        mesh = np.meshgrid(*axes, indexing="ij")
        X = np.column_stack([axis.ravel() for axis in mesh])
        blocks = split_blocks(X, [(int(np.prod(d.shape)),) for d in self.domains])
        feasible = np.all(
            [np.linalg.norm(b, axis=1) <= d.radius for b, d in zip(blocks, self.domains)], axis=0
        )
        values = np.where(feasible, loss.batch(X), np.inf)
        return X[int(np.argmin(values))]

    def minimize(self, loss: Quadratic, start: Optional[np.ndarray] = None) -> OracleResult:
        if loss.dim != self.dim:
            raise DimensionError(f"Loss has dimension {loss.dim}, oracle domain has {self.dim}.")
        if start is not None:
            x = project_product(np.asarray(start, dtype=float), self.domains)
        elif self.dim <= 2:
            x = self._grid_start(loss)
        else:
            x = np.zeros(self.dim)
        lipschitz = 2.0 * float(np.max(np.abs(np.linalg.eigvalsh(loss.P)))) if loss.dim else 0.0
        step = 1.0 / lipschitz if lipschitz > 0 else 1.0
        residual = np.inf
        iterations = 0
        for iterations in range(1, self.max_iter + 1):
            nxt = project_product(x - step * loss.gradient(x), self.domains)
            residual = float(np.linalg.norm(nxt - x))
            x = nxt
            if residual <= self.tol:
                break
        converged = residual <= self.tol
        if not converged:
            logger.warning("Best-in-hindsight search stopped with residual %.3g", residual)
            if self.strict:
                raise OracleConvergenceError(f"No convergence after {self.max_iter} iterations (residual {residual:.3g}).")
        return OracleResult(x, loss(x), converged, residual, iterations)


@dataclass(frozen=True, eq=False)
class RegretMeasurement:
    """Average multi-agent regret with the comparator that produced it."""

    value: float
    played: float
    comparator: np.ndarray
    comparator_loss: float
    converged: bool
    residual: float

    def __float__(self) -> float:
        return self.value


def window_at(history: Sequence[JointDecision], t: int, h: int) -> List[JointDecision]:
    """x_{t-h:t} from ``history``, padded on the left with the first decision."""
    return [history[max(s, 0)] for s in range(t - h, t + 1)]


def eval_multiagent_regret(
    loss_history: Sequence,
    decision_history: Sequence[JointDecision],
    comparator_oracle: BestInHindsightOracle,
) -> RegretMeasurement:
    """(1/T)[sum_t l_t(x_{t-h:t}) - min_x sum_t l_bar_t(x)].

    Losses are ``Quadratic`` (no memory) or ``QuadraticMemoryLoss``.
    """
    T = len(loss_history)
    if T == 0 or len(decision_history) != T:
        raise InsufficientHistoryError(f"Need matching non-empty histories, got {T} losses and {len(decision_history)} decisions.")
    played = 0.0
    total = None
    for t, loss in enumerate(loss_history):
        if isinstance(loss, QuadraticMemoryLoss):
            played += loss(window_at(decision_history, t, loss.h))
            collapsed = loss.collapse()
        else:
            played += loss(decision_history[t].concat())
            collapsed = loss
        total = collapsed if total is None else total + collapsed
    best = comparator_oracle.minimize(total)
    return RegretMeasurement(
        value=(played - best.value) / T,
        played=played,
        comparator=best.minimizer,
        comparator_loss=best.value,
        converged=best.converged,
        residual=best.residual,
    )


@dataclass(frozen=True, eq=False)
class OcomHistory:
    decisions: List[JointDecision]
    learners: list
    played: np.ndarray


def play_ocom(learners: Sequence, losses: Sequence[QuadraticMemoryLoss]) -> OcomHistory:
    """Run the memory protocol over a fixed loss sequence."""
    learners = list(learners)
    decisions: List[JointDecision] = []
    played = np.zeros(len(losses))
    for t, loss in enumerate(losses):
        decisions.append(JointDecision.of(learners))
        window = window_at(decisions, t, loss.h)
        played[t] = loss(window)
        _, learners = multiplayer_ocom_round(learners, loss.h, window, loss.window_gradients)
    return OcomHistory(decisions=decisions, learners=learners, played=played)
