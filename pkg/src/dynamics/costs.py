"""Quadratic stage costs c(x, u) = x'Qx + 2x'Nu + u'Ru."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Tuple

import numpy as np

from ..errors import DimensionError


@dataclass(frozen=True, eq=False)
class QuadCost:
    """Positive semidefinite quadratic cost; ``N`` is an optional cross term.

    ``overrides`` maps a step index to a (Q, R) or (Q, R, N) tuple used at
    that step only.
    """

    Q: np.ndarray
    R: np.ndarray
    N: Optional[np.ndarray] = None
    overrides: Mapping[int, Tuple[np.ndarray, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        if Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise DimensionError(f"Q and R must be square, got {Q.shape} and {R.shape}.")
        N = None
        if self.N is not None:
            N = np.atleast_2d(np.asarray(self.N, dtype=float))
            if N.shape != (Q.shape[0], R.shape[0]):
                raise DimensionError(f"N must have shape {(Q.shape[0], R.shape[0])}, got {N.shape}.")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "N", N)

    @classmethod
    def identity(cls, d_x: int, d_u: int, q_scale: float = 1.0, r_scale: float = 1.0) -> "QuadCost":
        return cls(q_scale * np.eye(d_x), r_scale * np.eye(d_u))

    @property
    def d_x(self) -> int:
        return self.Q.shape[0]

    @property
    def d_u(self) -> int:
        return self.R.shape[0]

    @property
    def cross(self) -> np.ndarray:
        return np.zeros((self.d_x, self.d_u)) if self.N is None else self.N

    def at(self, t: int) -> "QuadCost":
        """Cost in force at step ``t``."""
        if t in self.overrides:
            override = self.overrides[t]
            N = override[2] if len(override) > 2 else self.N
            return QuadCost(override[0], override[1], N)
        return self

    def joint_matrix(self) -> np.ndarray:
        """[[Q, N], [N', R]], the Hessian / 2 in the stacked variable (x, u)."""
        return np.block([[self.Q, self.cross], [self.cross.T, self.R]])

    @property
    def constant(self) -> float:
        """C with c(x, u) <= C D^2 whenever ||x||, ||u|| <= D."""
        if self.N is None:
            return float(np.max(np.linalg.eigvalsh(self.Q)) + np.max(np.linalg.eigvalsh(self.R)))
        return float(2.0 * np.max(np.linalg.eigvalsh(self.joint_matrix())))

    def _check(self, x: np.ndarray, u: np.ndarray) -> None:
        if x.shape[-1] != self.d_x or u.shape[-1] != self.d_u:
            raise DimensionError(
                f"Cost expects x in R^{self.d_x} and u in R^{self.d_u}, got {x.shape} and {u.shape}."
            )

    def __call__(self, x, u) -> float:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check(x, u)
        value = x @ self.Q @ x + u @ self.R @ u
        if self.N is not None:
            value += 2.0 * x @ self.N @ u
        return float(value)

    def gradient(self, x, u) -> Tuple[np.ndarray, np.ndarray]:
        """(dc/dx, dc/du)."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        self._check(x, u)
        grad_x = 2.0 * (self.Q @ x)
        grad_u = 2.0 * (self.R @ u)
        if self.N is not None:
            grad_x += 2.0 * (self.N @ u)
            grad_u += 2.0 * (self.N.T @ x)
        return grad_x, grad_u
