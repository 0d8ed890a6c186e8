"""Learned controllers running on a plant pre-stabilized by a shared linear gain."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics.costs import QuadCost
from ..dynamics.linear_system import LinearSystem, StrongStabilityCert
from ..policies.linear_policies import LinearFeedback


@dataclass(frozen=True, eq=False)
class StabilizedPlant:
    """Raw plant, shared baseline gain and the closed loop A - BK.

    Applied control is -K x_t + u, where u is what the learners output.
    """

    raw: LinearSystem
    baseline: LinearFeedback
    closed: LinearSystem
    cert: StrongStabilityCert

    @property
    def k(self) -> int:
        return self.raw.k

    def total_control(self, x, u) -> np.ndarray:
        return -self.baseline.K @ np.asarray(x, dtype=float) + np.asarray(u, dtype=float)

    def step(self, x, u, w) -> np.ndarray:
        """One closed-loop step; equals the raw plant under the total control."""
        return self.closed.A @ x + self.closed.B @ u + w

    def wrap_cost(self, cost: QuadCost) -> QuadCost:
        """Re-express c(x, -Kx + u) as a quadratic in (x, u)."""

        def rewrite(Q, R, N):
            K = self.baseline.K
            return (
                Q + K.T @ R @ K - N @ K - K.T @ N.T,
                R,
                N - K.T @ R,
            )

        Q, R, N = rewrite(cost.Q, cost.R, cost.cross)
        overrides = {}
        for t, override in cost.overrides.items():
            Q_t = np.atleast_2d(np.asarray(override[0], dtype=float))
            R_t = np.atleast_2d(np.asarray(override[1], dtype=float))
            N_t = np.atleast_2d(np.asarray(override[2], dtype=float)) if len(override) > 2 else cost.cross
            overrides[t] = rewrite(Q_t, R_t, N_t)
        return QuadCost(Q, R, N, overrides)


def stabilize_and_wrap(sys: LinearSystem, K) -> StabilizedPlant:
    """Close the loop with ``K`` (a LinearFeedback or matrix); raise if not stabilizing."""
    baseline = K if isinstance(K, LinearFeedback) else LinearFeedback(K)
    cert = baseline.certify(sys)
    closed = sys.with_dynamics(baseline.closed_loop(sys))
    return StabilizedPlant(raw=sys, baseline=baseline, closed=closed, cert=cert)
