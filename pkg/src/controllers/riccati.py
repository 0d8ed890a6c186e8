"""LQR and H-infinity state-feedback baselines by Riccati fixed-point iteration."""

from __future__ import annotations

import logging
from typing import Optional, Tuple

import numpy as np

from ..dynamics.linear_system import LinearSystem, spectral_radius
from ..errors import InfeasibleError, NotStabilizableError
from ..policies.linear_policies import LinearFeedback

logger = logging.getLogger(__name__)

RICCATI_TOL = 1e-10
RICCATI_MAX_ITER = 100_000
DIVERGENCE_NORM = 1e12
GAMMA_TOL = 1e-3
HINF_MAX_ITER = 10_000


def _weights(sys: LinearSystem, Q, R) -> Tuple[np.ndarray, np.ndarray]:
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    if Q.shape != (sys.d_x, sys.d_x) or R.shape != (sys.d_u, sys.d_u):
        raise ValueError(f"Q must be {sys.d_x}x{sys.d_x} and R {sys.d_u}x{sys.d_u}, got {Q.shape} and {R.shape}.")
    return Q, R


def _game_riccati(A, B, Q, R, gamma: float, max_iter: int = HINF_MAX_ITER) -> Optional[np.ndarray]:
    """P <- Q + A'P (I + (B R^-1 B' - gamma^-2 I) P)^-1 A; None when infeasible.

    gamma = inf is the LQR recursion.
    """
    n = A.shape[0]
    inv_gamma_sq = 0.0 if np.isinf(gamma) else gamma**-2
    coupling = B @ np.linalg.solve(R, B.T) - inv_gamma_sq * np.eye(n)
    P = Q.copy()
    for _ in range(max_iter):
        if inv_gamma_sq and np.min(np.linalg.eigvalsh(np.eye(n) - inv_gamma_sq * P)) <= 0.0:
            return None
        try:
            P_next = Q + A.T @ P @ np.linalg.solve(np.eye(n) + coupling @ P, A)
        except np.linalg.LinAlgError:
            return None
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)) or np.linalg.norm(P_next) > DIVERGENCE_NORM:
            return None
        if np.linalg.norm(P_next - P) <= RICCATI_TOL * max(np.linalg.norm(P_next), 1.0):
            if inv_gamma_sq and np.min(np.linalg.eigvalsh(np.eye(n) - inv_gamma_sq * P_next)) <= 0.0:
                return None
            return P_next
        P = P_next
    return None


def _gain(A, B, R, P, gamma: float) -> np.ndarray:
    """K = R^-1 B' P (I + (B R^-1 B' - gamma^-2 I) P)^-1 A."""
    n = A.shape[0]
    inv_gamma_sq = 0.0 if np.isinf(gamma) else gamma**-2
    coupling = B @ np.linalg.solve(R, B.T) - inv_gamma_sq * np.eye(n)
    return np.linalg.solve(R, B.T @ P @ np.linalg.solve(np.eye(n) + coupling @ P, A))


def lqr_synthesize(sys: LinearSystem, Q, R) -> LinearFeedback:
    """Infinite-horizon discrete LQR gain, u = -K x."""
    Q, R = _weights(sys, Q, R)
    A, B = sys.A, sys.B
    P = Q.copy()
    for iteration in range(1, RICCATI_MAX_ITER + 1):
        BtPA = B.T @ P @ A
        P_next = Q + A.T @ P @ A - BtPA.T @ np.linalg.solve(R + B.T @ P @ B, BtPA)
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise NotStabilizableError(f"Riccati iteration diverged at step {iteration}.")
        if np.linalg.norm(P_next - P) <= RICCATI_TOL * max(np.linalg.norm(P_next), 1.0):
            P = P_next
            break
        P = P_next
    else:
        raise NotStabilizableError(f"Riccati iteration did not converge in {RICCATI_MAX_ITER} steps.")
    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    rho = spectral_radius(A - B @ K)
    if rho >= 1.0:
        raise NotStabilizableError(f"LQR gain leaves rho(A - BK) = {rho:.6g}.")
    logger.info("LQR converged in %d iterations, closed-loop rho=%.4f", iteration, rho)
    return LinearFeedback(K)


def hinf_gain(sys: LinearSystem, Q, R, gamma: float) -> Optional[LinearFeedback]:
    """State-feedback gain at a fixed attenuation level, or None if infeasible there."""
    Q, R = _weights(sys, Q, R)
    P = _game_riccati(sys.A, sys.B, Q, R, gamma)
    if P is None:
        return None
    K = _gain(sys.A, sys.B, R, P, gamma)
    if spectral_radius(sys.A - sys.B @ K) >= 1.0:
        return None
    return LinearFeedback(K)


def hinf_synthesize(
    sys: LinearSystem,
    Q,
    R,
    gamma_range: Tuple[float, float] = (0.1, 1e4),
    tol: float = GAMMA_TOL,
) -> LinearFeedback:
    """Bisect for the smallest feasible attenuation level and return its gain."""
    low, high = float(gamma_range[0]), float(gamma_range[1])
    best = hinf_gain(sys, Q, R, high)
    if best is None:
        raise InfeasibleError(f"No feasible attenuation level in [{low:g}, {high:g}].", gamma_range=(low, high))
    lowest = hinf_gain(sys, Q, R, low)
    if lowest is not None:
        logger.info("H-inf feasible at the lower end gamma=%.4g", low)
        return lowest
    while high - low > tol:
        mid = 0.5 * (low + high)
        candidate = hinf_gain(sys, Q, R, mid)
        if candidate is None:
            low = mid
        else:
            high, best = mid, candidate
    logger.info("H-inf attenuation level gamma=%.4g", high)
    return best
