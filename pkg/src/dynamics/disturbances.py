"""Oblivious disturbance traces for the simulation harness."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ConfigError, DimensionError

SINE_PHASES = (12.0, 21.0, 3.0, 42.0, 1.0)


class Profile(str, Enum):
    GAUSSIAN = "gaussian"
    RANDOM_WALK = "random_walk"
    SINUSOIDAL = "sinusoidal"
    ZERO = "zero"
    CUSTOM = "custom"


@dataclass(frozen=True, eq=False)
class DisturbanceTrace:
    """Process disturbances ``w`` (T, d_x) and optional per-agent ``e`` (T + 1, d_yi)."""

    w: np.ndarray
    seed: int
    profile: Profile
    e: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self) -> None:
        self.w.setflags(write=False)
        if self.e is not None:
            for block in self.e:
                block.setflags(write=False)

    @property
    def T(self) -> int:
        return self.w.shape[0]

    @property
    def d_x(self) -> int:
        return self.w.shape[1]

    def max_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.w, axis=1))) if self.T else 0.0

    def observation_noise(self, agent: int, d_y: int) -> np.ndarray:
        """e^i trace for ``agent``; zeros when the trace carries none."""
        if self.e is None:
            return np.zeros((self.T + 1, d_y))
        return self.e[agent]


def parse_profile(profile) -> Profile:
    try:
        return Profile(profile)
    except ValueError as exc:
        raise ConfigError(
            f"Unknown disturbance profile {profile!r}; expected one of {[p.value for p in Profile]}."
        ) from exc


def _process_noise(profile: Profile, rng: np.random.Generator, T: int, d_x: int) -> np.ndarray:
    if profile is Profile.GAUSSIAN:
        return rng.standard_normal((T, d_x))
    if profile is Profile.RANDOM_WALK:
        steps = rng.standard_normal((T, d_x))
        steps[0] = 0.0
        return np.cumsum(steps, axis=0)
    if profile is Profile.SINUSOIDAL:
        phases = np.array([SINE_PHASES[i % len(SINE_PHASES)] for i in range(d_x)])
        t = np.arange(T, dtype=float)[:, None]
        return np.sin(2.0 * t + phases[None, :])
    return np.zeros((T, d_x))


def generate_disturbances(
    profile,
    seed: int,
    T: int,
    d_x: int,
    observation_dims: Optional[Sequence[int]] = None,
    observation_scale: float = 0.0,
    custom: Optional[np.ndarray] = None,
) -> DisturbanceTrace:
    """Build the trace as a pure function of (profile, seed, T, dims).

    Process and observation noise use independent child streams of ``seed``.
    """
    profile = parse_profile(profile)
    if T < 1:
        raise ConfigError(f"Horizon T must be >= 1, got {T}.")
    process_seq, observation_seq = np.random.SeedSequence(seed).spawn(2)
    if profile is Profile.CUSTOM:
        if custom is None:
            raise ConfigError("The custom profile needs an explicit disturbance array.")
        w = np.array(custom, dtype=float)
        if w.shape != (T, d_x):
            raise DimensionError(f"Custom disturbances must have shape {(T, d_x)}, got {w.shape}.")
    else:
        w = _process_noise(profile, np.random.default_rng(process_seq), T, d_x)

    e = None
    if observation_dims is not None:
        rng = np.random.default_rng(observation_seq)
        e = tuple(observation_scale * rng.standard_normal((T + 1, d_y)) for d_y in observation_dims)
    return DisturbanceTrace(w=w, seed=seed, profile=profile, e=e)
