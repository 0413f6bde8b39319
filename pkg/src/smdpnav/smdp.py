"""Core SMDP types: poses, actions, episode records and time-indexed discounting.

Every decision in the navigation SMDP lasts a real-valued duration ``tau``.
Rewards collected after ``z`` seconds are weighted by ``gamma ** z`` in
``smdp-time`` mode, or by ``gamma ** j`` (``j`` decisions later) in
``per-step`` mode, which is the lifted-MDP ablation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

SMDP_TIME = "smdp-time"
PER_STEP = "per-step"
DISCOUNT_MODES = (SMDP_TIME, PER_STEP)

ARRIVED = "arrived"
COLLIDED = "collided"
TIMEOUT = "timeout"
TERMINAL_KINDS = (ARRIVED, COLLIDED, TIMEOUT)


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    a = math.remainder(theta, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class VirtualAction:
    """A point (v_tp, omega_tp) in trajectory-parameter space."""

    v_tp: float
    omega_tp: float


@dataclass(frozen=True)
class ExecutableAction:
    """Velocity command (v, omega) held for ``d`` seconds."""

    v: float
    omega: float
    d: float

    def __post_init__(self):
        if not all(math.isfinite(c) for c in (self.v, self.omega, self.d)):
            raise ValueError(f"non-finite action {self}")
        if self.v < 0.0:
            raise ValueError(f"negative translational velocity {self.v}")
        if self.d <= 0.0:
            raise ValueError(f"non-positive duration {self.d}")


@dataclass(frozen=True)
class DiscountSpec:
    gamma: float = 0.99
    mode: str = SMDP_TIME

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.mode not in DISCOUNT_MODES:
            raise ValueError(f"unknown discount mode {self.mode!r}")

    def step_weights(self, taus) -> np.ndarray:
        """Per-decision weights linking decision i to decision i+1."""
        taus = np.asarray(taus, dtype=np.float64)
        if self.mode == SMDP_TIME:
            return np.power(self.gamma, taus)
        return np.full(taus.shape, self.gamma)


def discount_weight(spec: DiscountSpec, elapsed_seconds: float, elapsed_steps: int) -> float:
    if elapsed_seconds < 0 or elapsed_steps < 0:
        raise ValueError("elapsed time and steps must be non-negative")
    if spec.mode == SMDP_TIME:
        return spec.gamma ** float(elapsed_seconds)
    return spec.gamma ** int(elapsed_steps)


@dataclass
class StepRecord:
    observation: object
    raw_action: np.ndarray
    reward: float
    tau: float
    value_estimate: float
    log_prob: float
    # executed command, kept for logging and rendering
    action: Optional[ExecutableAction] = None
    pose: Optional[Pose] = None


@dataclass
class EpisodeBuffer:
    steps: List[StepRecord] = field(default_factory=list)
    terminal_kind: Optional[str] = None
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None
    # set when the episode was cut by the epoch step budget rather than T_m
    truncated: bool = False

    def __len__(self):
        return len(self.steps)

    def append(self, record: StepRecord) -> None:
        if self.terminal_kind is not None:
            raise RuntimeError("cannot append to a terminated episode")
        self.steps.append(record)

    @property
    def rewards(self) -> np.ndarray:
        return np.array([s.reward for s in self.steps], dtype=np.float64)

    @property
    def taus(self) -> np.ndarray:
        return np.array([s.tau for s in self.steps], dtype=np.float64)

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value_estimate for s in self.steps], dtype=np.float64)

    @property
    def times(self) -> np.ndarray:
        """Decision times t_0 = 0, t_i = sum of the first i durations (length n+1)."""
        t = np.zeros(len(self.steps) + 1)
        np.cumsum(self.taus, out=t[1:])
        return t

    @property
    def finalized(self) -> bool:
        return self.terminal_kind is not None and self.advantages is not None

    def terminate(self, kind: str) -> None:
        if kind not in TERMINAL_KINDS:
            raise ValueError(f"unknown terminal kind {kind!r}")
        self.terminal_kind = kind


def discounted_return(episode: EpisodeBuffer, start_index: int, spec: DiscountSpec) -> float:
    """Direct sum of discounted rewards from ``start_index`` to the episode end."""
    n = len(episode)
    if not 0 <= start_index < n:
        raise IndexError(f"start index {start_index} outside episode of length {n}")
    rewards = episode.rewards
    times = episode.times
    total = 0.0
    for j in range(n - start_index):
        w = discount_weight(spec, times[start_index + j] - times[start_index], j)
        total += w * rewards[start_index + j]
    return total


def discounted_returns(rewards: Sequence[float], taus: Sequence[float], spec: DiscountSpec,
                       last_value: float = 0.0) -> np.ndarray:
    """All-suffix returns by backward recursion R_i = r_i + w_i R_{i+1}."""
    rewards = np.asarray(rewards, dtype=np.float64)
    weights = spec.step_weights(taus)
    out = np.empty_like(rewards)
    acc = float(last_value)
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + weights[i] * acc
        out[i] = acc
    return out
