"""Advantage estimation for variable-duration episodes.

The TD residual of decision i discounts the successor value by the weight
``w_i`` (``gamma ** tau_i`` in smdp-time mode, ``gamma`` per step otherwise):

    delta_i = r_i + w_i * V(s_{i+1}) - V(s_i)

and the lambda-mixture of k-step advantages collapses to

    A_i = sum_j  (w_i * ... * w_{i+j-1}) * lambda**j * delta_{i+j}

computed below in one backward pass as ``A_i = delta_i + w_i * lambda * A_{i+1}``.
Successor values past the end of an episode are zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .smdp import PER_STEP, DiscountSpec, EpisodeBuffer

EGAE = "egae"
GAE_PER_STEP = "gae-per-step"
TD0 = "td0"
ESTIMATOR_KINDS = (EGAE, GAE_PER_STEP, TD0)


@dataclass(frozen=True)
class EstimatorConfig:
    lam: float = 0.95
    discount: DiscountSpec = field(default_factory=DiscountSpec)
    kind: str = EGAE

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    @property
    def effective_discount(self) -> DiscountSpec:
        """Per-step GAE ignores durations regardless of the configured mode."""
        if self.kind == GAE_PER_STEP:
            return DiscountSpec(self.discount.gamma, PER_STEP)
        return self.discount


def _values_of(episode: EpisodeBuffer, value_fn):
    if value_fn is None:
        return episode.values
    if callable(value_fn):
        return np.array([float(value_fn(s.observation)) for s in episode.steps])
    values = np.asarray(value_fn, dtype=np.float64)
    if values.shape != (len(episode),):
        raise ValueError(f"expected {len(episode)} values, got shape {values.shape}")
    return values


def td_residuals(rewards, taus, values, discount: DiscountSpec, last_value: float = 0.0) -> np.ndarray:
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    next_values = np.append(values[1:], last_value)
    return rewards + discount.step_weights(taus) * next_values - values


def td_residual(episode: EpisodeBuffer, i: int, value_fn=None, discount: DiscountSpec = DiscountSpec()) -> float:
    """delta_i for one decision; ``value_fn`` may be None (stored estimates), an array, or a callable."""
    n = len(episode)
    if not 0 <= i < n:
        raise IndexError(f"index {i} outside episode of length {n}")
    values = _values_of(episode, value_fn)
    next_v = values[i + 1] if i + 1 < n else 0.0
    w = discount.step_weights([episode.steps[i].tau])[0]
    return episode.steps[i].reward + w * next_v - values[i]


def advantages_from_arrays(rewards, taus, values, config: EstimatorConfig, last_value: float = 0.0) -> np.ndarray:
    discount = config.effective_discount
    deltas = td_residuals(rewards, taus, values, discount, last_value)
    if config.kind == TD0:
        return deltas
    decay = discount.step_weights(taus) * config.lam
    out = np.empty_like(deltas)
    acc = 0.0
    for i in range(len(deltas) - 1, -1, -1):
        acc = deltas[i] + decay[i] * acc
        out[i] = acc
    return out


def egae_advantages(episode: EpisodeBuffer, value_fn=None, config: EstimatorConfig = EstimatorConfig()) -> np.ndarray:
    if episode.terminal_kind is None:
        raise ValueError("episode must be terminated before estimating advantages")
    return advantages_from_arrays(episode.rewards, episode.taus, _values_of(episode, value_fn), config)
