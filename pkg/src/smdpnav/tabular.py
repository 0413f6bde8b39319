"""Finite SMDPs with exact values, used to check advantage estimators for bias.

Termination is an absorbing zero-reward state, encoded as next state ``-1``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .egae import EstimatorConfig, advantages_from_arrays
from .smdp import DiscountSpec

TERMINAL = -1

# (probability, next state, duration, reward)
Outcome = Tuple[float, int, float, float]


@dataclass
class TabularSMDP:
    n_states: int
    n_actions: int
    outcomes: Dict[Tuple[int, int], List[Outcome]]
    gamma: float
    start_state: int = 0

    def __post_init__(self):
        for s in range(self.n_states):
            for a in range(self.n_actions):
                outs = self.outcomes.get((s, a))
                if not outs:
                    raise ValueError(f"no outcomes for state {s}, action {a}")
                total = math.fsum(o[0] for o in outs)
                if abs(total - 1.0) > 1e-12:
                    raise ValueError(f"probabilities at ({s}, {a}) sum to {total}")
                for p, nxt, d, _ in outs:
                    if p < 0 or d <= 0 or not (nxt == TERMINAL or 0 <= nxt < self.n_states):
                        raise ValueError(f"bad outcome {(p, nxt, d)} at ({s}, {a})")
        # cumulative tables for fast sampling
        self._cum = {k: np.cumsum([o[0] for o in v]) for k, v in self.outcomes.items()}


def exact_values(smdp: TabularSMDP, policy) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve V = b + M V for the policy, then Q and A = Q - V."""
    pi = np.asarray(policy, dtype=np.float64)
    n, m = smdp.n_states, smdp.n_actions
    if pi.shape != (n, m) or np.any(pi < 0) or not np.allclose(pi.sum(axis=1), 1.0, atol=1e-12):
        raise ValueError("policy must be an (n_states, n_actions) stochastic matrix")
    # per action: expected immediate reward and discounted successor matrix
    r_sa = np.zeros((n, m))
    p_sa = np.zeros((n, m, n))
    for (s, a), outs in smdp.outcomes.items():
        for p, nxt, d, r in outs:
            r_sa[s, a] += p * r
            if nxt != TERMINAL:
                p_sa[s, a, nxt] += p * smdp.gamma ** d
    b = np.einsum("sa,sa->s", pi, r_sa)
    M = np.einsum("sa,sat->st", pi, p_sa)
    if n and np.max(np.abs(np.linalg.eigvals(M))) >= 1.0 - 1e-12:
        raise ValueError("policy does not terminate: discounted transition operator is not contracting")
    V = np.linalg.solve(np.eye(n) - M, b)
    Q = r_sa + p_sa @ V
    return V, Q, Q - V[:, None]


def sample_episode(smdp: TabularSMDP, policy, rng: np.random.Generator, max_steps: int = 10_000):
    """Return arrays (states, actions, durations, rewards) of one episode."""
    pi_cum = np.cumsum(np.asarray(policy, dtype=np.float64), axis=1)
    states, actions, durs, rews = [], [], [], []
    s = smdp.start_state
    while s != TERMINAL:
        if len(states) >= max_steps:
            raise RuntimeError("episode exceeded max_steps; policy may not terminate")
        a = min(int(np.searchsorted(pi_cum[s], rng.random(), side="right")), smdp.n_actions - 1)
        cum = smdp._cum[(s, a)]
        k = min(int(np.searchsorted(cum, rng.random(), side="right")), len(cum) - 1)
        _, nxt, d, r = smdp.outcomes[(s, a)][k]
        states.append(s)
        actions.append(a)
        durs.append(d)
        rews.append(r)
        s = nxt
    return np.array(states), np.array(actions), np.array(durs, dtype=float), np.array(rews, dtype=float)


@dataclass
class BiasRow:
    state: int
    action: int
    exact_advantage: float
    mean_estimate: float
    std_error: float
    n: int
    # estimate minus the policy-weighted mean estimate at the same state
    centered_estimate: float
    centered_std_error: float

    @property
    def error(self) -> float:
        return self.mean_estimate - self.exact_advantage

    @property
    def centered_error(self) -> float:
        return self.centered_estimate - self.exact_advantage


def bias_experiment(smdp: TabularSMDP, policy, value_fn: Sequence[float], config: EstimatorConfig,
                    n_episodes: int, seed: int) -> List[BiasRow]:
    """Monte Carlo mean of the estimator at every visited (state, action).

    ``error`` compares raw means with the exact advantage.  ``centered_error``
    first removes the policy-weighted mean at each state; it is insensitive to
    any state-only offset in the estimate, which is the part that cancels in
    the policy gradient.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    pi = np.asarray(policy, dtype=np.float64)
    v_hat = np.asarray(value_fn, dtype=np.float64)
    _, _, A = exact_values(smdp, pi)
    config = EstimatorConfig(config.lam, DiscountSpec(smdp.gamma, config.discount.mode), config.kind)
    rng = np.random.default_rng(seed)
    n, m = smdp.n_states, smdp.n_actions
    samples: List[List[List[float]]] = [[[] for _ in range(m)] for _ in range(n)]
    for _ in range(n_episodes):
        s, a, d, r = sample_episode(smdp, pi, rng)
        adv = advantages_from_arrays(r, d, v_hat[s], config)
        for si, ai, x in zip(s.tolist(), a.tolist(), adv.tolist()):
            samples[si][ai].append(x)
    mean = np.full((n, m), np.nan)
    var_of_mean = np.full((n, m), np.nan)
    count = np.zeros((n, m), dtype=int)
    for si in range(n):
        for ai in range(m):
            xs = np.asarray(samples[si][ai])
            count[si, ai] = len(xs)
            if len(xs):
                mean[si, ai] = math.fsum(xs) / len(xs)
            if len(xs) > 1:
                var_of_mean[si, ai] = np.var(xs, ddof=1) / len(xs)
    rows = []
    for si in range(n):
        visited = count[si] > 0
        for ai in range(m):
            if count[si, ai] == 0:
                continue
            # centering needs every action with positive probability to be observed
            if np.all(visited | (pi[si] == 0)):
                w = np.where(pi[si] > 0, pi[si], 0.0)
                centered = mean[si, ai] - np.nansum(w * np.where(visited, mean[si], 0.0))
                coeff = -w.copy()
                coeff[ai] += 1.0
                cvar = np.nansum(coeff ** 2 * np.where(visited, var_of_mean[si], 0.0))
            else:
                centered, cvar = math.nan, math.nan
            rows.append(BiasRow(si, ai, float(A[si, ai]), float(mean[si, ai]),
                                float(math.sqrt(var_of_mean[si, ai])) if count[si, ai] > 1 else math.nan,
                                int(count[si, ai]), float(centered), float(math.sqrt(cvar))))
    return rows


BIAS_FIELDS = ["state", "action", "exact_advantage", "mean_estimate", "std_error", "n",
               "centered_estimate", "centered_std_error"]


def write_bias_report(rows: Sequence[BiasRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(BIAS_FIELDS)
        for row in rows:
            w.writerow([getattr(row, f) for f in BIAS_FIELDS])


def example_smdp(gamma: float = 0.9) -> TabularSMDP:
    """Four decision states in a DAG, two actions, two durations per action.

    Each state is visited at most once per episode, so the per-(state, action)
    samples are independent across episodes.
    """
    T = TERMINAL
    outcomes = {
        (0, 0): [(0.6, 1, 0.5, 1.0), (0.4, 2, 2.0, -1.0)],
        (0, 1): [(0.3, 1, 1.5, 0.0), (0.7, 2, 0.3, 2.0)],
        (1, 0): [(0.5, 3, 1.0, 3.0), (0.5, T, 2.5, -2.0)],
        (1, 1): [(0.8, 3, 0.2, 0.5), (0.2, T, 1.0, 4.0)],
        (2, 0): [(0.7, 3, 0.4, -1.0), (0.3, 3, 3.0, 2.0)],
        (2, 1): [(0.5, T, 0.6, 5.0), (0.5, 3, 1.2, -3.0)],
        (3, 0): [(0.5, T, 0.5, 1.0), (0.5, T, 2.0, 6.0)],
        (3, 1): [(0.9, T, 1.0, -2.0), (0.1, T, 0.25, 10.0)],
    }
    return TabularSMDP(4, 2, outcomes, gamma)


EXAMPLE_POLICY = np.array([[0.4, 0.6], [0.7, 0.3], [0.5, 0.5], [0.2, 0.8]])
