"""Epoch-synchronous PPO training with variable-duration (SMDP) advantages.

Each epoch every worker owns one environment and a random stream seeded by
``(seed, epoch, worker)``; all workers act under the same frozen parameter
snapshot.  Workers are stepped in lockstep inside one process so the policy
forward pass is batched across them; results depend only on the seed, the
config and the worker count.  Finished episodes are merged in worker order
and consumed by one full-buffer update phase.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import torch

from .actions import activate, activate_relu, direct_3d, to_executable
from .config import TrainConfig
from .egae import advantages_from_arrays
from .policy import (PolicyNet, ValueNet, build_networks, load_checkpoint, ppo_policy_loss,
                     sample_raw_action, save_checkpoint, value_loss)
from .scenarios import Scenario, generate_scenario
from .sim.env import ARRIVED, COLLIDED, NONE, Simulator
from .sim.sensors import LocalMapBuilder, Observation
from .smdp import TIMEOUT, EpisodeBuffer, ExecutableAction, Pose, StepRecord, discounted_returns

log = logging.getLogger(__name__)

METRIC_FIELDS = ["epoch", "env_steps", "episodes", "mean_return", "success_rate", "collision_rate",
                 "mean_episode_seconds", "mean_episode_steps", "mean_fst", "policy_loss", "value_loss",
                 "ratio_mean", "first_ratio_max_dev", "clip_fraction", "mean_advantage"]


class TrainingDiverged(RuntimeError):
    pass


def torch_dtype(cfg: TrainConfig):
    return torch.float64 if cfg.dtype == "float64" else torch.float32


def convert_action(raw, cfg: TrainConfig) -> ExecutableAction:
    """Raw network sample -> executable command, honoring the ablation flags."""
    if not cfg.use_2d_to_3d:
        action = direct_3d(raw, cfg.limits, cfg.d_max)
    else:
        virtual = activate(raw) if cfg.use_elu else activate_relu(raw)
        action = to_executable(virtual, cfg.limits)
    if cfg.force_duration is not None:
        action = ExecutableAction(action.v, action.omega, float(cfg.force_duration))
    return action


class NavEnv:
    """One robot in one scenario stream; resets regenerate the scenario."""

    def __init__(self, cfg: TrainConfig, builder: Optional[LocalMapBuilder] = None,
                 scenario_fn: Optional[Callable[[np.random.Generator], Scenario]] = None):
        self.cfg = cfg
        self.spec = cfg.scenario_spec
        # draws the next scenario from the worker stream; defaults to the config's family
        self.scenario_fn = scenario_fn or (lambda rng: generate_scenario(self.spec, int(rng.integers(2 ** 62))))
        self.builder = builder or LocalMapBuilder(cfg.local_map_size, cfg.local_map_resolution, cfg.lidar,
                                                  cfg.robot_radius)
        self.sim: Optional[Simulator] = None
        self.scenario: Optional[Scenario] = None
        self.pose: Optional[Pose] = None
        self.goal = None
        self.observation: Optional[Observation] = None

    def reset(self, rng: np.random.Generator, scenario: Optional[Scenario] = None) -> Observation:
        if scenario is None:
            scenario = self.scenario_fn(rng)
        if self.scenario is None or scenario.world is not self.scenario.world:
            self.sim = Simulator(scenario.world, self.cfg.robot, self.cfg.rewards, self.cfg.lidar,
                                 builder=self.builder)
        self.scenario = scenario
        self.pose, self.goal = scenario.start, scenario.goal
        self.observation = self.sim.observe(self.pose, self.goal)
        return self.observation

    def step(self, action: ExecutableAction):
        out = self.sim.step(self.pose, self.goal, action, self.cfg.mode)
        self.pose = out.pose
        self.observation = out.next_observation
        return out


def _obs_batch(observations: Sequence[Observation], dtype):
    maps = torch.as_tensor(np.stack([o.local_map for o in observations]), dtype=dtype)
    goals = torch.as_tensor(np.stack([o.goal_rel for o in observations]), dtype=dtype)
    return maps, goals


def finalize_episode(ep: EpisodeBuffer, kind: str, cfg: TrainConfig, last_value: float = 0.0) -> EpisodeBuffer:
    """Terminate with successor value 0 (or ``last_value`` when bootstrapping) and fill advantages/returns."""
    ep.terminate(kind)
    est = cfg.estimator_config
    ep.advantages = advantages_from_arrays(ep.rewards, ep.taus, ep.values, est, last_value)
    ep.returns = discounted_returns(ep.rewards, ep.taus, est.effective_discount, last_value)
    return ep


@dataclass
class ExperienceBuffer:
    episodes: List[EpisodeBuffer] = field(default_factory=list)

    def __len__(self):
        return sum(len(e) for e in self.episodes)

    def clear(self):
        self.episodes.clear()

    def steps(self):
        for ep in self.episodes:
            yield from ep.steps

    def arrays(self, dtype=torch.float32):
        steps = list(self.steps())
        maps, goals = _obs_batch([s.observation for s in steps], dtype)
        raws = torch.as_tensor(np.stack([s.raw_action for s in steps]), dtype=torch.float64)
        old_lp = torch.as_tensor([s.log_prob for s in steps], dtype=torch.float64)
        adv = torch.as_tensor(np.concatenate([e.advantages for e in self.episodes]), dtype=torch.float64)
        ret = torch.as_tensor(np.concatenate([e.returns for e in self.episodes]), dtype=torch.float64)
        return maps, goals, raws, old_lp, adv, ret


def worker_budgets(total: int, n_workers: int) -> List[int]:
    base, extra = divmod(total, n_workers)
    return [base + (1 if w < extra else 0) for w in range(n_workers)]


def rollout_epoch(cfg: TrainConfig, policy: PolicyNet, value: ValueNet, envs: Sequence[NavEnv], epoch: int,
                  budget: Optional[int] = None) -> ExperienceBuffer:
    """Collect ``budget`` (default ``steps_per_epoch``) decisions across the workers."""
    budget = cfg.steps_per_epoch if budget is None else budget
    n = len(envs)
    budgets = worker_budgets(budget, n)
    rngs = [np.random.default_rng([cfg.seed, epoch, w]) for w in range(n)]
    dtype = next(policy.parameters()).dtype
    for env, rng in zip(envs, rngs):
        env.reset(rng)
    current = [EpisodeBuffer() for _ in range(n)]
    done_eps: List[List[EpisodeBuffer]] = [[] for _ in range(n)]
    used = [0] * n
    while True:
        active = [w for w in range(n) if used[w] < budgets[w]]
        if not active:
            break
        maps, goals = _obs_batch([envs[w].observation for w in active], dtype)
        with torch.no_grad():
            means, log_stds = policy(maps, goals)
            values = value(maps, goals)
        for j, w in enumerate(active):
            env, rng = envs[w], rngs[w]
            raw, logp = sample_raw_action(means[j].double().numpy(), log_stds[j].double().numpy(), rng)
            action = convert_action(raw, cfg)
            pose = env.pose
            obs = env.observation
            out = env.step(action)
            current[w].append(StepRecord(obs, raw, out.reward, out.tau, float(values[j]), logp, action, pose))
            used[w] += 1
            kind = {ARRIVED: ARRIVED, COLLIDED: COLLIDED}.get(out.event)
            if kind is None and len(current[w]) >= cfg.max_episode_steps:
                kind = TIMEOUT
            if kind is not None:
                last = 0.0
                if kind == TIMEOUT and cfg.bootstrap_on_timeout:
                    last = _value_of(value, env.observation, dtype)
                done_eps[w].append(finalize_episode(current[w], kind, cfg, last))
                current[w] = EpisodeBuffer()
                if used[w] < budgets[w]:
                    env.reset(rng)
    for w in range(n):
        if len(current[w]):
            # cut by the step budget: same terminal treatment as a timeout
            last = _value_of(value, envs[w].observation, dtype) if cfg.bootstrap_on_timeout else 0.0
            ep = finalize_episode(current[w], TIMEOUT, cfg, last)
            ep.truncated = True
            done_eps[w].append(ep)
    return ExperienceBuffer([ep for w in range(n) for ep in done_eps[w]])


def _value_of(value: ValueNet, obs: Observation, dtype) -> float:
    with torch.no_grad():
        return float(value(*_obs_batch([obs], dtype))[0])


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def update(cfg: TrainConfig, policy: PolicyNet, value: ValueNet, buffer: ExperienceBuffer,
           policy_opt: torch.optim.Optimizer, value_opt: torch.optim.Optimizer) -> Dict[str, float]:
    """E_pi full-buffer policy iterations, then E_v value iterations.

    Gradients over the whole buffer are accumulated in chunks, which leaves
    the full-batch gradient unchanged while bounding memory.
    """
    if len(buffer) == 0:
        raise ValueError("cannot update from an empty buffer")
    dtype = next(policy.parameters()).dtype
    maps, goals, raws, old_lp, adv, ret = buffer.arrays(dtype)
    n = len(adv)
    mean_adv = float(adv.mean())
    if cfg.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    stats: Dict[str, float] = {"mean_advantage": mean_adv}
    for it in range(cfg.policy_iters):
        policy_opt.zero_grad(set_to_none=False)
        total, ratio_sum, clip_sum, max_dev = 0.0, 0.0, 0.0, 0.0
        for sl in _chunks(n, cfg.chunk_size):
            loss, s = ppo_policy_loss(policy, old_lp[sl], maps[sl], goals[sl], raws[sl], adv[sl], cfg.clip_ratio)
            w = (sl.stop - sl.start) / n
            (loss * w).backward()
            total += loss.item() * w
            ratio_sum += s["ratio_mean"] * w
            clip_sum += s["clip_fraction"] * w
            max_dev = max(max_dev, s["ratio_max_dev"])
        if not math.isfinite(total):
            raise TrainingDiverged(f"non-finite policy loss at iteration {it}: {total}")
        if it == 0:
            stats.update(policy_loss=total, ratio_mean=ratio_sum, first_ratio_max_dev=max_dev,
                         clip_fraction=clip_sum)
        policy_opt.step()
    stats["clip_fraction"] = clip_sum
    for it in range(cfg.value_iters):
        value_opt.zero_grad(set_to_none=False)
        total = 0.0
        for sl in _chunks(n, cfg.chunk_size):
            loss = value_loss(value, maps[sl], goals[sl], ret[sl])
            w = (sl.stop - sl.start) / n
            (loss * w).backward()
            total += loss.item() * w
        if not math.isfinite(total):
            raise TrainingDiverged(f"non-finite value loss at iteration {it}: {total}")
        if it == 0:
            stats["value_loss"] = total
        value_opt.step()
    return stats


def episode_metrics(buffer: ExperienceBuffer) -> Dict[str, float]:
    finished = [e for e in buffer.episodes if not e.truncated]
    fsts = [s.action.d for s in buffer.steps() if s.action is not None]
    m = {"episodes": len(finished), "env_steps": len(buffer),
         "mean_fst": float(np.mean(fsts)) if fsts else math.nan}
    if finished:
        m["mean_return"] = float(np.mean([math.fsum(e.rewards) for e in finished]))
        m["success_rate"] = float(np.mean([e.terminal_kind == ARRIVED for e in finished]))
        m["collision_rate"] = float(np.mean([e.terminal_kind == COLLIDED for e in finished]))
        m["mean_episode_seconds"] = float(np.mean([math.fsum(e.taus) for e in finished]))
        m["mean_episode_steps"] = float(np.mean([len(e) for e in finished]))
    else:
        for k in ("mean_return", "success_rate", "collision_rate", "mean_episode_seconds", "mean_episode_steps"):
            m[k] = math.nan
    return m


@dataclass
class TrainResult:
    policy: PolicyNet
    value: ValueNet
    metrics: List[Dict[str, float]]
    checkpoints: List[Path]
    config: TrainConfig


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_metrics(rows: Sequence[Dict[str, float]], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([_format(r.get(k, math.nan)) for k in METRIC_FIELDS])


def read_metrics(path) -> List[Dict[str, float]]:
    with open(path, newline="") as fh:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def make_optimizers(cfg: TrainConfig, policy: PolicyNet, value: ValueNet):
    return (torch.optim.Adam(policy.parameters(), lr=cfg.policy_lr),
            torch.optim.Adam(value.parameters(), lr=cfg.value_lr))


def _configure_torch(cfg: TrainConfig) -> None:
    torch.set_num_threads(cfg.torch_threads)
    torch.use_deterministic_algorithms(True)


def train(cfg: TrainConfig, out_dir=None, resume=None,
          on_epoch: Optional[Callable[[int, Dict[str, float]], None]] = None) -> TrainResult:
    """Alternate rollout and update for ``cfg.epochs`` epochs.

    With ``out_dir`` set, writes ``config.yaml``, ``metrics.csv``,
    ``timing.csv`` and checkpoints ``ckpt_<epoch>.bin`` (plus ``final.bin``).
    A failing phase saves ``failed_<epoch>.bin`` holding the last good state
    before re-raising; pass it as ``resume`` to continue.
    """
    from .config import dump_config

    _configure_torch(cfg)
    dtype = torch_dtype(cfg)
    net_cfg = cfg.net_config
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_config(cfg, out / "config.yaml")
    policy, value = build_networks(net_cfg, cfg.seed, dtype)
    policy_opt, value_opt = make_optimizers(cfg, policy, value)
    start_epoch, env_steps, metrics = 0, 0, []
    if resume is not None:
        ck = load_checkpoint(resume, net_cfg)
        policy.load_state_dict(ck.policy.state_dict())
        value.load_state_dict(ck.value.state_dict())
        if "policy" in ck.optimizer_states:
            policy_opt.load_state_dict(ck.optimizer_states["policy"])
            value_opt.load_state_dict(ck.optimizer_states["value"])
        start_epoch, env_steps = ck.epoch, ck.step
        metrics = list(ck.extra.get("metrics", []))
    extra = lambda: {"config": cfg.to_dict(), "metrics": metrics}
    checkpoints: List[Path] = []

    def save(name, epoch):
        if out is None:
            return None
        p = save_checkpoint(out / name, policy, value, step=env_steps, epoch=epoch,
                            optimizers={"policy": policy_opt, "value": value_opt}, extra=extra())
        checkpoints.append(p)
        return p

    if start_epoch == 0:
        save("ckpt_0000.bin", 0)
    builder = LocalMapBuilder(cfg.local_map_size, cfg.local_map_resolution, cfg.lidar, cfg.robot_radius)
    envs = [NavEnv(cfg, builder) for _ in range(cfg.n_workers)]
    timing = []
    for epoch in range(start_epoch, cfg.epochs):
        t0 = time.perf_counter()
        snapshot = _snapshot_state(policy, value, policy_opt, value_opt)
        try:
            buffer = rollout_epoch(cfg, policy, value, envs, epoch)
            t1 = time.perf_counter()
            stats = update(cfg, policy, value, buffer, policy_opt, value_opt)
        except Exception:
            _restore_state(snapshot, policy, value, policy_opt, value_opt)
            save(f"failed_{epoch:04d}.bin", epoch)
            log.exception("epoch %d failed; state saved for resume", epoch)
            raise
        t2 = time.perf_counter()
        env_steps += len(buffer)
        row = {"epoch": epoch + 1, **episode_metrics(buffer), **stats}
        row["env_steps"] = env_steps
        metrics.append(row)
        timing.append({"epoch": epoch + 1, "rollout_s": t1 - t0, "update_s": t2 - t1})
        buffer.clear()
        log.info("epoch %d: return %.1f SR %.3f steps %d (%.1fs)", epoch + 1, row["mean_return"],
                 row["success_rate"], env_steps, t2 - t0)
        if on_epoch is not None:
            on_epoch(epoch + 1, row)
        if out is not None:
            write_metrics(metrics, out / "metrics.csv")
            _write_timing(timing, out / "timing.csv")
            if (epoch + 1) % cfg.checkpoint_every == 0:
                save(f"ckpt_{epoch + 1:04d}.bin", epoch + 1)
    if out is not None:
        write_metrics(metrics, out / "metrics.csv")
        save("final.bin", max(cfg.epochs, start_epoch))
    return TrainResult(policy, value, metrics, checkpoints, cfg)


def _snapshot_state(policy, value, popt, vopt):
    import copy

    return copy.deepcopy((policy.state_dict(), value.state_dict(), popt.state_dict(), vopt.state_dict()))


def _restore_state(snap, policy, value, popt, vopt):
    policy.load_state_dict(snap[0])
    value.load_state_dict(snap[1])
    popt.load_state_dict(snap[2])
    vopt.load_state_dict(snap[3])


def _write_timing(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "rollout_s", "update_s"])
        w.writeheader()
        w.writerows(rows)
