"""Policy evaluation, ablation sweeps and their CSV/table reports.

Evaluation runs the policy mean (no sampling noise) for a fixed number of
episodes per scenario family under the 200-decision cap.  Success means
arriving before the cap without touching an obstacle; reach time is the
simulated seconds of successful episodes only.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from .config import TrainConfig, config_from_dict, variant_config, variant_name
from .policy import Checkpoint, PolicyNet, as_batch, load_checkpoint
from .scenarios import Scenario, ScenarioSpec, generate_scenario, load_spec
from .sim.env import ARRIVED, COLLIDED, MODE1, NONE, Simulator, TrajectoryRow
from .sim.sensors import LocalMapBuilder, Observation
from .smdp import TIMEOUT, ExecutableAction

log = logging.getLogger(__name__)

EVAL_CAP = 200
ActFn = Callable[[Observation], ExecutableAction]


@dataclass
class EpisodeResult:
    label: str
    scenario_seed: int
    outcome: str
    decisions: int
    seconds: float
    path_length: float
    mean_fst: float
    rows: List[TrajectoryRow] = field(default_factory=list, repr=False)
    scenario: Optional[Scenario] = field(default=None, repr=False)

    @property
    def success(self) -> bool:
        return self.outcome == ARRIVED


@dataclass
class ScenarioResult:
    label: str
    episodes: List[EpisodeResult]

    @property
    def n(self) -> int:
        return len(self.episodes)

    def _successes(self):
        return [e for e in self.episodes if e.success]

    @property
    def success_rate(self) -> float:
        return sum(e.success for e in self.episodes) / self.n if self.n else math.nan

    @property
    def collision_rate(self) -> float:
        return sum(e.outcome == COLLIDED for e in self.episodes) / self.n if self.n else math.nan

    @property
    def reach_time(self) -> float:
        s = self._successes()
        return math.fsum(e.seconds for e in s) / len(s) if s else math.nan

    @property
    def path_length(self) -> float:
        s = self._successes()
        return math.fsum(e.path_length for e in s) / len(s) if s else math.nan

    @property
    def mean_decisions(self) -> float:
        return math.fsum(e.decisions for e in self.episodes) / self.n if self.n else math.nan

    @property
    def mean_fst(self) -> float:
        vals = [e.mean_fst for e in self.episodes if e.decisions]
        return math.fsum(vals) / len(vals) if vals else math.nan

    def summary(self) -> Dict[str, float]:
        return {"scenario": self.label, "episodes": self.n, "success_rate": self.success_rate,
                "collision_rate": self.collision_rate, "reach_time": self.reach_time,
                "path_length": self.path_length, "mean_decisions": self.mean_decisions,
                "mean_fst": self.mean_fst}


SUMMARY_FIELDS = ["scenario", "episodes", "success_rate", "collision_rate", "reach_time", "path_length",
                  "mean_decisions", "mean_fst"]
EPISODE_FIELDS = ["scenario", "scenario_seed", "outcome", "decisions", "seconds", "path_length", "mean_fst"]


def _cell(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


@dataclass
class EvalReport:
    results: Dict[str, ScenarioResult]
    seed: int
    mode: str

    def summaries(self) -> List[Dict[str, float]]:
        return [r.summary() for r in self.results.values()]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUMMARY_FIELDS)
            for s in self.summaries():
                w.writerow([_cell(s[k]) for k in SUMMARY_FIELDS])
        return path

    def write_episodes_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(EPISODE_FIELDS)
            for r in self.results.values():
                for e in r.episodes:
                    w.writerow([e.label, e.scenario_seed, e.outcome, e.decisions, _cell(e.seconds),
                                _cell(e.path_length), _cell(e.mean_fst)])
        return path

    def table(self) -> str:
        head = f"{'scenario':<10} {'n':>5} {'SR':>6} {'RT(s)':>8} {'length':>8} {'decisions':>9} {'FST':>6}"
        lines = [head, "-" * len(head)]
        for s in self.summaries():
            rt = "/" if math.isnan(s["reach_time"]) else f"{s['reach_time']:.2f}"
            ln = "/" if math.isnan(s["path_length"]) else f"{s['path_length']:.2f}"
            lines.append(f"{s['scenario']:<10} {s['episodes']:>5} {s['success_rate']:>6.3f} {rt:>8} {ln:>8} "
                         f"{s['mean_decisions']:>9.1f} {s['mean_fst']:>6.3f}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# policies

def mean_action_fn(policy: PolicyNet, cfg: TrainConfig) -> ActFn:
    """Deterministic policy: convert the Gaussian mean instead of a sample."""
    from .trainer import convert_action

    dtype = next(policy.parameters()).dtype

    def act(obs: Observation) -> ExecutableAction:
        with torch.no_grad():
            mean, _ = policy(*as_batch([obs], dtype))
        return convert_action(mean[0].double().numpy(), cfg)

    return act


def constant_action_fn(action: ExecutableAction) -> ActFn:
    return lambda obs: action


# ---------------------------------------------------------------------------
# episodes

def scenario_seed(seed: int, episode: int) -> int:
    return int(np.random.default_rng([int(seed), 0xE7A1, int(episode)]).integers(2 ** 62))


def run_episode(scenario: Scenario, act_fn: ActFn, cfg: TrainConfig = TrainConfig(), mode: str = MODE1,
                max_decisions: int = EVAL_CAP, label: str = "", seed: int = 0,
                builder: Optional[LocalMapBuilder] = None, keep_scenario: bool = False) -> EpisodeResult:
    """Roll out ``act_fn`` from the scenario start until arrival, collision or the decision cap."""
    builder = builder or LocalMapBuilder(cfg.local_map_size, cfg.local_map_resolution, cfg.lidar, cfg.robot_radius)
    sim = Simulator(scenario.world, cfg.robot, cfg.rewards, cfg.lidar, builder=builder)
    pose, goal = scenario.start, scenario.goal
    obs = sim.observe(pose, goal)
    rows: List[TrajectoryRow] = []
    t, outcome = 0.0, TIMEOUT
    for _ in range(max_decisions):
        action = act_fn(obs)
        out = sim.step(pose, goal, action, mode)
        rows.append(TrajectoryRow(t, pose.x, pose.y, pose.theta, action.v, action.omega, action.d, out.tau,
                                  out.reward, out.event))
        t += out.tau
        pose, obs = out.pose, out.next_observation
        if out.event != NONE:
            outcome = out.event
            break
    length = math.fsum(r.v * r.tau for r in rows)
    fst = math.fsum(r.d for r in rows) / len(rows) if rows else math.nan
    return EpisodeResult(label, seed, outcome, len(rows), t, length, fst, rows,
                         scenario if keep_scenario else None)


def _label_of(item) -> str:
    if isinstance(item, ScenarioSpec):
        return item.family
    return Path(str(item)).stem if Path(str(item)).suffix else str(item)


def resolve_specs(specs) -> Dict[str, ScenarioSpec]:
    """Names, files, specs, or a label -> spec mapping, into an ordered mapping."""
    if isinstance(specs, Mapping):
        return {k: (v if isinstance(v, ScenarioSpec) else load_spec(v)) for k, v in specs.items()}
    if isinstance(specs, (str, ScenarioSpec, Path)):
        specs = [specs]
    return {_label_of(s): (s if isinstance(s, ScenarioSpec) else load_spec(s)) for s in specs}


def evaluate_fn(act_fn: ActFn, specs, n_episodes: int, seed: int = 0, mode: str = MODE1,
                cfg: TrainConfig = TrainConfig(), max_decisions: int = EVAL_CAP,
                keep_episodes: bool = False) -> EvalReport:
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    builder = LocalMapBuilder(cfg.local_map_size, cfg.local_map_resolution, cfg.lidar, cfg.robot_radius)
    results = {}
    for label, spec in resolve_specs(specs).items():
        eps = []
        for i in range(n_episodes):
            s = scenario_seed(seed, i)
            sc = generate_scenario(spec, s)
            eps.append(run_episode(sc, act_fn, cfg, mode, max_decisions, label, s, builder, keep_episodes))
        results[label] = ScenarioResult(label, eps)
    return EvalReport(results, seed, mode)


def evaluate_policy(policy: PolicyNet, cfg: TrainConfig, specs, n_episodes: int, seed: int = 0,
                    mode: Optional[str] = None, **kw) -> EvalReport:
    return evaluate_fn(mean_action_fn(policy, cfg), specs, n_episodes, seed, mode or cfg.mode, cfg, **kw)


def config_of(ck: Checkpoint) -> TrainConfig:
    data = ck.extra.get("config")
    return config_from_dict(data) if data else TrainConfig()


def evaluate(checkpoint: Union[str, Path, Checkpoint], specs, n_episodes: int, seed: int = 0,
             mode: Optional[str] = None, cfg: Optional[TrainConfig] = None, **kw) -> EvalReport:
    """Evaluate a checkpoint file; the training config stored in it sets sensing and action conversion."""
    ck = checkpoint if isinstance(checkpoint, Checkpoint) else None
    if ck is None:
        probe = load_checkpoint(checkpoint)
        cfg = cfg or config_of(probe)
        ck = load_checkpoint(checkpoint, cfg.net_config)
    cfg = cfg or config_of(ck)
    if cfg.net_config != ck.policy.cfg:
        raise ValueError(f"checkpoint architecture {ck.policy.cfg} does not match config {cfg.net_config}")
    ck.policy.eval()
    return evaluate_policy(ck.policy, cfg, specs, n_episodes, seed, mode, **kw)


# ---------------------------------------------------------------------------
# ablation sweep

SWEEP_FIELDS = ["variant", "seed", "scenario", "success_rate", "reach_time", "path_length", "error"]


@dataclass
class SweepRow:
    variant: str
    seed: int
    scenario: str
    success_rate: float = math.nan
    reach_time: float = math.nan
    path_length: float = math.nan
    error: str = ""


@dataclass
class SweepReport:
    rows: List[SweepRow]
    variants: List[str]
    scenarios: List[str]

    def mean_sr(self, variant: str, scenario: Optional[str] = None) -> float:
        vals = [r.success_rate for r in self.rows if r.variant == variant and not r.error
                and (scenario is None or r.scenario == scenario)]
        return float(np.mean(vals)) if vals else math.nan

    def mean_rt(self, variant: str, scenario: Optional[str] = None) -> float:
        vals = [r.reach_time for r in self.rows if r.variant == variant and not r.error
                and (scenario is None or r.scenario == scenario) and not math.isnan(r.reach_time)]
        return float(np.mean(vals)) if vals else math.nan

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SWEEP_FIELDS)
            for r in self.rows:
                w.writerow([_cell(getattr(r, f)) for f in SWEEP_FIELDS])
        return path

    def table(self) -> str:
        """Variants as rows, SR and RT per scenario plus averages."""
        cols = [f"{s} SR/RT" for s in self.scenarios] + ["avg SR/RT"]
        width = max(12, *(len(c) for c in cols))
        lines = [f"{'variant':<10} " + " ".join(f"{c:>{width}}" for c in cols)]
        for v in self.variants:
            cells = []
            for s in list(self.scenarios) + [None]:
                sr, rt = self.mean_sr(v, s), self.mean_rt(v, s)
                srs = "err" if math.isnan(sr) else f"{sr:.3f}"
                rts = "/" if math.isnan(rt) else f"{rt:.1f}"
                cells.append(f"{srs}/{rts}")
            lines.append(f"{v:<10} " + " ".join(f"{c:>{width}}" for c in cells))
        return "\n".join(lines)


def ablation_sweep(base: TrainConfig, variants: Sequence[str], seeds: Sequence[int], specs,
                   n_episodes: int = 100, eval_seed: int = 12345, out_dir=None,
                   train_fn: Optional[Callable] = None) -> SweepReport:
    """Train every (variant, seed) under the base budget and evaluate each on every scenario.

    A failing variant is logged and recorded in the report's ``error`` column.
    """
    from .trainer import train

    train_fn = train_fn or train
    variants = [variant_name(v) for v in variants]
    specs = resolve_specs(specs)
    rows: List[SweepRow] = []
    for v in variants:
        for seed in seeds:
            run_dir = Path(out_dir) / v / f"seed{seed}" if out_dir is not None else None
            try:
                cfg = variant_config(base, v).replace(seed=int(seed))
                result = train_fn(cfg, run_dir)
                report = evaluate_policy(result.policy, cfg, specs, n_episodes, eval_seed)
                if run_dir is not None:
                    # train_fn may hand back an existing run without touching run_dir
                    run_dir.mkdir(parents=True, exist_ok=True)
                    report.write_csv(run_dir / "eval.csv")
                for label, r in report.results.items():
                    rows.append(SweepRow(v, int(seed), label, r.success_rate, r.reach_time, r.path_length))
            except Exception as exc:  # recorded, not fatal
                log.exception("variant %s seed %s failed", v, seed)
                for label in specs:
                    rows.append(SweepRow(v, int(seed), label, error=f"{type(exc).__name__}: {exc}"))
    report = SweepReport(rows, list(variants), list(specs))
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        report.write_csv(Path(out_dir) / "sweep.csv")
        (Path(out_dir) / "sweep.txt").write_text(report.table() + "\n")
    return report
