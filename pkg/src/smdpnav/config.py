"""Training configuration: a flat YAML document with nested ``net`` and ``scenario`` tables."""

from __future__ import annotations

import dataclasses
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

from .actions import RobotLimits
from .egae import EGAE, ESTIMATOR_KINDS, GAE_PER_STEP, TD0, EstimatorConfig
from .policy import NetConfig
from .scenarios import ScenarioSpec, load_spec, preset
from .sim.env import MODE1, MODE2, RewardParams, RobotSpec
from .sim.sensors import LidarSpec
from .smdp import DISCOUNT_MODES, PER_STEP, SMDP_TIME, DiscountSpec


@dataclass
class TrainConfig:
    epochs: int = 100
    steps_per_epoch: int = 4096
    max_episode_steps: int = 200
    n_workers: int = 8
    seed: int = 0
    # discounting and advantage estimation
    gamma: float = 0.99
    discount_mode: str = SMDP_TIME
    lam: float = 0.95
    estimator: str = EGAE
    normalize_advantages: bool = False
    bootstrap_on_timeout: bool = False
    # PPO
    clip_ratio: float = 0.2
    policy_lr: float = 3e-4
    value_lr: float = 1e-3
    policy_iters: int = 10
    value_iters: int = 10
    chunk_size: int = 512
    # execution and ablations
    mode: str = MODE1
    use_elu: bool = True
    use_2d_to_3d: bool = True
    d_max: float = 3.0
    force_duration: Optional[float] = None
    # robot, reward and sensing
    robot_radius: float = 0.17
    v_max: float = 0.6
    omega_max: float = 0.9
    tau_tp: float = 0.4
    r_arr: float = 500.0
    r_col: float = -500.0
    eps_a: float = 200.0
    eps_t: float = 12.0
    eps_tau: float = 10.0
    arrive_radius: float = 0.3
    lidar_beams: int = 181
    lidar_range: float = 3.0
    local_map_size: float = 6.0
    local_map_resolution: float = 0.05
    scenario: Any = "sparse"
    net: Dict[str, Any] = field(default_factory=dict)
    # bookkeeping
    checkpoint_every: int = 10
    torch_threads: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        for name in ("epochs",):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("steps_per_epoch", "max_episode_steps", "n_workers", "policy_iters", "value_iters",
                     "chunk_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.discount_mode not in DISCOUNT_MODES:
            raise ValueError(f"unknown discount mode {self.discount_mode!r}")
        if self.estimator not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.mode not in (MODE1, MODE2):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.clip_ratio <= 0:
            raise ValueError("clip_ratio must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    # derived objects -------------------------------------------------------
    @property
    def discount(self) -> DiscountSpec:
        return DiscountSpec(self.gamma, self.discount_mode)

    @property
    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(self.lam, self.discount, self.estimator)

    @property
    def limits(self) -> RobotLimits:
        return RobotLimits(self.v_max, self.omega_max, self.tau_tp)

    @property
    def robot(self) -> RobotSpec:
        return RobotSpec(self.robot_radius, self.limits)

    @property
    def rewards(self) -> RewardParams:
        return RewardParams(self.r_arr, self.r_col, self.eps_a, self.eps_t, self.eps_tau, self.arrive_radius)

    @property
    def lidar(self) -> LidarSpec:
        import math

        return LidarSpec(math.pi, self.lidar_beams, self.lidar_range)

    @property
    def scenario_spec(self) -> ScenarioSpec:
        if isinstance(self.scenario, dict):
            return ScenarioSpec.from_dict(self.scenario)
        if isinstance(self.scenario, ScenarioSpec):
            return self.scenario
        return load_spec(self.scenario)

    @property
    def net_config(self) -> NetConfig:
        base = dict(self.net)
        base.setdefault("map_cells", int(round(self.local_map_size / self.local_map_resolution)))
        base.setdefault("action_dim", 2 if self.use_2d_to_3d else 3)
        return NetConfig.from_dict(base)

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        if isinstance(self.scenario, ScenarioSpec):
            d["scenario"] = self.scenario.to_dict()
        for k, v in list(d.items()):
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# Ablation presets: each changes exactly one component of the full method.
VARIANTS = {
    "AFST": {},
    "-ELU": {"use_elu": False},
    "-2D-to-3D": {"use_2d_to_3d": False},
    "-EGAE": {"estimator": TD0},
    "-SMDP": {"discount_mode": PER_STEP, "estimator": GAE_PER_STEP},
}


def variant_name(name: str) -> str:
    """Canonical variant name; ``no-EGAE`` is accepted for ``-EGAE`` (handy on command lines)."""
    name = name.strip()
    if name.lower().startswith("no-"):
        name = "-" + name[3:]
    for key in VARIANTS:
        if key.lower() == name.lower():
            return key
    raise ValueError(f"unknown variant {name!r}; choose from {sorted(VARIANTS)}")


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    return base.replace(**VARIANTS[variant_name(name)])


def _set_dotted(d: dict, key: str, value) -> None:
    parts = key.split(".")
    for p in parts[:-1]:
        if not isinstance(d.get(p), dict):
            d[p] = {} if d.get(p) is None or not isinstance(d.get(p), str) else preset(d[p]).to_dict()
        d = d[p]
    d[parts[-1]] = value


def apply_overrides(data: dict, overrides: Iterable[str]) -> dict:
    """Apply ``key=value`` strings; values are parsed as YAML scalars or lists."""
    data = dict(data)
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        _set_dotted(data, key.strip(), yaml.safe_load(raw))
    return data


def config_from_dict(data: dict) -> TrainConfig:
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return TrainConfig(**data)


def config_path(name) -> Path:
    """A file path, or the name of a packaged config such as ``desk``."""
    p = Path(str(name))
    if p.exists():
        return p
    packaged = Path(str(resources.files("smdpnav") / "configs" / f"{name}.yaml"))
    if packaged.exists():
        return packaged
    raise FileNotFoundError(f"no config file or packaged config named {name!r}")


def load_config(path=None, overrides: Iterable[str] = (), **changes) -> TrainConfig:
    data = {}
    if path is not None:
        data = yaml.safe_load(config_path(path).read_text()) or {}
    data = apply_overrides(data, overrides)
    data.update(changes)
    return config_from_dict(data)


def dump_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=True))
