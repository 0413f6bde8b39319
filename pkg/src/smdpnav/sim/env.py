"""Transition dynamics of the navigation SMDP and a small stateful environment wrapper."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ..actions import RobotLimits
from ..smdp import ExecutableAction, Pose
from .kinematics import arc_points
from .sensors import LidarSpec, LocalMapBuilder, Observation, goal_in_robot_frame, raycast_scan
from .world import CollisionChecker, WorldMap

NONE = "none"
ARRIVED = "arrived"
COLLIDED = "collided"

MODE1 = "mode1"
MODE2 = "mode2"
MODE2_INTERVAL = 0.1


@dataclass(frozen=True)
class RobotSpec:
    radius: float = 0.17
    limits: RobotLimits = field(default_factory=RobotLimits)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("robot radius must be positive")


@dataclass(frozen=True)
class RewardParams:
    r_arr: float = 500.0
    r_col: float = -500.0
    eps_a: float = 200.0
    eps_t: float = 12.0
    eps_tau: float = 10.0
    arrive_radius: float = 0.3

    def __post_init__(self):
        ok = (self.r_arr > 0 and self.r_col < 0 and self.eps_a > 0 and self.eps_t > 0
              and self.eps_tau > 0 and self.arrive_radius > 0)
        if not ok:
            raise ValueError(f"invalid reward parameters {self}")


@dataclass
class StepOutcome:
    pose: Pose
    reward: float
    tau: float
    event: str
    next_observation: Optional[Observation] = None
    # reward decomposition, for diagnostics
    approach: float = 0.0


def reward(params: RewardParams, prev_dist: float, now_dist: float, tau: float, tau_tp: float,
           collided: bool) -> float:
    r = params.eps_a * (prev_dist - now_dist)
    if now_dist < params.arrive_radius:
        r += params.r_arr
    if collided:
        r += params.r_col
    return r - params.eps_t * tau - params.eps_tau * tau_tp


class Simulator:
    """Deterministic arc-following motion with swept-disk collision checks.

    The arc is sampled so consecutive samples are at most ``res/2`` of path
    apart.  Each sample is tested with the robot radius inflated by ``res/4``,
    half the worst-case gap, so a pass guarantees the true disk stays clear
    along the whole continuous arc.  On contact the robot stops at the last
    safe sample and ``tau`` is that sample's time.
    """

    def __init__(self, world: WorldMap, robot: RobotSpec = RobotSpec(), rewards: RewardParams = RewardParams(),
                 lidar: LidarSpec = LidarSpec(), local_map_resolution: Optional[float] = None,
                 local_map_size: float = 6.0, builder: Optional[LocalMapBuilder] = None):
        self.world = world
        self.robot = robot
        self.rewards = rewards
        self.lidar = lidar
        self.max_substep = 0.5 * world.resolution
        self.margin = 0.5 * self.max_substep
        self.checker = CollisionChecker(world, robot.radius + self.margin)
        self.builder = builder or LocalMapBuilder(local_map_size, local_map_resolution or world.resolution,
                                                  lidar, robot.radius)

    def in_collision(self, xy) -> bool:
        return bool(self.checker.collides(np.asarray(xy, dtype=np.float64)[None])[0])

    def observe(self, pose: Pose, goal) -> Observation:
        scan = raycast_scan(self.world, pose, self.lidar.fov, self.lidar.n_beams, self.lidar.max_range)
        return Observation(self.builder.rasterize(scan), goal_in_robot_frame(pose, goal))

    def sample_arc(self, pose: Pose, action: ExecutableAction, duration: float):
        length = action.v * duration
        n = max(1, int(math.ceil(length / self.max_substep)))
        ts = np.linspace(0.0, duration, n + 1)
        xs, ys, ths = arc_points(pose.x, pose.y, pose.theta, action.v, action.omega, ts)
        return ts, xs, ys, ths

    def step(self, pose: Pose, goal, action: ExecutableAction, mode: str = MODE1,
             observe: bool = True) -> StepOutcome:
        if mode == MODE1:
            duration = action.d
        elif mode == MODE2:
            duration = min(action.d, MODE2_INTERVAL)
        else:
            raise ValueError(f"unknown execution mode {mode!r}")
        if self.in_collision((pose.x, pose.y)):
            raise ValueError(f"cannot command from an in-collision pose {pose}")
        ts, xs, ys, ths = self.sample_arc(pose, action, duration)
        dist = np.hypot(xs - goal[0], ys - goal[1])
        arrived = dist < self.rewards.arrive_radius
        hits = self.checker.collides(np.column_stack([xs, ys]))
        k_arr = int(np.argmax(arrived)) if arrived.any() else len(ts)
        k_col = int(np.argmax(hits)) if hits.any() else len(ts)
        if k_col <= k_arr and k_col < len(ts):
            k, event = k_col - 1, COLLIDED
        elif k_arr < len(ts):
            k, event = k_arr, ARRIVED
        else:
            k, event = len(ts) - 1, NONE
        tau = float(ts[k])
        end = Pose(float(xs[k]), float(ys[k]), float(ths[k]))
        prev_d = float(dist[0])
        now_d = float(dist[k])
        r = reward(self.rewards, prev_d, now_d, tau, self.robot.limits.tau_tp, event == COLLIDED)
        obs = self.observe(end, goal) if observe else None
        return StepOutcome(end, r, tau, event, obs, self.rewards.eps_a * (prev_d - now_d))


def step(world: WorldMap, robot: RobotSpec, pose: Pose, goal, action: ExecutableAction,
         params: RewardParams = RewardParams(), mode: str = MODE1) -> StepOutcome:
    """One-shot transition; builds a throwaway :class:`Simulator`."""
    return Simulator(world, robot, params).step(pose, goal, action, mode)


@dataclass
class TrajectoryRow:
    t: float
    x: float
    y: float
    theta: float
    v: float
    omega: float
    d: float
    tau: float
    reward: float
    event: str


TRAJECTORY_FIELDS = ["t", "x", "y", "theta", "v", "omega", "d", "tau", "reward", "event"]


def write_trajectory(path, rows: List[TrajectoryRow], start: Pose, goal) -> None:
    """One row per decision: pose at decision time, executed command, outcome."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# start={start.x!r},{start.y!r},{start.theta!r} goal={float(goal[0])!r},{float(goal[1])!r}\n")
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_FIELDS)
        for row in rows:
            w.writerow([repr(float(getattr(row, f))) if f != "event" else row.event for f in TRAJECTORY_FIELDS])


def read_trajectory(path):
    """Inverse of :func:`write_trajectory`; returns ``(rows, start, goal)``."""
    with open(path, newline="") as fh:
        header = fh.readline()
        if not header.startswith("# start="):
            raise ValueError(f"{path} is not a trajectory record")
        start_s, goal_s = header[2:].split()
        sx, sy, sth = (float(v) for v in start_s.split("=")[1].split(","))
        gx, gy = (float(v) for v in goal_s.split("=")[1].split(","))
        rows = []
        for rec in csv.DictReader(fh):
            rows.append(TrajectoryRow(**{k: (rec[k] if k == "event" else float(rec[k])) for k in TRAJECTORY_FIELDS}))
    return rows, Pose(sx, sy, sth), np.array([gx, gy])
