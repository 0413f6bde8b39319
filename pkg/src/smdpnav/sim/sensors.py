"""Simulated planar lidar and the egocentric local grid map built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..smdp import Pose
from .world import WorldMap

FREE = 0.0
OCCUPIED = 1.0


@dataclass(frozen=True)
class LidarSpec:
    fov: float = math.pi
    n_beams: int = 181
    max_range: float = 3.0

    def beam_angles(self) -> np.ndarray:
        if self.n_beams == 1:
            return np.zeros(1)
        return np.linspace(-0.5 * self.fov, 0.5 * self.fov, self.n_beams)


@dataclass(frozen=True)
class Observation:
    local_map: np.ndarray  # (n, n) float32, 1 = occupied or unobserved
    goal_rel: np.ndarray  # (2,) goal in robot frame, x forward, y left


def raycast_scan(world: WorldMap, pose: Pose, fov: float = math.pi, n_beams: int = 181,
                 max_range: float = 3.0, step: float | None = None) -> np.ndarray:
    """Ray-march each beam until it enters an occupied cell.

    Ranges are quantized to ``step`` (half a cell by default).
    """
    step = 0.5 * world.resolution if step is None else step
    angles = pose.theta + LidarSpec(fov, n_beams, max_range).beam_angles()
    dists = np.arange(1, int(math.ceil(max_range / step)) + 1) * step
    dists = np.minimum(dists, max_range)
    px = pose.x + np.cos(angles)[:, None] * dists[None, :]
    py = pose.y + np.sin(angles)[:, None] * dists[None, :]
    hit = world.occupied_at(px, py)
    any_hit = hit.any(axis=1)
    first = hit.argmax(axis=1)
    return np.where(any_hit, dists[first], max_range)


def goal_in_robot_frame(pose: Pose, goal) -> np.ndarray:
    dx, dy = goal[0] - pose.x, goal[1] - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return np.array([c * dx + s * dy, -s * dx + c * dy])


class LocalMapBuilder:
    """Rasterizes a scan into a square robot-centered grid.

    Cell ``[i, j]`` covers robot-frame ``x`` in column ``j`` and ``y`` in row
    ``i``; the robot sits at the center.  Cells crossed by a beam before its
    return are free, the return cell is occupied, and every cell no beam
    reaches stays occupied.  The robot's own footprint is marked free.
    """

    def __init__(self, size: float = 6.0, resolution: float = 0.05, lidar: LidarSpec = LidarSpec(),
                 robot_radius: float = 0.17, upsample: int = 4):
        self.size = size
        self.resolution = resolution
        self.lidar = lidar
        self.n = int(round(size / resolution))
        half = 0.5 * size
        # interpolate sub-rays between adjacent beams so distant cells are not skipped
        base = lidar.beam_angles()
        if len(base) > 1 and upsample > 1:
            frac = np.arange(upsample) / upsample
            sub = (base[:-1, None] + frac[None, :] * np.diff(base)[:, None]).ravel()
            self._angles = np.append(sub, base[-1])
            self._left = np.minimum(np.arange(len(self._angles)) // upsample, len(base) - 1)
            self._right = np.minimum(self._left + (np.arange(len(self._angles)) % upsample > 0), len(base) - 1)
        else:
            self._angles = base
            self._left = self._right = np.arange(len(base))
        self._dists = np.arange(0.5, int(math.ceil(lidar.max_range / (0.5 * resolution)))) * 0.5 * resolution
        xs = np.cos(self._angles)[:, None] * self._dists[None, :]
        ys = np.sin(self._angles)[:, None] * self._dists[None, :]
        j = np.floor((xs + half) / resolution).astype(np.int64)
        i = np.floor((ys + half) / resolution).astype(np.int64)
        self._inside = (i >= 0) & (i < self.n) & (j >= 0) & (j < self.n)
        self._flat = np.where(self._inside, i * self.n + j, 0)
        ci = (np.arange(self.n) + 0.5) * resolution - half
        yy, xx = np.meshgrid(ci, ci, indexing="ij")
        self._footprint = (xx ** 2 + yy ** 2 <= robot_radius ** 2).ravel()

    def rasterize(self, scan) -> np.ndarray:
        scan = np.asarray(scan, dtype=np.float64)
        if scan.shape != (self.lidar.n_beams,):
            raise ValueError(f"scan has shape {scan.shape}, expected ({self.lidar.n_beams},)")
        ranges = np.minimum(scan[self._left], scan[self._right])
        grid = np.full(self.n * self.n, OCCUPIED, dtype=np.float32)
        free = self._inside & (self._dists[None, :] < ranges[:, None])
        grid[self._flat[free]] = FREE
        grid[self._footprint] = FREE
        returns = scan < self.lidar.max_range
        if np.any(returns):
            ang = self.lidar.beam_angles()[returns]
            r = scan[returns]
            half = 0.5 * self.size
            j = np.floor((np.cos(ang) * r + half) / self.resolution).astype(np.int64)
            i = np.floor((np.sin(ang) * r + half) / self.resolution).astype(np.int64)
            ok = (i >= 0) & (i < self.n) & (j >= 0) & (j < self.n)
            grid[i[ok] * self.n + j[ok]] = OCCUPIED
        return grid.reshape(self.n, self.n)


def build_observation(world: WorldMap, pose: Pose, goal, scan, builder: LocalMapBuilder | None = None) -> Observation:
    builder = builder or LocalMapBuilder(resolution=world.resolution)
    return Observation(builder.rasterize(scan), goal_in_robot_frame(pose, goal))
