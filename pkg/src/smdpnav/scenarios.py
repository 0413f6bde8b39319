"""Scenario families: random obstacle fields and fixed trap layouts.

Random families draw rectangles and discs uniformly over the extent.  The
fixed spiral and zigzag layouts are authored below and shipped as grayscale
images with JSON sidecars under ``smdpnav/data``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from .sim.world import DEFAULT_RESOLUTION, WorldMap, connected, read_sidecar, read_world

FAMILIES = ("sparse", "dense", "spiral", "zigzag", "hybrid")
ROBOT_RADIUS = 0.17
WALL = 0.1

Rect = Tuple[float, float, float, float]  # x0, y0, x1, y1


class ScenarioInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    family: str
    extent: Tuple[float, float] = (10.0, 10.0)
    n_obstacles: int = 6
    size_range: Tuple[float, float] = (0.5, 2.0)
    # elongated wall-like obstacles, counted inside n_obstacles
    n_bars: int = 0
    bar_length: Tuple[float, float] = (1.0, 2.5)
    # packaged layout name or path to an image; fixed obstacles and start/goal
    layout: Optional[str] = None
    start_region: Optional[Rect] = None
    goal_region: Optional[Rect] = None
    min_separation: float = 1.0
    # obstacles keep this far from start and goal positions
    clearance: float = 0.5
    resolution: float = DEFAULT_RESOLUTION
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        for k in ("extent", "size_range", "bar_length", "start_region", "goal_region"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Scenario:
    world: WorldMap
    start: "Pose"
    goal: np.ndarray
    spec: ScenarioSpec
    start_region: Rect
    goal_region: Rect
    # ("rect", cx, cy, sx, sy) or ("disc", cx, cy, r); empty for fixed layouts
    obstacles: list = field(default_factory=list)


def preset(family: str, **overrides) -> ScenarioSpec:
    if family == "sparse":
        spec = ScenarioSpec("sparse", (10.0, 10.0), 6, (0.5, 2.0))
    elif family == "dense":
        spec = ScenarioSpec("dense", (10.0, 10.0), 32, (0.3, 0.6))
    elif family == "hybrid":
        spec = ScenarioSpec("hybrid", (10.0, 10.0), 32, (0.3, 0.6), n_bars=8)
    elif family in ("spiral", "zigzag"):
        spec = ScenarioSpec(family, (6.0, 6.0), 5, (0.2, 0.2), layout=family)
    elif family == "desk":
        # reduced sparse world for CPU-scale training runs
        spec = ScenarioSpec("sparse", (6.0, 6.0), 3, (0.4, 1.2))
    else:
        raise ValueError(f"unknown scenario family {family!r}")
    return replace(spec, **overrides)


def load_spec(path_or_name) -> ScenarioSpec:
    """A family name, a JSON spec document, or a layout image with sidecar."""
    p = Path(str(path_or_name))
    if p.suffix == ".json" and p.exists():
        return ScenarioSpec.from_dict(json.loads(p.read_text()))
    if p.suffix.lower() in (".pgm", ".png") and p.exists():
        meta = read_sidecar(p)
        return ScenarioSpec(meta.get("family", "custom"), tuple(meta.get("extent", (0.0, 0.0))), 0,
                            layout=str(p), resolution=meta.get("resolution", DEFAULT_RESOLUTION))
    return preset(str(path_or_name))


# ---------------------------------------------------------------------------
# rasterization helpers

def _grid_for(extent, resolution):
    nx = int(round(extent[0] / resolution))
    ny = int(round(extent[1] / resolution))
    return np.zeros((ny, nx), dtype=bool)


def _centers(grid, resolution):
    ny, nx = grid.shape
    xs = (np.arange(nx) + 0.5) * resolution
    ys = (np.arange(ny) + 0.5) * resolution
    return np.meshgrid(xs, ys)


def fill_rect(grid, resolution, rect: Rect) -> None:
    x0, y0, x1, y1 = rect
    ix0, ix1 = int(math.floor(x0 / resolution + 0.5)), int(math.floor(x1 / resolution + 0.5))
    iy0, iy1 = int(math.floor(y0 / resolution + 0.5)), int(math.floor(y1 / resolution + 0.5))
    ny, nx = grid.shape
    grid[max(iy0, 0):min(max(iy1, iy0 + 1), ny), max(ix0, 0):min(max(ix1, ix0 + 1), nx)] = True


def fill_disc(grid, resolution, cx, cy, r) -> None:
    X, Y = _centers(grid, resolution)
    grid |= (X - cx) ** 2 + (Y - cy) ** 2 <= r * r


# ---------------------------------------------------------------------------
# fixed layouts

def spiral_layout(resolution: float = DEFAULT_RESOLUTION):
    """Two nested square rings with openings on opposite sides; goal in the core."""
    g = _grid_for((6.0, 6.0), resolution)
    w = WALL
    # outer ring (1.0 .. 5.0), opening on the left side
    for r in [(1.0, 1.0, 5.0, 1.0 + w), (1.0, 5.0 - w, 5.0, 5.0), (5.0 - w, 1.0, 5.0, 5.0),
              (1.0, 1.0, 1.0 + w, 2.5), (1.0, 3.5, 1.0 + w, 5.0)]:
        fill_rect(g, resolution, r)
    # inner ring (2.0 .. 4.0), opening on the right side
    for r in [(2.0, 2.0, 4.0, 2.0 + w), (2.0, 4.0 - w, 4.0, 4.0), (2.0, 2.0, 2.0 + w, 4.0),
              (4.0 - w, 2.0, 4.0, 2.6), (4.0 - w, 3.4, 4.0, 4.0)]:
        fill_rect(g, resolution, r)
    for cx, cy in [(0.25, 1.8), (3.0, 5.75), (5.75, 2.5), (3.0, 1.3), (2.5, 4.75)]:
        fill_rect(g, resolution, (cx - 0.1, cy - 0.1, cx + 0.1, cy + 0.1))
    meta = {"family": "spiral", "extent": [6.0, 6.0], "start": [5.5, 0.5], "goal": [3.0, 3.0]}
    return WorldMap(g, resolution), meta


def zigzag_layout(resolution: float = DEFAULT_RESOLUTION):
    """Three switchback walls alternating from the left and right borders."""
    g = _grid_for((6.0, 6.0), resolution)
    w = WALL
    for r in [(0.0, 1.5, 4.6, 1.5 + w), (1.4, 3.0, 6.0, 3.0 + w), (0.0, 4.5, 4.6, 4.5 + w)]:
        fill_rect(g, resolution, r)
    for cx, cy in [(3.0, 0.8), (2.0, 2.3), (4.2, 3.8), (1.2, 3.7), (3.0, 5.3)]:
        fill_rect(g, resolution, (cx - 0.1, cy - 0.1, cx + 0.1, cy + 0.1))
    meta = {"family": "zigzag", "extent": [6.0, 6.0], "start": [0.8, 0.7], "goal": [0.8, 5.3]}
    return WorldMap(g, resolution), meta


LAYOUTS = {"spiral": spiral_layout, "zigzag": zigzag_layout}


def layout_path(name: str) -> Path:
    return Path(str(resources.files("smdpnav") / "data" / f"{name}.pgm"))


def load_layout(name: str):
    p = layout_path(name) if name in LAYOUTS else Path(name)
    return read_world(p), read_sidecar(p)


# ---------------------------------------------------------------------------
# generation

def _region_or_extent(region, extent, border):
    if region is not None:
        return tuple(float(v) for v in region)
    return (border, border, extent[0] - border, extent[1] - border)


def _sample_point(rng, region):
    x0, y0, x1, y1 = region
    return np.array([x0 + (x1 - x0) * rng.random(), y0 + (y1 - y0) * rng.random()])


def _random_obstacles(spec: ScenarioSpec, rng, start, goal):
    g = _grid_for(spec.extent, spec.resolution)
    W, H = spec.extent
    placed, attempts, shapes = 0, 0, []
    while placed < spec.n_obstacles:
        attempts += 1
        if attempts > 200 * max(spec.n_obstacles, 1):
            raise ScenarioInfeasible(f"could not place {spec.n_obstacles} obstacles")
        cx, cy = W * rng.random(), H * rng.random()
        if placed < spec.n_bars:
            length = rng.uniform(*spec.bar_length)
            sx, sy = (length, WALL * 1.5) if rng.random() < 0.5 else (WALL * 1.5, length)
            shape = ("rect", sx, sy)
        elif rng.random() < 0.5:
            shape = ("rect", rng.uniform(*spec.size_range), rng.uniform(*spec.size_range))
        else:
            shape = ("disc", 0.5 * rng.uniform(*spec.size_range))
        # distance from the shape to start/goal must exceed the clearance disc
        ok = True
        for p in (start, goal):
            if shape[0] == "rect":
                dx = max(abs(p[0] - cx) - shape[1] / 2, 0.0)
                dy = max(abs(p[1] - cy) - shape[2] / 2, 0.0)
                gap = math.hypot(dx, dy)
            else:
                gap = math.hypot(p[0] - cx, p[1] - cy) - shape[1]
            if gap < spec.clearance:
                ok = False
        if not ok:
            continue
        if shape[0] == "rect":
            fill_rect(g, spec.resolution, (cx - shape[1] / 2, cy - shape[2] / 2, cx + shape[1] / 2, cy + shape[2] / 2))
            shapes.append(("rect", cx, cy, shape[1], shape[2]))
        else:
            fill_disc(g, spec.resolution, cx, cy, shape[1])
            shapes.append(("disc", cx, cy, shape[1]))
        placed += 1
    return WorldMap(g, spec.resolution), shapes


def generate_scenario(spec: ScenarioSpec, seed: Optional[int] = None, max_tries: int = 100) -> Scenario:
    """Deterministic world, start pose and goal for ``(spec, seed)``.

    Start and goal are at least ``min_separation`` apart, obstacles avoid
    their clearance discs, and a flood fill over cells with robot clearance
    connects them.
    """
    from .smdp import Pose

    seed = spec.seed if seed is None else seed
    rng = np.random.default_rng([int(seed), 0x5CE7])
    if spec.layout is not None:
        world, meta = load_layout(spec.layout)
        start_region = tuple(meta.get("start_region") or (*meta["start"], *meta["start"]))
        goal_region = tuple(meta.get("goal_region") or (*meta["goal"], *meta["goal"]))
        start_xy, goal_xy = _sample_point(rng, start_region), _sample_point(rng, goal_region)
        if not connected(world, start_xy, goal_xy, ROBOT_RADIUS):
            raise ScenarioInfeasible(f"layout {spec.layout} has no free path from start to goal")
        return Scenario(world, Pose(start_xy[0], start_xy[1], rng.uniform(-math.pi, math.pi)), goal_xy,
                        spec, start_region, goal_region)
    start_region = _region_or_extent(spec.start_region, spec.extent, spec.clearance)
    goal_region = _region_or_extent(spec.goal_region, spec.extent, spec.clearance)
    for _ in range(max_tries):
        start_xy = _sample_point(rng, start_region)
        goal_xy = _sample_point(rng, goal_region)
        if np.hypot(*(goal_xy - start_xy)) < spec.min_separation:
            continue
        try:
            world, shapes = _random_obstacles(spec, rng, start_xy, goal_xy)
        except ScenarioInfeasible:
            continue
        if connected(world, start_xy, goal_xy, ROBOT_RADIUS):
            return Scenario(world, Pose(start_xy[0], start_xy[1], rng.uniform(-math.pi, math.pi)), goal_xy,
                            spec, start_region, goal_region, shapes)
    raise ScenarioInfeasible(f"no feasible {spec.family} instance after {max_tries} tries")
