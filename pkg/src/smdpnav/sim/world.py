"""Rasterized obstacle worlds.

``grid[iy, ix]`` is True for an occupied cell covering
``[ix*res, (ix+1)*res) x [iy*res, (iy+1)*res)``.  Row 0 is the bottom of the
world; images are stored top-row-first, so loading flips vertically.
Everything outside the raster counts as occupied.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage

DEFAULT_RESOLUTION = 0.05
DEFAULT_THRESHOLD = 128


@dataclass(frozen=True, eq=False)
class WorldMap:
    grid: np.ndarray
    resolution: float = DEFAULT_RESOLUTION

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        g = np.ascontiguousarray(self.grid, dtype=bool)
        if g.ndim != 2 or g.size == 0:
            raise ValueError(f"grid must be a non-empty 2D array, got shape {g.shape}")
        g.setflags(write=False)
        object.__setattr__(self, "grid", g)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def width(self) -> float:
        return self.grid.shape[1] * self.resolution

    @property
    def height(self) -> float:
        return self.grid.shape[0] * self.resolution

    def cell_of(self, x, y):
        """Integer (ix, iy) of the cell containing world point(s) (x, y)."""
        ix = np.floor(np.asarray(x) / self.resolution).astype(np.int64)
        iy = np.floor(np.asarray(y) / self.resolution).astype(np.int64)
        return ix, iy

    def cell_center(self, ix, iy):
        return (np.asarray(ix) + 0.5) * self.resolution, (np.asarray(iy) + 0.5) * self.resolution

    def occupied_at(self, x, y) -> np.ndarray:
        ix, iy = self.cell_of(x, y)
        ny, nx = self.grid.shape
        inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
        out = np.ones(np.shape(ix), dtype=bool)
        out[inside] = self.grid[iy[inside], ix[inside]]
        return out

    def to_image(self) -> np.ndarray:
        """8-bit grayscale raster, obstacles black, top row first."""
        return np.where(self.grid[::-1], 0, 255).astype(np.uint8)

    def __eq__(self, other):
        return (isinstance(other, WorldMap) and self.resolution == other.resolution
                and np.array_equal(self.grid, other.grid))

    __hash__ = None


def load_world(image, resolution: float = DEFAULT_RESOLUTION,
               threshold: int = DEFAULT_THRESHOLD) -> WorldMap:
    """Build a world from a grayscale raster; intensities below ``threshold`` are obstacles."""
    img = np.asarray(image)
    if img.ndim == 3:
        img = np.asarray(Image.fromarray(img.astype(np.uint8)).convert("L"))
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a non-empty 2D grayscale raster, got shape {img.shape}")
    return WorldMap(grid=(img < threshold)[::-1].copy(), resolution=float(resolution))


def read_world(path) -> WorldMap:
    """Load an image file plus its ``.json`` sidecar (``resolution``, ``threshold``)."""
    path = Path(path)
    try:
        img = np.asarray(Image.open(path).convert("L"))
    except (OSError, ValueError) as exc:
        raise ValueError(f"cannot read world image {path}: {exc}") from exc
    meta = read_sidecar(path)
    return load_world(img, meta.get("resolution", DEFAULT_RESOLUTION),
                      meta.get("threshold", DEFAULT_THRESHOLD))


def read_sidecar(path) -> dict:
    side = Path(path).with_suffix(".json")
    if side.exists():
        return json.loads(side.read_text())
    return {}


def write_world(world: WorldMap, path, **extra) -> Path:
    """Write the raster as PGM/PNG with a JSON sidecar holding resolution and ``extra``."""
    path = Path(path)
    Image.fromarray(world.to_image()).save(path)
    meta = {"resolution": world.resolution, "threshold": DEFAULT_THRESHOLD, **extra}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


class CollisionChecker:
    """Exact disk-versus-cell overlap test on a fixed world.

    A disk collides when its interior intersects any occupied cell square
    (or leaves the raster).
    """

    def __init__(self, world: WorldMap, radius: float):
        self.world = world
        self.radius = float(radius)
        res = world.resolution
        self._w = int(math.ceil(self.radius / res)) + 1
        self._pad = self._w + 1
        self._padded = np.pad(world.grid, self._pad, constant_values=True)
        offs = np.arange(-self._w, self._w + 1)
        self._ox, self._oy = np.meshgrid(offs, offs)
        # scipy EDT gives a cheap conservative pre-filter on cell centers
        self._free_dist = ndimage.distance_transform_edt(~self._padded) * res

    def collides(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        res = self.world.resolution
        ix, iy = self.world.cell_of(pts[:, 0], pts[:, 1])
        ny, nx = self.world.grid.shape
        # points far outside the raster always collide
        far = (ix < -1) | (iy < -1) | (ix > nx) | (iy > ny)
        ixc = np.clip(ix, -1, nx) + self._pad
        iyc = np.clip(iy, -1, ny) + self._pad
        # cells whose center is farther than radius + one cell diagonal cannot touch
        clear = self._free_dist[iyc, ixc] > self.radius + 1.5 * res
        out = far.copy()
        todo = ~(far | clear)
        if np.any(todo):
            p = pts[todo]
            cx = ixc[todo, None, None] + self._ox[None]
            cy = iyc[todo, None, None] + self._oy[None]
            occ = self._padded[cy, cx]
            x0 = (cx - self._pad) * res
            y0 = (cy - self._pad) * res
            dx = np.maximum(np.maximum(x0 - p[:, 0, None, None], 0.0), p[:, 0, None, None] - (x0 + res))
            dy = np.maximum(np.maximum(y0 - p[:, 1, None, None], 0.0), p[:, 1, None, None] - (y0 + res))
            hit = occ & (dx * dx + dy * dy < self.radius * self.radius)
            out[todo] = hit.reshape(len(p), -1).any(axis=1)
        return out


def free_space_mask(world: WorldMap, clearance: float) -> np.ndarray:
    """Cells whose center is at least ``clearance`` away from every occupied cell."""
    padded = np.pad(world.grid, 1, constant_values=True)
    dist = ndimage.distance_transform_edt(~padded)[1:-1, 1:-1] * world.resolution
    # center-to-center distance overestimates center-to-square distance by up to res/sqrt(2)
    return dist - math.sqrt(0.5) * world.resolution >= clearance


def connected(world: WorldMap, start_xy, goal_xy, clearance: float) -> bool:
    """Flood fill on the inflated grid: can a disk of ``clearance`` travel start -> goal?"""
    free = free_space_mask(world, clearance)
    labels, _ = ndimage.label(free)
    sx, sy = world.cell_of(start_xy[0], start_xy[1])
    gx, gy = world.cell_of(goal_xy[0], goal_xy[1])
    ny, nx = free.shape
    for x, y in ((sx, sy), (gx, gy)):
        if not (0 <= x < nx and 0 <= y < ny):
            return False
    a, b = labels[sy, sx], labels[gy, gx]
    return bool(a != 0 and a == b)
