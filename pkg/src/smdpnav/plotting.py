"""Matplotlib renderings: trajectories over the world raster, training curves, evaluation bars.

All figures use the Agg backend and are saved without a ``Software`` tag,
so identical inputs produce identical PNG bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from .sim.env import TrajectoryRow  # noqa: E402
from .sim.kinematics import arc_points  # noqa: E402
from .sim.world import WorldMap  # noqa: E402
from .smdp import Pose  # noqa: E402

PNG_METADATA = {"Software": None}
PATH_COLOR = "#f2c200"
BOX = 0.3


def save_figure(fig, path, dpi: int = 100) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=dpi, metadata=PNG_METADATA if path.suffix.lower() == ".png" else None)
    plt.close(fig)
    return path


def trajectory_polyline(rows: Sequence[TrajectoryRow], spacing: float = 0.02):
    """Dense (x, y) samples of every executed arc, in order."""
    xs, ys = [], []
    for r in rows:
        n = max(1, int(np.ceil(r.v * r.tau / spacing)))
        ts = np.linspace(0.0, r.tau, n + 1)
        px, py, _ = arc_points(r.x, r.y, r.theta, r.v, r.omega, ts)
        if xs:
            px, py = px[1:], py[1:]
        xs.append(px)
        ys.append(py)
    if not xs:
        return np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ys)


def _box(ax, region, color, label):
    if region is None:
        return
    x0, y0, x1, y1 = region
    if x1 - x0 < 1e-9 and y1 - y0 < 1e-9:
        x0, y0, x1, y1 = x0 - BOX / 2, y0 - BOX / 2, x0 + BOX / 2, y0 + BOX / 2
    ax.add_patch(Rectangle((x0, y0), x1 - x0, y1 - y0, fill=False, ec=color, lw=1.5, label=label))


def render_trajectory(world: WorldMap, rows: Sequence[TrajectoryRow], start: Pose, goal, path=None,
                      start_region=None, goal_region=None, title: Optional[str] = None, dpi: int = 100):
    """World raster, yellow path, one dot per decision, start/goal boxes.

    Returns the figure when ``path`` is None, otherwise writes it and returns the path.
    """
    fig, ax = plt.subplots(figsize=(5, 5 * world.height / world.width))
    ax.imshow(world.to_image(), cmap="gray", vmin=0, vmax=255, extent=(0, world.width, 0, world.height),
              origin="upper", interpolation="nearest")
    if start_region is None:
        start_region = (start.x, start.y, start.x, start.y)
    if goal_region is None:
        goal_region = (float(goal[0]), float(goal[1]), float(goal[0]), float(goal[1]))
    _box(ax, start_region, "tab:blue", "start")
    _box(ax, goal_region, "tab:red", "goal")
    ax.plot([start.x], [start.y], marker="o", color="tab:blue", ms=5, gid="start")
    ax.plot([float(goal[0])], [float(goal[1])], marker="*", color="tab:red", ms=9, gid="goal")
    if rows:
        px, py = trajectory_polyline(rows)
        ax.plot(px, py, color=PATH_COLOR, lw=1.8, gid="path")
        ax.plot([r.x for r in rows], [r.y for r in rows], ls="none", marker="o", ms=3, color=PATH_COLOR,
                mec="k", mew=0.4, gid="decisions")
    ax.set_xlim(0, world.width)
    ax.set_ylim(0, world.height)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    if path is None:
        return fig
    return save_figure(fig, path, dpi)


def plot_training_curves(metrics: Sequence[dict], path) -> Path:
    epochs = np.array([m["epoch"] for m in metrics], dtype=float)
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    panels = [("mean_return", "mean return"), ("success_rate", "success rate"), ("mean_fst", "mean FST [s]")]
    for ax, (key, label) in zip(axes, panels):
        y = np.array([m.get(key, np.nan) for m in metrics], dtype=float)
        ax.plot(epochs, y, lw=1.2)
        ok = np.isfinite(y)
        if key == "mean_return" and ok.sum() >= 2:
            slope, icpt = np.polyfit(epochs[ok], y[ok], 1)
            ax.plot(epochs, slope * epochs + icpt, ls="--", color="gray", lw=1, label=f"slope {slope:.2f}")
            ax.legend(loc="lower right", fontsize=8)
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_eval_summary(report, path) -> Path:
    """Success rate and reach time per scenario for an :class:`~smdpnav.evaluate.EvalReport`."""
    s = report.summaries()
    labels = [r["scenario"] for r in s]
    x = np.arange(len(labels))
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.2))
    a1.bar(x, [r["success_rate"] for r in s], color="tab:green")
    a1.set_ylim(0, 1)
    a1.set_ylabel("success rate")
    a2.bar(x, [0.0 if np.isnan(r["reach_time"]) else r["reach_time"] for r in s], color="tab:blue")
    a2.set_ylabel("reach time [s]")
    for ax in (a1, a2):
        ax.set_xticks(x, labels)
        ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    return save_figure(fig, path)


def plot_sweep(report, path) -> Path:
    """Grouped success-rate bars, one group per scenario, one bar per variant."""
    scen = list(report.scenarios)
    x = np.arange(len(scen))
    width = 0.8 / max(len(report.variants), 1)
    fig, ax = plt.subplots(figsize=(max(5, 1.6 * len(scen)), 3.2))
    for i, v in enumerate(report.variants):
        ax.bar(x + i * width - 0.4 + width / 2, [report.mean_sr(v, s) for s in scen], width, label=v)
    ax.set_xticks(x, scen)
    ax.set_ylim(0, 1)
    ax.set_ylabel("success rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return save_figure(fig, path)
