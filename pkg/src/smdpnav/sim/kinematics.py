"""Closed-form unicycle motion under a constant (v, omega) command."""

from __future__ import annotations

import numpy as np

from ..smdp import ExecutableAction, Pose


def arc_points(x: float, y: float, theta: float, v: float, omega: float, ts):
    """Positions and headings reached after each time in ``ts``.

    Uses the chord form ``v t sinc(w t / 2)`` along heading ``theta + w t / 2``,
    which equals the textbook ``(v/w)(sin(theta + w t) - sin theta)`` expression
    but stays well conditioned as ``omega -> 0``.
    """
    ts = np.asarray(ts, dtype=np.float64)
    half = 0.5 * omega * ts
    chord = v * ts * np.sinc(half / np.pi)
    heading = theta + half
    return x + chord * np.cos(heading), y + chord * np.sin(heading), theta + omega * ts


def propagate_arc(pose: Pose, action: ExecutableAction, dt: float) -> Pose:
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    if dt == 0:
        return pose
    x, y, th = arc_points(pose.x, pose.y, pose.theta, action.v, action.omega, dt)
    return Pose(float(x), float(y), float(th))
