"""Raw policy output -> virtual TP-space action -> executable (v, omega, d).

The virtual action (v_tp, omega_tp) describes a circular arc driven for the
fixed time scale ``tau_tp``.  Scaling both velocities by ``1/k`` and the
duration by ``k`` keeps the arc unchanged; choosing ``k`` so that one velocity
limit is hit exactly gives the fastest executable action on that arc.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .smdp import ExecutableAction, VirtualAction

ELU_KNEE = 0.2
ELU_GAIN = 5.0
ELU_OFFSET = 1.0
# floor on k; only reachable on the rectifier ablation where v_tp may be 0
MIN_SCALE = 1e-6
# floor on the squashed duration of the direct-3D ablation
MIN_DURATION = 1e-3


@dataclass(frozen=True)
class RobotLimits:
    v_m: float = 0.6
    omega_m: float = 0.9
    tau_tp: float = 0.4

    def __post_init__(self):
        if not (self.v_m > 0 and self.omega_m > 0 and self.tau_tp > 0):
            raise ValueError(f"limits must be positive: {self}")


def _finite_pair(raw) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(raw)):
        raise ValueError(f"non-finite raw action {raw}")
    return raw


def elu_velocity(v_raw):
    """Soft-saturating map of the raw translational output onto (0, inf).

    Works elementwise on scalars or arrays.
    """
    v_raw = np.asarray(v_raw, dtype=np.float64)
    # clamp inside exp so the unused branch cannot overflow
    soft = ELU_KNEE * np.exp(ELU_GAIN * np.clip(v_raw, -1e3, ELU_KNEE) - ELU_OFFSET)
    out = np.where(v_raw < ELU_KNEE, soft, v_raw)
    return out if out.ndim else float(out)


def activate(raw) -> VirtualAction:
    raw = _finite_pair(raw)
    return VirtualAction(elu_velocity(raw[0]), float(raw[1]))


def activate_relu(raw) -> VirtualAction:
    """Rectifier variant used by the '-ELU' ablation."""
    raw = _finite_pair(raw)
    return VirtualAction(max(float(raw[0]), 0.0), float(raw[1]))


def scale_factor(virtual: VirtualAction, limits: RobotLimits) -> float:
    return max(virtual.v_tp / limits.v_m, abs(virtual.omega_tp) / limits.omega_m)


def to_executable(virtual: VirtualAction, limits: RobotLimits) -> ExecutableAction:
    v_tp, omega_tp = float(virtual.v_tp), float(virtual.omega_tp)
    if not (math.isfinite(v_tp) and math.isfinite(omega_tp)):
        raise ValueError(f"non-finite virtual action {virtual}")
    if v_tp < 0:
        raise ValueError(f"virtual translational velocity must be >= 0, got {v_tp}")
    k = max(scale_factor(virtual, limits), MIN_SCALE)
    return ExecutableAction(v=v_tp / k, omega=omega_tp / k, d=k * limits.tau_tp)


def direct_3d(raw, limits: RobotLimits, d_max: float = 3.0) -> ExecutableAction:
    """Clamp (v, omega) to the limits and squash the third output into (0, d_max]."""
    raw = _finite_pair(raw)
    if raw.size != 3:
        raise ValueError(f"direct 3D action needs 3 components, got {raw.size}")
    v = min(max(raw[0], 0.0), limits.v_m)
    omega = min(max(raw[1], -limits.omega_m), limits.omega_m)
    # numerically stable logistic
    z = raw[2]
    sig = 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))
    d = max(d_max * sig, MIN_DURATION)
    return ExecutableAction(v=float(v), omega=float(omega), d=float(d))
