"""Gaussian policy and value networks over (local map, relative goal) observations."""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NetConfig:
    map_cells: int = 120
    conv_channels: Tuple[int, ...] = (16, 32, 32)
    kernel: int = 4
    hidden: Tuple[int, ...] = (256, 256)
    action_dim: int = 2
    log_std_init: float = math.log(0.5)
    log_std_min: float = math.log(0.01)
    log_std_max: float = math.log(2.0)
    # value head output is multiplied by this so returns in the hundreds are reachable
    value_scale: float = 100.0
    # relative goal (meters) is divided by this before entering the trunk
    goal_scale: float = 5.0

    @classmethod
    def from_dict(cls, d: dict) -> "NetConfig":
        d = dict(d)
        for k in ("conv_channels", "hidden"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


class Trunk(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        layers, ch, size = [], 1, cfg.map_cells
        for out in cfg.conv_channels:
            layers += [nn.Conv2d(ch, out, cfg.kernel, stride=2, padding=1), nn.ReLU()]
            ch, size = out, (size + 2 - cfg.kernel) // 2 + 1
        self.conv = nn.Sequential(*layers, nn.Flatten())
        width = ch * size * size + 2
        fcs = []
        for h in cfg.hidden:
            fcs += [nn.Linear(width, h), nn.ReLU()]
            width = h
        self.fc = nn.Sequential(*fcs)
        self.out_features = width
        self.goal_scale = cfg.goal_scale

    def forward(self, maps: torch.Tensor, goals: torch.Tensor) -> torch.Tensor:
        feats = self.conv(maps.unsqueeze(1))
        return self.fc(torch.cat([feats, goals / self.goal_scale], dim=1))


class PolicyNet(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.trunk = Trunk(cfg)
        self.mean = nn.Linear(self.trunk.out_features, cfg.action_dim)
        with torch.no_grad():
            self.mean.weight.mul_(0.01)
            self.mean.bias.zero_()
        self.log_std = nn.Parameter(torch.full((cfg.action_dim,), float(cfg.log_std_init)))

    def forward(self, maps, goals):
        mean = self.mean(self.trunk(maps, goals))
        log_std = self.log_std.clamp(self.cfg.log_std_min, self.cfg.log_std_max)
        return mean, log_std.expand_as(mean)


class ValueNet(nn.Module):
    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.trunk = Trunk(cfg)
        self.head = nn.Linear(self.trunk.out_features, 1)

    def forward(self, maps, goals):
        return self.head(self.trunk(maps, goals)).squeeze(-1) * self.cfg.value_scale


def build_networks(cfg: NetConfig, seed: int, dtype=torch.float32) -> Tuple[PolicyNet, ValueNet]:
    gen_state = torch.random.get_rng_state()
    torch.manual_seed(seed)
    try:
        policy, value = PolicyNet(cfg), ValueNet(cfg)
    finally:
        torch.random.set_rng_state(gen_state)
    return policy.to(dtype), value.to(dtype)


def as_batch(observations, dtype=torch.float32) -> Tuple[torch.Tensor, torch.Tensor]:
    maps = np.stack([np.asarray(o.local_map) for o in observations])
    goals = np.stack([np.asarray(o.goal_rel) for o in observations])
    return torch.as_tensor(maps, dtype=dtype), torch.as_tensor(goals, dtype=dtype)


def policy_forward(policy: PolicyNet, observation) -> Tuple[np.ndarray, np.ndarray]:
    dtype = next(policy.parameters()).dtype
    with torch.no_grad():
        mean, log_std = policy(*as_batch([observation], dtype))
    return mean[0].double().numpy(), log_std[0].double().numpy()


def value_forward(value: ValueNet, observation) -> float:
    dtype = next(value.parameters()).dtype
    with torch.no_grad():
        return float(value(*as_batch([observation], dtype))[0])


def gaussian_log_prob_np(x, mean, log_std) -> float:
    x, mean, log_std = (np.asarray(a, dtype=np.float64) for a in (x, mean, log_std))
    z = (x - mean) * np.exp(-log_std)
    return float(np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI))


def sample_raw_action(mean, log_std, rng: np.random.Generator) -> Tuple[np.ndarray, float]:
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(log_std))):
        raise ValueError("mean and log_std must be finite")
    raw = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return raw, gaussian_log_prob_np(raw, mean, log_std)


def gaussian_log_prob(mean: torch.Tensor, log_std: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
    z = (x - mean) * torch.exp(-log_std)
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(dim=-1)


def _check_finite(*arrays):
    for a in arrays:
        if not torch.all(torch.isfinite(a)):
            raise ValueError("non-finite input to loss")


def surrogate_terms(ratio: torch.Tensor, adv: torch.Tensor, clip: float) -> torch.Tensor:
    """Per-sample min(ratio * A, g(clip, A)) with g = (1 + clip) A for A >= 0, else (1 - clip) A."""
    bound = torch.where(adv >= 0, (1.0 + clip) * adv, (1.0 - clip) * adv)
    return torch.minimum(ratio * adv, bound)


def ppo_policy_loss(policy: PolicyNet, old_log_probs, maps, goals, raw_actions, advantages,
                    clip: float) -> Tuple[torch.Tensor, Dict[str, float]]:
    """Negated mean clipped surrogate; minimizing it ascends the PPO objective."""
    old_log_probs, maps, goals, raw_actions, advantages = (
        torch.as_tensor(a) for a in (old_log_probs, maps, goals, raw_actions, advantages))
    _check_finite(old_log_probs, raw_actions, advantages)
    mean, log_std = policy(maps, goals)
    # log-probs in float64, as at collection time, so fresh ratios are 1 to rounding
    new_lp = gaussian_log_prob(mean.double(), log_std.double(), raw_actions.double())
    ratio = torch.exp(new_lp - old_log_probs.double())
    adv = advantages.double()
    loss = -surrogate_terms(ratio, adv, clip).mean()
    with torch.no_grad():
        clipped = ((adv >= 0) & (ratio > 1 + clip)) | ((adv < 0) & (ratio < 1 - clip))
        stats = {"ratio_mean": float(ratio.mean()), "ratio_max_dev": float((ratio - 1).abs().max()),
                 "clip_fraction": float(clipped.double().mean())}
    return loss, stats


def value_loss(value: ValueNet, maps, goals, returns) -> torch.Tensor:
    maps, goals, returns = (torch.as_tensor(a) for a in (maps, goals, returns))
    _check_finite(returns)
    v = value(maps, goals)
    return ((returns.to(v.dtype) - v) ** 2).mean()


def loss_and_grad(module: nn.Module, loss: torch.Tensor) -> Tuple[float, list]:
    params = [p for p in module.parameters()]
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    return loss.item(), [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"SMDPNAV-CKPT\x00\x01"


def _tensor_items(prefix: str, state: dict):
    for k in sorted(state):
        yield f"{prefix}.{k}", state[k]


def save_checkpoint(path, policy: PolicyNet, value: ValueNet, *, step: int, epoch: int,
                    optimizers: Optional[Dict[str, torch.optim.Optimizer]] = None,
                    extra: Optional[dict] = None) -> Path:
    """Write a self-describing binary checkpoint.

    Layout: magic, 8-byte header length, JSON header (sorted keys), then the
    raw little-endian bytes of every tensor in header order.  No timestamps
    are written, so identical state gives identical bytes.
    """
    tensors = list(_tensor_items("policy", policy.state_dict())) + list(_tensor_items("value", value.state_dict()))
    opt_meta = {}
    for name, opt in sorted((optimizers or {}).items()):
        sd = opt.state_dict()
        opt_meta[name] = {"param_groups": sd["param_groups"]}
        for idx in sorted(sd["state"]):
            for key in sorted(sd["state"][idx]):
                val = sd["state"][idx][key]
                tensors.append((f"opt.{name}.{idx}.{key}", torch.as_tensor(val)))
    entries, blobs, offset = [], [], 0
    for name, t in tensors:
        arr = t.detach().cpu().contiguous().numpy()
        arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {"format": 1, "net": asdict(policy.cfg), "value_net": asdict(value.cfg), "step": int(step),
              "epoch": int(epoch), "tensors": entries, "optimizers": opt_meta, "extra": extra or {}}
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        for b in blobs:
            fh.write(b)
    tmp.replace(path)
    return path


@dataclass
class Checkpoint:
    policy: PolicyNet
    value: ValueNet
    step: int
    epoch: int
    optimizer_states: Dict[str, dict] = field(default_factory=dict)
    extra: dict = field(default_factory=dict)


def load_checkpoint(path, net_cfg: Optional[NetConfig] = None) -> Checkpoint:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path} is not a checkpoint file")
    pos = len(MAGIC)
    (hlen,) = struct.unpack("<Q", data[pos:pos + 8])
    pos += 8
    header = json.loads(data[pos:pos + hlen])
    pos += hlen
    cfg = NetConfig.from_dict(header["net"])
    if net_cfg is not None and net_cfg != cfg:
        raise ValueError(f"checkpoint architecture {cfg} does not match expected {net_cfg}")
    tensors = {}
    for e in header["tensors"]:
        arr = np.frombuffer(data, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=np.int64)),
                            offset=pos + e["offset"]).reshape(e["shape"])
        tensors[e["name"]] = torch.from_numpy(arr.copy())
    dtype = tensors["policy.log_std"].dtype
    policy = PolicyNet(cfg).to(dtype)
    value = ValueNet(NetConfig.from_dict(header["value_net"])).to(dtype)
    policy.load_state_dict({k[len("policy."):]: v for k, v in tensors.items() if k.startswith("policy.")})
    value.load_state_dict({k[len("value."):]: v for k, v in tensors.items() if k.startswith("value.")})
    opt_states = {}
    for name, meta in header["optimizers"].items():
        state: Dict[int, dict] = {}
        prefix = f"opt.{name}."
        for k, v in tensors.items():
            if k.startswith(prefix):
                idx, key = k[len(prefix):].split(".", 1)
                state.setdefault(int(idx), {})[key] = v
        opt_states[name] = {"state": state, "param_groups": meta["param_groups"]}
    return Checkpoint(policy, value, header["step"], header["epoch"], opt_states, header["extra"])
