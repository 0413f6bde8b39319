"""Small configs and fixed scenarios for fast training tests."""

import numpy as np

from smdpnav.config import TrainConfig
from smdpnav.scenarios import Scenario, preset
from smdpnav.sim.world import WorldMap
from smdpnav.smdp import Pose

TINY_NET = {"conv_channels": [4, 8], "hidden": [32]}


def tiny_config(**kw):
    base = dict(epochs=2, steps_per_epoch=96, max_episode_steps=30, n_workers=3, seed=0, scenario="desk",
                local_map_resolution=0.2, lidar_beams=61, net=TINY_NET, policy_iters=2, value_iters=2,
                chunk_size=40, checkpoint_every=1)
    base.update(kw)
    return TrainConfig(**base)


def wall_scenario(gap=0.3):
    """Open 4 x 4 m box; robot at (2, 2) facing +x with a wall face ``gap`` m beyond its rim."""
    res = 0.05
    g = np.zeros((80, 80), bool)
    g[0, :] = g[-1, :] = g[:, 0] = g[:, -1] = True
    col = int(round((2.0 + 0.17 + gap) / res))
    g[:, col:] = True
    world = WorldMap(g, res)
    return Scenario(world, Pose(2.0, 2.0, 0.0), np.array([0.5, 3.5]), preset("desk"),
                    (2, 2, 2, 2), (0.5, 3.5, 0.5, 3.5))
