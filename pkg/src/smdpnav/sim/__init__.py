from .env import (ARRIVED, COLLIDED, MODE1, MODE2, MODE2_INTERVAL, NONE, RewardParams, RobotSpec,
                  Simulator, StepOutcome, TrajectoryRow, read_trajectory, reward, step, write_trajectory)
from .kinematics import arc_points, propagate_arc
from .sensors import (LidarSpec, LocalMapBuilder, Observation, build_observation, goal_in_robot_frame,
                      raycast_scan)
from .world import CollisionChecker, WorldMap, connected, free_space_mask, load_world, read_world, write_world
