"""Multi-object navigation benchmark: deterministic grid simulator plus a
hybrid mapping / incremental-planning / exploration agent and its metrics."""

from .grid_world import (Episode, GoalObject, GridMap, generate_episode,
                         generate_maze, load_episode, load_map, save_episode,
                         save_map)
from .simulator import (Action, AgentPose, DetectionEvent, LidarScan,
                        MotionConfig, NoiseModel, SensorConfig, Simulator,
                        StepOutcome, detect_objects, pixel_fraction, raycast)
from .mapping import (EgoMap, OccupancyMap, PoseEstimate, SemanticPointCloud,
                      integrate_odometry)
from .planning import (DStarLite, PlanGrid, SubgoalChain, Unreachable,
                       chain_subgoals, dijkstra_oracle, path_cost)
from .exploration import (ExplorationPolicy, InfoGainPolicy,
                          NearestFrontierPolicy, PolicyState,
                          UniformUnexploredPolicy, compute_reward, coverage,
                          mask_unexplored, sample_waypoint)
from .controller import AgentMode, HybridAgent, RandomWaypointAgent, select_mode
from .metrics import EpisodeResult, aggregate, oracle_prefix_lengths, ppl, spl
from .config import RunConfig, load_config
from .harness import baseline_agents, run_batch, run_episode, run_to_directory

__version__ = "0.1.0"
