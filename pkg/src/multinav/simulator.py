"""Executes agent actions against the ground truth and produces observations.

One instance per episode. With all noise sigmas at zero the whole episode is
a pure function of (map, episode, action sequence, seed): replays are
bit-stable, which the mapping soundness and determinism tests rely on.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .grid_world import Episode, GridMap


class Action(enum.Enum):
    FORWARD = "forward"
    TURN_LEFT = "turn_left"
    TURN_RIGHT = "turn_right"
    FOUND = "found"


@dataclass(frozen=True)
class AgentPose:
    x: float
    y: float
    heading: float  # radians in [0, 2*pi)


@dataclass(frozen=True)
class LidarScan:
    bearings: np.ndarray   # radians relative to heading, evenly spaced across fov
    ranges: np.ndarray     # meters; inf = no hit within max_range
    fov: float
    max_range: float

    @property
    def n_beams(self) -> int:
        return int(self.bearings.shape[0])


@dataclass(frozen=True)
class DetectionEvent:
    class_id: int
    pixel_fraction: float
    range: float    # meters, noisy when range_sigma > 0
    bearing: float  # radians relative to heading


@dataclass(frozen=True)
class NoiseModel:
    odom_trans_sigma: float = 0.0   # m per action
    odom_rot_sigma: float = 0.0     # rad per action
    range_sigma: float = 0.0        # m, detection range perturbation
    detection_dropout: float = 0.0  # per-event drop probability

    def __post_init__(self):
        for name in ("odom_trans_sigma", "odom_rot_sigma", "range_sigma",
                     "detection_dropout"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def is_exact(self) -> bool:
        return (self.odom_trans_sigma == 0 and self.odom_rot_sigma == 0
                and self.range_sigma == 0 and self.detection_dropout == 0)

    @classmethod
    def default(cls) -> "NoiseModel":
        return cls(odom_trans_sigma=0.005, odom_rot_sigma=0.0087,
                   range_sigma=0.02, detection_dropout=0.1)


@dataclass(frozen=True)
class SensorConfig:
    fov_h: float = math.radians(56.0)
    fov_v: float = math.radians(42.0)
    n_beams: int = 60
    max_range: float = 3.0


@dataclass(frozen=True)
class MotionConfig:
    forward_step: float = 0.25
    turn_angle: float = math.radians(30.0)
    robot_radius: float = 0.18
    found_radius: float = 1.0


@dataclass(frozen=True)
class StepOutcome:
    step: int
    true_pose: AgentPose
    odom_delta: tuple[float, float, float]  # body-frame (dx, dy, dtheta), noisy
    scan: LidarScan
    detections: tuple[DetectionEvent, ...]
    collided: bool
    target_found: bool
    target_index: int            # index of the goal to find next
    target_class: int | None     # class of that goal, None once all found
    all_goals_found: bool
    episode_over: bool
    failed: bool                 # wrong / out-of-range Found call


class SimulationError(RuntimeError):
    pass


def pixel_fraction(distance: float, radius: float, height: float,
                   fov_h: float, fov_v: float) -> float:
    """Angular-area proxy for a segmentation mask's pixel share.

    Product of the object's horizontal and vertical angular extents relative
    to the camera frustum, clamped to [0, 1]; strictly decreasing in distance.
    """
    if distance <= 0.0:
        return 1.0
    fh = 2.0 * math.atan(radius / distance) / fov_h
    fv = 2.0 * math.atan(0.5 * height / distance) / fov_v
    return min(1.0, max(0.0, fh * fv))


def raycast(grid: GridMap, pose: AgentPose, fov: float, n_beams: int,
            max_range: float) -> LidarScan:
    """Cast n_beams evenly spaced across fov, centered on the heading."""
    if n_beams == 1:
        bearings = np.zeros(1)
    else:
        bearings = np.linspace(-fov / 2.0, fov / 2.0, n_beams)
    ranges = np.empty(n_beams)
    angles = np.array([geometry.wrap_angle(pose.heading + b) for b in bearings])
    geometry.raycast_ranges(grid.obstacle, grid.resolution,
                            pose.x, pose.y, angles, max_range, ranges)
    return LidarScan(bearings=bearings, ranges=ranges, fov=fov, max_range=max_range)


def line_of_sight(grid: GridMap, pose: AgentPose, x: float, y: float) -> bool:
    """True if the ray from the pose to (x, y) meets no obstacle boundary first."""
    d = math.hypot(x - pose.x, y - pose.y)
    if d == 0.0:
        return True
    angle = math.atan2(y - pose.y, x - pose.x)
    hit = geometry.ray_range(grid.obstacle, grid.resolution,
                             pose.x, pose.y, angle, d)
    return hit == math.inf


def detect_objects(grid: GridMap, goals, pose: AgentPose, sensor: SensorConfig,
                   noise: NoiseModel, rng: np.random.Generator) -> tuple[DetectionEvent, ...]:
    """Geometric detection proxy: an object is seen iff its center is inside
    the horizontal FOV, within range, and the center ray is unoccluded."""
    events = []
    for goal in goals:
        d = math.hypot(goal.x - pose.x, goal.y - pose.y)
        if d == 0.0 or d > sensor.max_range:
            continue
        bearing = geometry.angle_diff(math.atan2(goal.y - pose.y, goal.x - pose.x),
                                      pose.heading)
        if abs(bearing) > sensor.fov_h / 2.0:
            continue
        if not line_of_sight(grid, pose, goal.x, goal.y):
            continue
        frac = pixel_fraction(d, goal.radius, goal.height,
                              sensor.fov_h, sensor.fov_v)
        if frac <= 0.0:
            continue
        if noise.detection_dropout > 0.0 and rng.random() < noise.detection_dropout:
            continue
        rng_range = d
        if noise.range_sigma > 0.0:
            rng_range = max(1e-6, d + noise.range_sigma * rng.standard_normal())
        events.append(DetectionEvent(class_id=goal.class_id, pixel_fraction=frac,
                                     range=rng_range, bearing=bearing))
    return tuple(events)


class Simulator:
    """Single-episode world stepper; not meant to be shared across threads."""

    def __init__(self, grid: GridMap, episode: Episode,
                 sensor: SensorConfig | None = None,
                 motion: MotionConfig | None = None,
                 noise: NoiseModel | None = None,
                 rng: np.random.Generator | None = None,
                 step_budget: int | None = None):
        self.grid = grid
        self.episode = episode
        self.sensor = sensor or SensorConfig()
        self.motion = motion or MotionConfig()
        self.noise = noise or NoiseModel()
        self.rng = rng if rng is not None else np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=episode.seed)))
        self.step_budget = episode.step_budget if step_budget is None else step_budget

        x, y, h = episode.start_pose
        if not grid.is_free_point(x, y):
            raise SimulationError("start pose is not in a free cell")
        self.pose = AgentPose(x, y, geometry.wrap_angle(h))
        self.step_count = 0
        self.target_index = 0
        self.all_goals_found = False
        self.failed = False
        self.episode_over = self.step_budget <= 0
        self.path_length = 0.0

    # -- observation assembly -------------------------------------------------

    def _goals_in_scene(self):
        # All objects stand in the scene for the whole episode; goals the
        # agent has not reached yet are detectable (and mappable) early.
        return self.episode.goals

    def _target_class(self) -> int | None:
        if self.target_index >= len(self.episode.goals):
            return None
        return self.episode.goals[self.target_index].class_id

    def _observe(self, odom_delta, collided, target_found) -> StepOutcome:
        scan = raycast(self.grid, self.pose, self.sensor.fov_h,
                       self.sensor.n_beams, self.sensor.max_range)
        detections = detect_objects(self.grid, self._goals_in_scene(), self.pose,
                                    self.sensor, self.noise, self.rng)
        return StepOutcome(step=self.step_count, true_pose=self.pose,
                           odom_delta=odom_delta, scan=scan, detections=detections,
                           collided=collided, target_found=target_found,
                           target_index=self.target_index,
                           target_class=self._target_class(),
                           all_goals_found=self.all_goals_found,
                           episode_over=self.episode_over, failed=self.failed)

    def reset(self) -> StepOutcome:
        return self._observe((0.0, 0.0, 0.0), collided=False, target_found=False)

    # -- stepping --------------------------------------------------------------

    def _noisy_delta(self, dx, dy, dh) -> tuple[float, float, float]:
        n = self.noise
        if n.odom_trans_sigma > 0.0:
            dx = dx + n.odom_trans_sigma * self.rng.standard_normal()
            dy = dy + n.odom_trans_sigma * self.rng.standard_normal()
        if n.odom_rot_sigma > 0.0:
            dh = dh + n.odom_rot_sigma * self.rng.standard_normal()
        return (dx, dy, dh)

    def step(self, action: Action) -> StepOutcome:
        if self.episode_over:
            raise SimulationError("step() after episode end")
        collided = False
        target_found = False
        true_delta = (0.0, 0.0, 0.0)

        if action is Action.FORWARD:
            nx, ny, nh = geometry.compose_pose(self.pose.x, self.pose.y,
                                               self.pose.heading,
                                               self.motion.forward_step, 0.0, 0.0)
            if geometry.swept_disk_hits(self.grid.obstacle, self.grid.resolution,
                                        self.pose.x, self.pose.y, nx, ny,
                                        self.motion.robot_radius):
                collided = True
            else:
                self.path_length += math.hypot(nx - self.pose.x, ny - self.pose.y)
                self.pose = AgentPose(nx, ny, nh)
                true_delta = (self.motion.forward_step, 0.0, 0.0)
        elif action is Action.TURN_LEFT:
            _, _, nh = geometry.compose_pose(self.pose.x, self.pose.y,
                                             self.pose.heading,
                                             0.0, 0.0, self.motion.turn_angle)
            self.pose = AgentPose(self.pose.x, self.pose.y, nh)
            true_delta = (0.0, 0.0, self.motion.turn_angle)
        elif action is Action.TURN_RIGHT:
            _, _, nh = geometry.compose_pose(self.pose.x, self.pose.y,
                                             self.pose.heading,
                                             0.0, 0.0, -self.motion.turn_angle)
            self.pose = AgentPose(self.pose.x, self.pose.y, nh)
            true_delta = (0.0, 0.0, -self.motion.turn_angle)
        elif action is Action.FOUND:
            goal = (self.episode.goals[self.target_index]
                    if self.target_index < len(self.episode.goals) else None)
            ok = (goal is not None
                  and math.hypot(goal.x - self.pose.x, goal.y - self.pose.y)
                  <= self.motion.found_radius
                  and line_of_sight(self.grid, self.pose, goal.x, goal.y))
            if ok:
                target_found = True
                self.target_index += 1
                if self.target_index == len(self.episode.goals):
                    self.all_goals_found = True
                    self.episode_over = True
            else:
                self.failed = True
                self.episode_over = True
        else:
            raise SimulationError(f"unknown action {action!r}")

        self.step_count += 1
        if self.step_count >= self.step_budget:
            self.episode_over = True
        odom = true_delta if self.noise.is_exact else self._noisy_delta(*true_delta)
        return self._observe(odom, collided, target_found)
