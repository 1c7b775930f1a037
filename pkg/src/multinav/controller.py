"""Hybrid agent: explore/exploit switching, waypoint dispatch, local driving.

The outer loop proposes a waypoint, either from the masked exploration
heatmap or from the semantic-cloud entry of the current target; the inner
loop drives at most five 0.3 m subgoals along the planned path before
control returns to the outer loop. Belief updates run on every environment
step and the mode is re-evaluated every step, so the agent flips to
exploitation the moment the target lands in the cloud.
"""

from __future__ import annotations

import enum
import math
from collections import deque

import numpy as np
from scipy import ndimage

from . import exploration, geometry
from .mapping import (DEFAULT_EGOMAP_SIDE, DEFAULT_MAP_THRESHOLD,
                      DEFAULT_MERGE_RADIUS, UNKNOWN, OccupancyMap,
                      PoseEstimate, SemanticPointCloud, integrate_odometry)
from .planning import (DEFAULT_SUBGOAL_LIMIT, DEFAULT_SUBGOAL_SPACING,
                       DStarLite, PlanGrid, Unreachable, chain_subgoals)
from .simulator import Action, MotionConfig, StepOutcome

FOUND_TRIGGER = 0.05          # pixel fraction required to call Found
HEADING_TOLERANCE = math.radians(15.0)
ARRIVAL_RADIUS = 0.2          # m, subgoal pop distance
SWEEP_TURNS = 12              # full rotation at 30 degrees per turn
DISPATCH_RETRIES = 12
GOAL_SNAP_RADIUS = 1.0        # m, exploit goals may sit in inflated cells


class AgentMode(enum.Enum):
    EXPLORE = "explore"
    EXPLOIT = "exploit"


def select_mode(cloud: SemanticPointCloud, target_class: int | None):
    """Exploit toward the best-confidence entry of the target class when one
    is mapped, otherwise explore. Returns (mode, entry-or-None)."""
    if target_class is None:
        return AgentMode.EXPLORE, None
    entry = cloud.best(target_class)
    if entry is None:
        return AgentMode.EXPLORE, None
    return AgentMode.EXPLOIT, entry


class HybridAgent:
    """Geometric mapping + incremental planning + scripted exploration policy."""

    name = "hybrid"

    def __init__(self, policy: exploration.ExplorationPolicy,
                 rng: np.random.Generator,
                 motion: MotionConfig | None = None,
                 egomap_side: int = DEFAULT_EGOMAP_SIDE,
                 found_trigger: float = FOUND_TRIGGER,
                 map_threshold: float = DEFAULT_MAP_THRESHOLD,
                 merge_radius: float = DEFAULT_MERGE_RADIUS,
                 subgoal_spacing: float = DEFAULT_SUBGOAL_SPACING,
                 subgoal_limit: int = DEFAULT_SUBGOAL_LIMIT,
                 explore_only: bool = False,
                 greedy: bool = False,
                 preseed_goals=None):
        self.policy = policy
        self.rng = rng
        self.motion = motion or MotionConfig()
        self.egomap_side = egomap_side
        self.found_trigger = found_trigger
        self.map_threshold = map_threshold
        self.merge_radius = merge_radius
        self.subgoal_spacing = subgoal_spacing
        self.subgoal_limit = subgoal_limit
        self.explore_only = explore_only
        self.greedy = greedy
        self.preseed_goals = tuple(preseed_goals) if preseed_goals else ()
        # random baseline keeps Found but never navigates to cloud entries
        self.exploit_enabled = not explore_only

    # -- lifecycle -----------------------------------------------------------

    def reset(self, first_obs: StepOutcome, map_shape: tuple[int, int],
              resolution: float) -> None:
        pose = first_obs.true_pose
        # the initial pose anchor is known (standard deployment assumption);
        # everything after it is dead reckoning
        self.estimate = PoseEstimate(pose.x, pose.y, pose.heading, step=0)
        self.belief = OccupancyMap(resolution, map_shape[0], map_shape[1])
        self.cloud = SemanticPointCloud(self.map_threshold, self.merge_radius)
        for goal in self.preseed_goals:
            self.cloud.seed(goal.class_id, goal.x, goal.y)
        self.policy_state = self.policy.initial_state()
        self.belief.integrate_scan(self.estimate, first_obs.scan)
        self.cloud.update(first_obs.detections, self.estimate)
        self.plan_grid = PlanGrid(self.belief, self.motion.robot_radius)
        self.planner: DStarLite | None = None
        self.mode = AgentMode.EXPLORE
        self.waypoint_world: tuple[float, float] | None = None
        self.exploit_entry = None
        self.chain: deque[tuple[float, float]] = deque()
        self.chain_terminal = False
        self.subgoals_used = 0
        self.pending_turns = 0
        self.sweep_reason: str | None = None  # "verify" | "no_frontier"
        self.current_path: list[tuple[int, int]] = []
        self._dirty = False
        self._collisions = 0
        self._reachable_cache: tuple | None = None

    # -- per-step sensing ------------------------------------------------------

    def absorb(self, obs: StepOutcome) -> None:
        """Fold one step outcome into the belief. The harness calls this once
        per simulator step, including the terminal one; reset() covers the
        initial observation."""
        self.estimate = integrate_odometry(self.estimate, obs.odom_delta)
        changed = self.belief.integrate_scan(self.estimate, obs.scan)
        if changed.shape[0]:
            flipped = self.plan_grid.apply_changes(self.belief, changed)
            if flipped:
                self._dirty = True
                if self.planner is not None:
                    self.planner.notify_changes(flipped)
        self.cloud.update(obs.detections, self.estimate)
        if obs.collided:
            self._collisions += 1
        else:
            self._collisions = 0
        if obs.target_found:
            self._clear_dispatch()

    def _clear_dispatch(self) -> None:
        self.planner = None
        self.waypoint_world = None
        self.exploit_entry = None
        self.chain.clear()
        self.chain_terminal = False
        self.subgoals_used = 0
        self.current_path = []

    def _start_sweep(self, reason: str) -> Action:
        self.pending_turns = SWEEP_TURNS - 1
        self.sweep_reason = reason
        return Action.TURN_LEFT

    # -- found gate --------------------------------------------------------------

    def maybe_found(self, detections, target_class: int | None) -> bool:
        """Found fires when a detection of the target class carries at least
        the trigger pixel fraction and lies within the found radius."""
        if target_class is None or self.explore_only:
            return False
        for det in detections:
            if (det.class_id == target_class
                    and det.pixel_fraction >= self.found_trigger
                    and det.range <= self.motion.found_radius):
                return True
        return False

    # -- waypoint proposal ---------------------------------------------------------

    def _agent_cell(self) -> tuple[int, int]:
        return geometry.cell_of(self.estimate.x, self.estimate.y,
                                self.belief.resolution)

    def _reachable(self) -> np.ndarray:
        """Flood fill over passable cells from the agent, cached per revision."""
        r, c = self.plan_grid.to_local(self._agent_cell())
        key = (self.plan_grid.revision, r, c)
        if self._reachable_cache is not None and self._reachable_cache[0] == key:
            return self._reachable_cache[1]
        passable = self.plan_grid.passable
        h, w = passable.shape
        mask = np.zeros((h, w), dtype=bool)
        r = min(max(r, 0), h - 1)
        c = min(max(c, 0), w - 1)
        stack = [(r, c)]
        mask[r, c] = True
        while stack:
            cr, cc = stack.pop()
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, c2 = cr + dr, cc + dc
                    if 0 <= rr < h and 0 <= c2 < w and not mask[rr, c2] \
                            and passable[rr, c2]:
                        mask[rr, c2] = True
                        stack.append((rr, c2))
        self._reachable_cache = (key, mask)
        return mask

    def _snap_to_passable(self, cell: tuple[int, int]) -> tuple[int, int] | None:
        """Nearest passable cell (ties by index order), within the snap radius."""
        if self.plan_grid.is_passable(cell):
            return cell
        n = int(GOAL_SNAP_RADIUS / self.belief.resolution)
        best = None
        for dr in range(-n, n + 1):
            for dc in range(-n, n + 1):
                cand = (cell[0] + dr, cell[1] + dc)
                if not self.plan_grid.is_passable(cand):
                    continue
                key = (math.hypot(dr, dc), cand)
                if best is None or key < best:
                    best = key
        return best[1] if best else None

    def _propose_explore_waypoint(self) -> tuple[float, float] | None:
        egomap = self.belief.extract_egomap(self.estimate, self.egomap_side)
        raw, self.policy_state = self.policy.update(egomap, self.policy_state)
        masked = exploration.mask_unexplored(raw, egomap)
        if self.greedy:
            cell = exploration.argmax_waypoint(masked)
        else:
            cell = exploration.sample_waypoint(masked, self.rng)
        if cell is not None:
            return egomap.cell_to_world(*cell)
        return self._global_unknown_waypoint()

    def _global_unknown_waypoint(self) -> tuple[float, float] | None:
        """Uniform draw over still-unknown belief cells bordering the
        reachable region (the fallback once the EgoMap crop is exhausted)."""
        unknown = self.belief.state == UNKNOWN
        near = ndimage.binary_dilation(self._reachable(),
                                       structure=np.ones((3, 3), bool))
        cand_r, cand_c = np.nonzero(unknown & near)
        if cand_r.size == 0:
            return None
        i = int(self.rng.integers(cand_r.size))
        res = self.belief.resolution
        return ((cand_c[i] + self.belief.off_c + 0.5) * res,
                (cand_r[i] + self.belief.off_r + 0.5) * res)

    def _desired_mode(self, target_class: int | None):
        if not self.exploit_enabled:
            return AgentMode.EXPLORE, None
        return select_mode(self.cloud, target_class)

    def _propose_waypoint(self, target_class: int | None):
        """Returns (mode, entry, waypoint) or None when nothing can be proposed."""
        mode, entry = self._desired_mode(target_class)
        if mode is AgentMode.EXPLOIT:
            return mode, entry, (entry.x, entry.y)
        waypoint = self._propose_explore_waypoint()
        if waypoint is None:
            return None
        return mode, entry, waypoint

    # -- dispatch ---------------------------------------------------------------

    def _dispatch(self, target_class: int | None) -> str:
        """Pick a waypoint and build planner + chain.

        Returns "ok" when a chain is ready, "sweep" when a verification sweep
        was queued, "none" when no waypoint could be produced at all.
        """
        for _ in range(DISPATCH_RETRIES):
            proposal = self._propose_waypoint(target_class)
            if proposal is None:
                return "none"
            mode, entry, waypoint = proposal
            self.mode = mode
            self.exploit_entry = entry
            goal_cell = self._snap_to_passable(
                geometry.cell_of(waypoint[0], waypoint[1], self.belief.resolution))
            if goal_cell is None:
                if entry is not None:
                    self.cloud.demote(entry)
                continue
            try:
                planner = DStarLite(self.plan_grid, self._agent_cell(), goal_cell)
                path = planner.plan()
            except Unreachable:
                if entry is not None:
                    self.cloud.demote(entry)
                continue
            self.planner = planner
            self.waypoint_world = waypoint
            self.current_path = path
            chain = chain_subgoals(path, self.belief.resolution,
                                   self.subgoal_spacing, self.subgoal_limit)
            self.chain = deque(chain.waypoints)
            self.chain_terminal = chain.terminal
            self.subgoals_used = 0
            self._dirty = False
            if not self.chain:
                # standing at the waypoint already
                if mode is AgentMode.EXPLOIT:
                    return "sweep"
                continue
            return "ok"
        return "none"

    # -- inner loop -----------------------------------------------------------------

    def _replan_chain(self) -> bool:
        """Refresh the remaining chain after map changes; False if unreachable."""
        if self.planner is None:
            return False
        try:
            path = self.planner.plan(self._agent_cell())
        except Unreachable:
            return False
        self.current_path = path
        remaining = max(self.subgoal_limit - self.subgoals_used, 0)
        chain = chain_subgoals(path, self.belief.resolution,
                               self.subgoal_spacing, remaining)
        self.chain = deque(chain.waypoints)
        self.chain_terminal = chain.terminal
        self._dirty = False
        return True

    def _inner_action(self) -> Action | str:
        """Drive the active chain. Returns an Action, or one of the control
        strings "redispatch" / "arrived" when the outer loop must take over."""
        if self._dirty:
            if not self._replan_chain():
                return "redispatch"
        while self.chain:
            x, y = self.chain[0]
            if math.hypot(x - self.estimate.x, y - self.estimate.y) > ARRIVAL_RADIUS:
                bearing = math.atan2(y - self.estimate.y, x - self.estimate.x)
                err = geometry.angle_diff(bearing, self.estimate.heading)
                if abs(err) > HEADING_TOLERANCE:
                    return Action.TURN_LEFT if err > 0 else Action.TURN_RIGHT
                return Action.FORWARD
            self.chain.popleft()
            self.subgoals_used += 1
            if self.subgoals_used >= self.subgoal_limit and self.chain:
                return "redispatch"
        return "arrived" if self.chain_terminal else "redispatch"

    # -- main step ----------------------------------------------------------------------

    def act(self, obs: StepOutcome) -> Action:
        """Decide the next action; obs must be the outcome last absorbed."""
        target = obs.target_class

        if self.maybe_found(obs.detections, target):
            return Action.FOUND

        desired_mode, desired_entry = self._desired_mode(target)

        if self.pending_turns > 0:
            if self.sweep_reason == "no_frontier" and desired_mode is AgentMode.EXPLOIT:
                self.pending_turns = 0
                self.sweep_reason = None
            else:
                self.pending_turns -= 1
                if self.pending_turns == 0:
                    reason, self.sweep_reason = self.sweep_reason, None
                    if reason == "verify" and self.exploit_entry is not None:
                        # false positive: nothing triggered at the mapped spot
                        self.cloud.demote(self.exploit_entry)
                        self._clear_dispatch()
                return Action.TURN_LEFT

        # mode transitions abandon the current chain
        if self.chain or self.planner is not None:
            if desired_mode is not self.mode:
                self._clear_dispatch()
            elif (self.mode is AgentMode.EXPLOIT and desired_entry is not None
                  and self.waypoint_world is not None
                  and math.hypot(desired_entry.x - self.waypoint_world[0],
                                 desired_entry.y - self.waypoint_world[1]) > 0.25):
                self._clear_dispatch()

        if self._collisions >= 2:
            # repeated bumps: the belief around here is stale or too tight
            self._clear_dispatch()
            self._collisions = 0
            if not self._dirty:
                self.pending_turns = 2
                self.sweep_reason = "no_frontier"
                self.pending_turns -= 1
                return Action.TURN_LEFT

        for _ in range(DISPATCH_RETRIES):
            if not self.chain:
                outcome = self._dispatch(target)
                if outcome == "none":
                    return self._start_sweep("no_frontier")
                if outcome == "sweep":
                    return self._start_sweep("verify")
            result = self._inner_action()
            if isinstance(result, Action):
                return result
            if result == "arrived":
                if self.mode is AgentMode.EXPLOIT and self.exploit_entry is not None:
                    self._clear_dispatch_keep_entry()
                    return self._start_sweep("verify")
                self._clear_dispatch()
            else:
                # chain budget exhausted or replan came back unreachable;
                # either way the outer loop proposes afresh (an unreachable
                # exploit target gets demoted inside the next dispatch)
                self._clear_dispatch()
        # could not settle on anything drivable; rotate to gather information
        return Action.TURN_LEFT

    def _clear_dispatch_keep_entry(self) -> None:
        entry = self.exploit_entry
        self._clear_dispatch()
        self.exploit_entry = entry

    # -- trace introspection ------------------------------------------------------

    @property
    def mode_name(self) -> str:
        return self.mode.value

    @property
    def chain_step(self) -> int:
        return self.subgoals_used


class RandomWaypointAgent(HybridAgent):
    """Waypoints drawn uniformly from the reachable belief; never exploits."""

    name = "random"

    def __init__(self, rng: np.random.Generator, **kwargs):
        kwargs.setdefault("policy", exploration.UniformUnexploredPolicy())
        super().__init__(rng=rng, **kwargs)
        self.exploit_enabled = False

    def _propose_waypoint(self, target_class):
        reach = self._reachable()
        rr, cc = np.nonzero(reach)
        if rr.size == 0:
            return None
        i = int(self.rng.integers(rr.size))
        res = self.belief.resolution
        waypoint = ((cc[i] + self.plan_grid.off_c + 0.5) * res,
                    (rr[i] + self.plan_grid.off_r + 0.5) * res)
        return AgentMode.EXPLORE, None, waypoint
