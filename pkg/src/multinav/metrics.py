"""Multi-object navigation metrics: Progress, PPL, Success, SPL, coverage.

Optimal prefix lengths are computed on the ground-truth grid with the same
robot-radius inflation the agent plans under, and each goal is "reached" at
its Found trigger region (within the found radius and line of sight), so
the oracle is a true lower bound for any trajectory that triggers the goals
in order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .grid_world import Episode, GridMap
from .planning import DEFAULT_ROBOT_RADIUS, SQRT2, dijkstra_seeded
from .simulator import MotionConfig

METRIC_NAMES = ("progress", "ppl", "success", "spl")


@dataclass
class EpisodeResult:
    episode_index: int
    map_id: str
    seed: int
    goals_found: int
    n_goals: int
    agent_path_length: float
    path_length_at_last_found: float
    oracle_prefix_lengths: tuple[float, ...]  # meters, through the first k goals
    steps_used: int
    final_coverage: float
    coverage_curve: list[tuple[int, float]] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.goals_found == self.n_goals


def progress(result: EpisodeResult) -> float:
    return result.goals_found / result.n_goals


def success(result: EpisodeResult) -> float:
    return 1.0 if result.success else 0.0


def spl(result: EpisodeResult) -> float:
    if not result.success:
        return 0.0
    optimum = result.oracle_prefix_lengths[-1]
    return optimum / max(result.agent_path_length, optimum)


def ppl(result: EpisodeResult) -> float:
    g = result.goals_found
    if g == 0:
        return 0.0
    optimum = result.oracle_prefix_lengths[g - 1]
    if optimum <= 0.0:
        return progress(result)
    return progress(result) * optimum / max(result.path_length_at_last_found, optimum)


def aggregate(results: list[EpisodeResult]) -> dict[str, float]:
    """Means of the four metrics, scaled to percentages."""
    if not results:
        return {name: 0.0 for name in METRIC_NAMES}
    funcs = {"progress": progress, "ppl": ppl, "success": success, "spl": spl}
    return {name: 100.0 * sum(funcs[name](r) for r in results) / len(results)
            for name in METRIC_NAMES}


def _inflated_passable(world: GridMap, robot_radius: float) -> np.ndarray:
    from scipy import ndimage
    reach = robot_radius + world.resolution * SQRT2 / 2.0
    dist = ndimage.distance_transform_edt(~world.obstacle.astype(bool))
    return dist * world.resolution >= reach


def _trigger_region(world: GridMap, passable: np.ndarray, goal,
                    found_radius: float) -> list[tuple[int, int]]:
    """Passable cells whose center lies within the found radius of the goal
    and has line of sight to it."""
    res = world.resolution
    n = int(math.ceil(found_radius / res)) + 1
    gr, gc = geometry.cell_of(goal.x, goal.y, res)
    cells = []
    for r in range(gr - n, gr + n + 1):
        for c in range(gc - n, gc + n + 1):
            if not (0 <= r < world.height and 0 <= c < world.width):
                continue
            if not passable[r, c]:
                continue
            x, y = (c + 0.5) * res, (r + 0.5) * res
            d = math.hypot(goal.x - x, goal.y - y)
            if d > found_radius:
                continue
            if d > 0.0:
                hit = geometry.ray_range(world.obstacle, res, x, y,
                                         math.atan2(goal.y - y, goal.x - x), d)
                if hit != math.inf:
                    continue
            cells.append((r, c))
    return cells


def oracle_prefix_lengths(world: GridMap, episode: Episode,
                          motion: MotionConfig | None = None,
                          robot_radius: float = DEFAULT_ROBOT_RADIUS
                          ) -> tuple[float, ...]:
    """Shortest ordered-tour lengths (m) from the start through the trigger
    regions of goals 1..k, for every k."""
    motion = motion or MotionConfig()
    res = world.resolution
    passable = _inflated_passable(world, robot_radius)
    start = geometry.cell_of(episode.start_pose[0], episode.start_pose[1], res)
    if not passable[start]:
        passable = passable.copy()
        passable[start] = True
    dist = dijkstra_seeded(passable, [(start, 0.0)])
    lengths: list[float] = []
    for goal in episode.goals:
        region = _trigger_region(world, passable, goal, motion.found_radius)
        if not region:
            lengths.append(math.inf)
            break
        best = min(float(dist[cell]) for cell in region)
        if math.isinf(best):
            lengths.append(math.inf)
            break
        lengths.append(best * res)
        seeds = [(cell, float(dist[cell])) for cell in region
                 if math.isfinite(dist[cell])]
        dist = dijkstra_seeded(passable, seeds)
    while len(lengths) < len(episode.goals):
        lengths.append(math.inf)
    return tuple(lengths)


# -- summary CSV -----------------------------------------------------------------

CSV_COLUMNS = ("episode", "map_id", "seed", "steps_used", "goals_found", "n_goals",
               "path_length", "path_at_last_found", "oracle_l1", "oracle_l2",
               "oracle_l3", "coverage", "progress", "ppl", "success", "spl")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def summary_rows(results: list[EpisodeResult]) -> list[list[str]]:
    rows = [list(CSV_COLUMNS)]
    for r in results:
        oracle = list(r.oracle_prefix_lengths) + [math.nan] * (3 - len(r.oracle_prefix_lengths))
        rows.append([_fmt(v) for v in (
            r.episode_index, r.map_id, r.seed, r.steps_used, r.goals_found,
            r.n_goals, r.agent_path_length, r.path_length_at_last_found,
            oracle[0], oracle[1], oracle[2], r.final_coverage,
            progress(r), ppl(r), success(r), spl(r))])
    agg = aggregate(results)
    rows.append(["aggregate", "", "", "", "", "", "", "", "", "", "", "",
                 _fmt(agg["progress"]), _fmt(agg["ppl"]),
                 _fmt(agg["success"]), _fmt(agg["spl"])])
    return rows


def write_summary(results: list[EpisodeResult]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(summary_rows(results))
    return buf.getvalue()


def save_summary(results: list[EpisodeResult], path) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(write_summary(results))
