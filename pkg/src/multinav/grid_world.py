"""Ground-truth world model: static maps, goal objects, episode specs."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

N_OBJECT_CLASSES = 8

DEFAULT_RESOLUTION = 0.05        # m per cell
DEFAULT_GOAL_RADIUS = 0.15       # m; stand-in, the benchmark never states object size
DEFAULT_GOAL_HEIGHT = 0.30       # m
DEFAULT_MIN_SEPARATION = 2.0     # m between start and goals, pairwise
DEFAULT_GOAL_CLEARANCE = 0.22    # m from the nearest obstacle; keeps objects off walls
DEFAULT_START_CLEARANCE = 0.22   # m; the robot disk must fit at spawn
DEFAULT_STEP_BUDGET = 2500
MAX_PLACEMENT_TRIES = 10_000


class MapFormatError(ValueError):
    """Raised for malformed ASCII map input."""


class PlacementError(RuntimeError):
    """Raised when episode generation cannot place start/goals."""


class GridMap:
    """Immutable occupancy grid; True cells are obstacles, border is closed."""

    def __init__(self, obstacle: np.ndarray, resolution: float):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        obstacle = np.ascontiguousarray(obstacle, dtype=np.uint8)
        if obstacle.ndim != 2 or obstacle.shape[0] < 3 or obstacle.shape[1] < 3:
            raise ValueError("map must be at least 3x3 cells")
        border_free = (not obstacle[0].all() or not obstacle[-1].all()
                       or not obstacle[:, 0].all() or not obstacle[:, -1].all())
        if border_free:
            obstacle = np.pad(obstacle, 1, constant_values=1)
        obstacle.setflags(write=False)
        self.obstacle = obstacle
        self.resolution = float(resolution)

    @property
    def height(self) -> int:
        return self.obstacle.shape[0]

    @property
    def width(self) -> int:
        return self.obstacle.shape[1]

    def is_free_cell(self, r: int, c: int) -> bool:
        return (0 <= r < self.height and 0 <= c < self.width
                and not self.obstacle[r, c])

    def is_free_point(self, x: float, y: float) -> bool:
        r = int(math.floor(y / self.resolution))
        c = int(math.floor(x / self.resolution))
        return self.is_free_cell(r, c)

    def free_cell_count(self) -> int:
        return int(self.obstacle.size - np.count_nonzero(self.obstacle))

    def clearance_m(self) -> np.ndarray:
        """Per-cell distance (m) to the nearest obstacle cell center."""
        return ndimage.distance_transform_edt(~self.obstacle.astype(bool)) * self.resolution

    def __eq__(self, other) -> bool:
        return (isinstance(other, GridMap)
                and self.resolution == other.resolution
                and np.array_equal(self.obstacle, other.obstacle))

    def __repr__(self) -> str:
        return f"GridMap({self.height}x{self.width} @ {self.resolution} m/cell)"


@dataclass(frozen=True)
class GoalObject:
    class_id: int
    x: float
    y: float
    radius: float = DEFAULT_GOAL_RADIUS
    height: float = DEFAULT_GOAL_HEIGHT

    def __post_init__(self):
        if not 0 <= self.class_id < N_OBJECT_CLASSES:
            raise ValueError(f"class_id {self.class_id} outside [0, {N_OBJECT_CLASSES})")
        if self.radius <= 0 or self.height <= 0:
            raise ValueError("goal radius and height must be positive")


@dataclass(frozen=True)
class Episode:
    map_id: str
    start_pose: tuple[float, float, float]
    goals: tuple[GoalObject, ...]
    step_budget: int = DEFAULT_STEP_BUDGET
    seed: int = 0

    def __post_init__(self):
        if self.step_budget <= 0:
            raise ValueError("step_budget must be positive")
        if not self.goals:
            raise ValueError("episode needs at least one goal")


def parse_map(text: str, resolution: float | None = None) -> GridMap:
    """Parse the ASCII map format: optional 'resolution=<float>' header, then
    one row per line of '#' (obstacle) / '.' (free)."""
    lines = [ln.rstrip("\n") for ln in text.splitlines()]
    if lines and lines[0].startswith("resolution="):
        header = lines.pop(0)
        try:
            file_res = float(header.split("=", 1)[1])
        except ValueError as e:
            raise MapFormatError(f"bad resolution header: {header!r}") from e
        if resolution is None:
            resolution = file_res
    lines = [ln for ln in lines if ln]
    if not lines:
        raise MapFormatError("empty map")
    if resolution is None:
        raise MapFormatError("no resolution given (header or argument)")
    widths = {len(ln) for ln in lines}
    if len(widths) != 1:
        raise MapFormatError(f"ragged rows: widths {sorted(widths)}")
    rows = []
    for i, ln in enumerate(lines):
        bad = set(ln) - {"#", "."}
        if bad:
            raise MapFormatError(f"illegal character {bad.pop()!r} in row {i}")
        rows.append([ch == "#" for ch in ln])
    return GridMap(np.array(rows, dtype=np.uint8), resolution)


def load_map(source, resolution: float | None = None) -> GridMap:
    """Load a map from a byte/text stream, bytes, str, or a file path."""
    if isinstance(source, bytes):
        text = source.decode("ascii")
    elif isinstance(source, str):
        text = source
    elif isinstance(source, io.IOBase) or hasattr(source, "read"):
        data = source.read()
        text = data.decode("ascii") if isinstance(data, bytes) else data
    else:
        with open(source, "r", encoding="ascii") as f:
            text = f.read()
    return parse_map(text, resolution)


def map_to_text(grid: GridMap) -> str:
    lines = [f"resolution={grid.resolution!r}"]
    for row in grid.obstacle:
        lines.append("".join("#" if v else "." for v in row))
    return "\n".join(lines) + "\n"


def save_map(grid: GridMap, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(map_to_text(grid))


def generate_maze(width: int, height: int, seed: int,
                  obstacle_density: float = 0.2,
                  resolution: float = DEFAULT_RESOLUTION,
                  corridor_cells: int = 16,
                  wall_cells: int = 2,
                  robot_radius: float = 0.18) -> GridMap:
    """Room-and-corridor maze whose free space stays navigable for the robot.

    Internal walls live on a coarse lattice (corridor_cells wide rooms,
    wall_cells thick walls) with doorways punched along a random spanning
    tree, so every room is reachable through corridors wide enough for the
    inflated robot disk. obstacle_density is approached from below by
    opening extra walls or adding clutter blocks; a block is only kept if
    the robot-inflated free space stays connected around it. Deterministic
    given the seed.
    """
    if not 0.0 <= obstacle_density <= 0.4:
        raise ValueError("obstacle_density must be in [0, 0.4]")
    if width < 5 or height < 5:
        raise ValueError("maze needs at least 5x5 cells")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=seed, spawn_key=(0x6d61,))))
    pitch = corridor_cells + wall_cells
    interior = (height - 2) * (width - 2)
    target = int(obstacle_density * interior)
    n_cr = max(1, (height - 2 + wall_cells) // pitch)
    n_cc = max(1, (width - 2 + wall_cells) // pitch)

    def cell_rows(i: int) -> tuple[int, int]:
        lo = 1 + i * pitch
        hi = lo + corridor_cells if i < n_cr - 1 else height - 1
        return lo, hi

    def cell_cols(j: int) -> tuple[int, int]:
        lo = 1 + j * pitch
        hi = lo + corridor_cells if j < n_cc - 1 else width - 1
        return lo, hi

    # spanning tree over the coarse room graph: tree edges become doorways
    edges = []
    for i in range(n_cr):
        for j in range(n_cc):
            if i + 1 < n_cr:
                edges.append(((i, j), (i + 1, j)))
            if j + 1 < n_cc:
                edges.append(((i, j), (i, j + 1)))
    tree: set = set()
    visited = {(0, 0)}
    stack = [(0, 0)]
    adjacency: dict = {}
    for a, b in edges:
        adjacency.setdefault(a, []).append(b)
        adjacency.setdefault(b, []).append(a)
    while stack:
        node = stack[-1]
        nxt = [n for n in adjacency.get(node, []) if n not in visited]
        if not nxt:
            stack.pop()
            continue
        chosen = nxt[int(rng.integers(len(nxt)))]
        tree.add((node, chosen))
        tree.add((chosen, node))
        visited.add(chosen)
        stack.append(chosen)

    obst = np.zeros((height, width), dtype=np.uint8)
    obst[0, :] = obst[-1, :] = 1
    obst[:, 0] = obst[:, -1] = 1

    walled = [e for e in edges if (e[0], e[1]) not in tree]
    rng.shuffle(walled)

    def draw_wall(a, b) -> None:
        (i0, j0), (i1, j1) = a, b
        if i1 == i0 + 1:  # horizontal band below room (i0, j0)
            r_lo = cell_rows(i0)[1] if i0 < n_cr - 1 else height - 1
            r_hi = min(r_lo + wall_cells, height - 1)
            c_lo, c_hi = cell_cols(j0)
            obst[r_lo:r_hi, max(1, c_lo - wall_cells):min(width - 1, c_hi + wall_cells)] = 1
        else:  # vertical band right of room (i0, j0)
            c_lo = cell_cols(j0)[1] if j0 < n_cc - 1 else width - 1
            c_hi = min(c_lo + wall_cells, width - 1)
            r_lo, r_hi = cell_rows(i0)
            obst[max(1, r_lo - wall_cells):min(height - 1, r_hi + wall_cells),
                 c_lo:c_hi] = 1

    for a, b in walled:
        before = obst.copy()
        draw_wall(a, b)
        if np.count_nonzero(obst[1:-1, 1:-1]) > target:
            obst[:] = before
            break

    # clutter blocks, kept only while the robot-inflated free space (clearance
    # at least `reach`) stays one connected component
    reach = robot_radius + resolution * math.sqrt(2.0) / 2.0
    tries = 0
    while np.count_nonzero(obst[1:-1, 1:-1]) < target and tries < 400:
        tries += 1
        k = int(rng.integers(2, 5))
        if height - 1 - k <= 1 or width - 1 - k <= 1:
            break
        r = int(rng.integers(1, height - 1 - k))
        c = int(rng.integers(1, width - 1 - k))
        if obst[r:r + k, c:c + k].any():
            continue
        before = obst.copy()
        obst[r:r + k, c:c + k] = 1
        dist = ndimage.distance_transform_edt(~obst.astype(bool)) * resolution
        _, n_comp = ndimage.label(dist >= reach)
        _, n_free = ndimage.label(~obst.astype(bool))
        if n_comp != 1 or n_free != 1:
            obst[:] = before

    # swallow any stray free pockets (none expected, defensive)
    free = ~obst.astype(bool)
    labels, n = ndimage.label(free)
    if n > 1:
        sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n + 1))
        keep = int(np.argmax(sizes)) + 1
        obst[(labels != keep) & free] = 1
    if (~obst.astype(bool)).sum() < 0.5 * interior:
        raise RuntimeError("maze generation produced an over-constrained map")
    return GridMap(obst, resolution)


def _largest_component_cells(grid: GridMap) -> np.ndarray:
    free = ~grid.obstacle.astype(bool)
    labels, n = ndimage.label(free)
    if n == 0:
        return np.empty((0, 2), dtype=np.int64)
    sizes = ndimage.sum_labels(np.ones_like(labels), labels, range(1, n + 1))
    keep = int(np.argmax(sizes)) + 1
    rr, cc = np.nonzero(labels == keep)
    return np.stack([rr, cc], axis=1)


def generate_episode(grid: GridMap, seed: int, n_goals: int = 3,
                     map_id: str = "map",
                     min_separation: float = DEFAULT_MIN_SEPARATION,
                     goal_clearance: float = DEFAULT_GOAL_CLEARANCE,
                     start_clearance: float = DEFAULT_START_CLEARANCE,
                     step_budget: int = DEFAULT_STEP_BUDGET,
                     goal_radius: float = DEFAULT_GOAL_RADIUS,
                     goal_height: float = DEFAULT_GOAL_HEIGHT,
                     max_tries: int = MAX_PLACEMENT_TRIES) -> Episode:
    """Sample start and goals from the largest free component.

    Positions are cell centers, rejection-sampled until start and goals are
    pairwise at least min_separation apart. Goal classes are drawn without
    replacement. Pure function of (grid, seed, parameters).
    """
    if n_goals < 1 or n_goals > N_OBJECT_CLASSES:
        raise ValueError(f"n_goals must be in [1, {N_OBJECT_CLASSES}]")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=seed, spawn_key=(0x6570,))))
    cells = _largest_component_cells(grid)
    if cells.shape[0] < n_goals + 1:
        raise PlacementError("map too small/fragmented")
    clearance = grid.clearance_m()
    res = grid.resolution
    cl = clearance[cells[:, 0], cells[:, 1]]
    start_cand = cells[cl >= start_clearance]
    goal_cand = cells[cl >= goal_clearance]
    if start_cand.shape[0] == 0 or goal_cand.shape[0] < n_goals:
        raise PlacementError("map too small/fragmented")

    goal_xy = (goal_cand[:, ::-1] + 0.5) * res  # (x, y) per candidate cell

    for _ in range(max_tries):
        cell = start_cand[rng.integers(start_cand.shape[0])]
        picks = [((cell[1] + 0.5) * res, (cell[0] + 0.5) * res)]
        # sample each goal from the candidates still compatible with every
        # earlier pick; rejecting per point instead of per tuple finds the
        # tight corner layouts that pairwise separation forces on small maps
        ok = True
        for _ in range(n_goals):
            feasible = np.ones(goal_xy.shape[0], dtype=bool)
            for px, py in picks:
                d = np.hypot(goal_xy[:, 0] - px, goal_xy[:, 1] - py)
                feasible &= d >= min_separation
            idx = np.nonzero(feasible)[0]
            if idx.size == 0:
                ok = False
                break
            j = idx[rng.integers(idx.size)]
            picks.append((float(goal_xy[j, 0]), float(goal_xy[j, 1])))
        if not ok:
            continue
        heading = float(rng.uniform(0.0, 2.0 * math.pi))
        classes = rng.permutation(N_OBJECT_CLASSES)[:n_goals]
        goals = tuple(GoalObject(int(classes[k]), picks[k + 1][0], picks[k + 1][1],
                                 goal_radius, goal_height)
                      for k in range(n_goals))
        return Episode(map_id=map_id,
                       start_pose=(picks[0][0], picks[0][1], heading),
                       goals=goals, step_budget=step_budget, seed=seed)
    raise PlacementError("map too small/fragmented")


def episode_to_text(ep: Episode) -> str:
    lines = [
        f"map_id={ep.map_id}",
        f"seed={ep.seed}",
        f"step_budget={ep.step_budget}",
        f"start={ep.start_pose[0]!r} {ep.start_pose[1]!r} {ep.start_pose[2]!r}",
    ]
    for g in ep.goals:
        lines.append(f"goal={g.class_id} {g.x!r} {g.y!r} {g.radius!r} {g.height!r}")
    return "\n".join(lines) + "\n"


def episode_from_text(text: str) -> Episode:
    fields: dict[str, str] = {}
    goals: list[GoalObject] = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        if "=" not in ln:
            raise ValueError(f"bad episode line: {ln!r}")
        key, val = ln.split("=", 1)
        if key == "goal":
            parts = val.split()
            if len(parts) != 5:
                raise ValueError(f"bad goal line: {ln!r}")
            goals.append(GoalObject(int(parts[0]), float(parts[1]), float(parts[2]),
                                    float(parts[3]), float(parts[4])))
        else:
            fields[key] = val
    sx, sy, sh = (float(v) for v in fields["start"].split())
    return Episode(map_id=fields["map_id"],
                   start_pose=(sx, sy, sh),
                   goals=tuple(goals),
                   step_budget=int(fields["step_budget"]),
                   seed=int(fields["seed"]))


def save_episode(ep: Episode, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(episode_to_text(ep))


def load_episode(path) -> Episode:
    with open(path, "r", encoding="ascii") as f:
        return episode_from_text(f.read())
