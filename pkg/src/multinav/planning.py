"""Incremental shortest-path planning on the belief map.

The planner is D* Lite (Koenig & Likhachev) over an 8-connected grid with
straight cost 1 and diagonal cost sqrt(2), searching from the goal so that
edge-cost changes discovered while driving repair the existing solution
instead of replanning from scratch. Unknown cells are traversable at
straight cost (classical optimism); Occupied cells are inflated by the
robot radius plus half a cell diagonal so a path of cell centers is
executable by the collision disk.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .mapping import OCCUPIED, OccupancyMap

SQRT2 = math.sqrt(2.0)
DEFAULT_SUBGOAL_SPACING = 0.3
DEFAULT_SUBGOAL_LIMIT = 5
DEFAULT_ROBOT_RADIUS = 0.18

# (dr, dc, step cost)
NEIGHBORS = ((-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
             (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2))

# Neighbor steps as exact (straight, diagonal) count increments; every cost
# in the planner is an integer combination a + b*sqrt(2).
NEIGHBOR_STEPS = ((-1, 0, 1, 0), (1, 0, 1, 0), (0, -1, 1, 0), (0, 1, 1, 0),
                  (-1, -1, 0, 1), (-1, 1, 0, 1), (1, -1, 0, 1), (1, 1, 0, 1))

# infinity sentinel for the integer cost representation; octile increments
# keep values far below the next power of two
COST_INF = 1 << 40


def _inflation_offsets(robot_radius: float, resolution: float) -> list[tuple[int, int]]:
    # Impassable when the cell center is closer than robot_radius plus half a
    # cell diagonal to an occupied cell center: any point of the occupied
    # cell rectangle is then within robot_radius of the path point.
    reach = robot_radius + resolution * SQRT2 / 2.0
    n = int(math.ceil(reach / resolution))
    out = []
    for dr in range(-n, n + 1):
        for dc in range(-n, n + 1):
            if math.hypot(dr, dc) * resolution < reach:
                out.append((dr, dc))
    return out


class PlanGrid:
    """Traversability snapshot of a belief map with incremental inflation.

    Maintains, per cell, the count of occupied cells within the inflation
    radius; passability flips exactly when that count crosses zero, and the
    flip set is what gets forwarded to the planner.
    """

    def __init__(self, belief: OccupancyMap,
                 robot_radius: float = DEFAULT_ROBOT_RADIUS):
        self.resolution = belief.resolution
        self.off_r = belief.off_r
        self.off_c = belief.off_c
        self.height = belief.height
        self.width = belief.width
        self.robot_radius = robot_radius
        self.offsets = _inflation_offsets(robot_radius, self.resolution)
        self.revision = 0

        self._occ = (belief.state == OCCUPIED).copy()
        count = np.zeros((self.height, self.width), dtype=np.int32)
        occ_r, occ_c = np.nonzero(self._occ)
        for dr, dc in self.offsets:
            rr = occ_r + dr
            cc = occ_c + dc
            ok = (rr >= 0) & (rr < self.height) & (cc >= 0) & (cc < self.width)
            np.add.at(count, (rr[ok], cc[ok]), 1)
        self._count = count
        self.passable = count == 0
        self._passable_flat = self.passable.ravel().tolist()

    def to_local(self, cell: tuple[int, int]) -> tuple[int, int]:
        return cell[0] - self.off_r, cell[1] - self.off_c

    def to_index(self, cell: tuple[int, int]) -> int:
        r, c = self.to_local(cell)
        if not (0 <= r < self.height and 0 <= c < self.width):
            raise ValueError(f"cell {cell} outside plan grid")
        return r * self.width + c

    def to_cell(self, index: int) -> tuple[int, int]:
        return index // self.width + self.off_r, index % self.width + self.off_c

    def is_passable(self, cell: tuple[int, int]) -> bool:
        r, c = self.to_local(cell)
        if not (0 <= r < self.height and 0 <= c < self.width):
            return False
        return bool(self.passable[r, c])

    def apply_changes(self, belief: OccupancyMap, changed_cells) -> list[tuple[int, int]]:
        """Sync occupancy flips from the belief; returns global cells whose
        passability flipped (the planner's notify set)."""
        flipped: list[tuple[int, int]] = []
        h, w = self.height, self.width
        for r, c in changed_cells:
            lr, lc = r - self.off_r, c - self.off_c
            if not (0 <= lr < h and 0 <= lc < w):
                continue
            now = belief.state_at(r, c) == OCCUPIED
            was = bool(self._occ[lr, lc])
            if now == was:
                continue
            self._occ[lr, lc] = now
            delta = 1 if now else -1
            for dr, dc in self.offsets:
                rr, cc = lr + dr, lc + dc
                if 0 <= rr < h and 0 <= cc < w:
                    old = self._count[rr, cc]
                    new = old + delta
                    self._count[rr, cc] = new
                    if (old == 0) != (new == 0):
                        p = new == 0
                        self.passable[rr, cc] = p
                        self._passable_flat[rr * w + cc] = p
                        flipped.append((rr + self.off_r, cc + self.off_c))
        if flipped:
            self.revision += 1
        return flipped


def octile(r0: int, c0: int, r1: int, c1: int) -> float:
    dr = abs(r0 - r1)
    dc = abs(c0 - c1)
    if dr > dc:
        return (dr - dc) + SQRT2 * dc
    return (dc - dr) + SQRT2 * dr


def path_cost(path: list[tuple[int, int]]) -> float:
    """Canonical cost of an 8-connected path: straight steps + sqrt(2) * diagonals.

    Computed from step counts so two optimal paths always yield the
    bit-identical float.
    """
    straight = diag = 0
    for (r0, c0), (r1, c1) in zip(path, path[1:]):
        if r0 != r1 and c0 != c1:
            diag += 1
        else:
            straight += 1
    return straight + SQRT2 * diag


class Unreachable(Exception):
    """No path exists through passable-or-unknown cells."""


class DStarLite:
    """Incremental planner bound to one (grid, goal); start may move freely.

    Costs, heuristic and the key modifier are tracked as exact integer pairs
    (straight steps, diagonal steps): every key is derived canonically as
    a + b*sqrt(2), so mathematically equal keys are bit-identical floats and
    distinct ones differ by far more than float error. That exactness is
    what makes the classic strict-< termination and greedy path extraction
    sound; with naive float accumulation, equal keys land ulps apart and
    raise/lower processing can both stop early and livelock.
    """

    def __init__(self, grid: PlanGrid, start: tuple[int, int], goal: tuple[int, int]):
        self.grid = grid
        self.w = grid.width
        self.h = grid.height
        n = self.w * self.h
        # integer pairs (a, b) meaning a + b*sqrt(2); COST_INF marks infinity
        self.ga = [COST_INF] * n
        self.gb = [0] * n
        self.ra = [COST_INF] * n
        self.rb = [0] * n
        self.km_a = 0
        self.km_b = 0
        self.queue: list[tuple[float, float, int]] = []
        self.start = grid.to_index(start)
        self.goal = grid.to_index(goal)
        self.ra[self.goal] = 0
        heapq.heappush(self.queue, (*self._key(self.goal), self.goal))

    def g_value(self, u: int) -> float:
        if self.ga[u] >= COST_INF:
            return math.inf
        return self.ga[u] + self.gb[u] * SQRT2

    def _octile_ints(self, u: int, v: int) -> tuple[int, int]:
        ur, uc = divmod(u, self.w)
        vr, vc = divmod(v, self.w)
        dr = abs(ur - vr)
        dc = abs(uc - vc)
        if dr > dc:
            return dr - dc, dc
        return dc - dr, dr

    def _key(self, u: int) -> tuple[float, float]:
        gf = self.ga[u] + self.gb[u] * SQRT2
        rf = self.ra[u] + self.rb[u] * SQRT2
        if rf < gf:
            ma, mb = self.ra[u], self.rb[u]
        else:
            ma, mb = self.ga[u], self.gb[u]
        if ma >= COST_INF:
            return (math.inf, math.inf)
        ha, hb = self._octile_ints(u, self.start)
        return ((ma + ha + self.km_a) + (mb + hb + self.km_b) * SQRT2,
                ma + mb * SQRT2)

    def _update_vertex(self, u: int) -> None:
        if u != self.goal:
            passable = self.grid._passable_flat
            if not passable[u]:
                self.ra[u], self.rb[u] = COST_INF, 0
            else:
                w = self.w
                h = self.h
                r, c = divmod(u, w)
                ga = self.ga
                gb = self.gb
                best_a, best_b = COST_INF, 0
                best_f = math.inf
                for dr, dc, sa, sb in NEIGHBOR_STEPS:
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < h and 0 <= cc < w:
                        v = rr * w + cc
                        if passable[v] and ga[v] < COST_INF:
                            na = ga[v] + sa
                            nb = gb[v] + sb
                            nf = na + nb * SQRT2
                            if nf < best_f:
                                best_a, best_b, best_f = na, nb, nf
                self.ra[u], self.rb[u] = best_a, best_b
        if self.ga[u] != self.ra[u] or self.gb[u] != self.rb[u]:
            heapq.heappush(self.queue, (*self._key(u), u))

    def _compute(self) -> None:
        queue = self.queue
        ga = self.ga
        gb = self.gb
        ra = self.ra
        rb = self.rb
        while queue:
            k1, k2, u = queue[0]
            sk = self._key(self.start)
            start_consistent = (ga[self.start] == ra[self.start]
                                and gb[self.start] == rb[self.start])
            if not ((k1, k2) < sk or not start_consistent):
                break
            heapq.heappop(queue)
            if ga[u] == ra[u] and gb[u] == rb[u]:
                continue  # stale entry for a now-consistent vertex
            nk = self._key(u)
            if (k1, k2) < nk:
                heapq.heappush(queue, (*nk, u))
                continue
            gf = ga[u] + gb[u] * SQRT2
            rf = ra[u] + rb[u] * SQRT2
            w = self.w
            r, c = divmod(u, w)
            if gf > rf:
                ga[u], gb[u] = ra[u], rb[u]
                for dr, dc, _, _ in NEIGHBOR_STEPS:
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < self.h and 0 <= cc < w:
                        self._update_vertex(rr * w + cc)
            else:
                ga[u], gb[u] = COST_INF, 0
                self._update_vertex(u)
                for dr, dc, _, _ in NEIGHBOR_STEPS:
                    rr = r + dr
                    cc = c + dc
                    if 0 <= rr < self.h and 0 <= cc < w:
                        self._update_vertex(rr * w + cc)

    def notify_changes(self, flipped_cells) -> None:
        """Register cells whose passability flipped; repairs run lazily at the
        next plan() call."""
        w = self.w
        for cell in flipped_cells:
            u = self.grid.to_index(tuple(cell))
            self._update_vertex(u)
            r, c = divmod(u, w)
            for dr, dc, _, _ in NEIGHBOR_STEPS:
                rr = r + dr
                cc = c + dc
                if 0 <= rr < self.h and 0 <= cc < w:
                    self._update_vertex(rr * w + cc)

    def plan(self, start: tuple[int, int] | None = None) -> list[tuple[int, int]]:
        """Shortest path start -> goal on the current grid.

        Raises Unreachable when the goal is not connected. Ties are broken
        on (edge cost + g, g, cell index), so identical inputs always yield
        the identical path.
        """
        if start is not None:
            s = self.grid.to_index(start)
            if s != self.start:
                da, db = self._octile_ints(self.start, s)
                self.km_a += da
                self.km_b += db
                self.start = s
        self._compute()
        if self.ga[self.start] >= COST_INF:
            raise Unreachable()
        w = self.w
        passable = self.grid._passable_flat
        ga = self.ga
        gb = self.gb
        path = [self.grid.to_cell(self.start)]
        cur = self.start
        guard = self.w * self.h + 1
        while cur != self.goal:
            r, c = divmod(cur, w)
            best = None
            best_key = None
            for dr, dc, sa, sb in NEIGHBOR_STEPS:
                rr = r + dr
                cc = c + dc
                if 0 <= rr < self.h and 0 <= cc < w:
                    v = rr * w + cc
                    if passable[v] and ga[v] < COST_INF:
                        val = (ga[v] + sa) + (gb[v] + sb) * SQRT2
                        key = (val, ga[v] + gb[v] * SQRT2, v)
                        if best_key is None or key < best_key:
                            best_key = key
                            best = v
            if best is None:
                raise Unreachable()
            cur = best
            path.append(self.grid.to_cell(cur))
            guard -= 1
            if guard <= 0:
                raise RuntimeError("path extraction did not terminate")
        return path


def plan_once(grid: PlanGrid, start: tuple[int, int], goal: tuple[int, int]
              ) -> list[tuple[int, int]]:
    """One-shot shortest path; convenience wrapper over DStarLite."""
    return DStarLite(grid, start, goal).plan()


# -- exact oracles -------------------------------------------------------------

def grid_graph(passable: np.ndarray) -> csr_matrix:
    """8-connected CSR graph over a passability mask, straight 1 / diagonal sqrt2."""
    h, w = passable.shape
    idx = np.arange(h * w).reshape(h, w)
    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for dr, dc, cost in NEIGHBORS:
        src_r = slice(max(0, -dr), h - max(0, dr))
        src_c = slice(max(0, -dc), w - max(0, dc))
        dst_r = slice(max(0, dr), h + min(0, dr))
        dst_c = slice(max(0, dc), w + min(0, dc))
        ok = passable[src_r, src_c] & passable[dst_r, dst_c]
        rows.append(idx[src_r, src_c][ok])
        cols.append(idx[dst_r, dst_c][ok])
        data.append(np.full(int(ok.sum()), cost))
    return csr_matrix((np.concatenate(data),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(h * w, h * w))


def dijkstra_field(passable: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """Exact distances (cell units) from start to every cell; inf where cut off."""
    h, w = passable.shape
    graph = grid_graph(passable)
    dist = _csgraph_dijkstra(graph, directed=True, indices=start[0] * w + start[1])
    return dist.reshape(h, w)


def dijkstra_oracle(grid: PlanGrid, start: tuple[int, int], goal: tuple[int, int]) -> float:
    """Exact shortest-path cost on the current grid, or raises Unreachable.

    Backed by scipy's csgraph Dijkstra; used by tests as the independent
    check against the incremental planner, and by metrics for optimal
    prefix lengths.
    """
    field = dijkstra_field(grid.passable, grid.to_local(start))
    lr, lc = grid.to_local(goal)
    cost = float(field[lr, lc])
    if math.isinf(cost):
        raise Unreachable()
    return cost


def dijkstra_seeded(passable: np.ndarray, seeds: list[tuple[tuple[int, int], float]]
                    ) -> np.ndarray:
    """Textbook Dijkstra with per-source initial costs (cell units).

    Supports the ordered-goal tours in metrics, where each stage starts from
    the previous goal's trigger region with the accumulated cost.
    """
    h, w = passable.shape
    dist = np.full(h * w, math.inf)
    heap: list[tuple[float, int]] = []
    for (r, c), cost0 in seeds:
        u = r * w + c
        if passable[r, c] and cost0 < dist[u]:
            dist[u] = cost0
            heapq.heappush(heap, (cost0, u))
    flat = passable.ravel()
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        r, c = divmod(u, w)
        for dr, dc, cost in NEIGHBORS:
            rr = r + dr
            cc = c + dc
            if 0 <= rr < h and 0 <= cc < w:
                v = rr * w + cc
                if flat[v]:
                    nd = d + cost
                    if nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
    return dist.reshape(h, w)


# -- subgoal chaining ----------------------------------------------------------

@dataclass(frozen=True)
class SubgoalChain:
    waypoints: tuple[tuple[float, float], ...]  # world meters
    terminal: bool  # True iff the chain reaches the planned waypoint


def chain_subgoals(path: list[tuple[int, int]], resolution: float,
                   spacing: float = DEFAULT_SUBGOAL_SPACING,
                   limit: int = DEFAULT_SUBGOAL_LIMIT) -> SubgoalChain:
    """Waypoints at arc-length multiples of `spacing` along the cell-center
    polyline, truncated at `limit`."""
    if not path:
        raise ValueError("empty path")
    pts = [((c + 0.5) * resolution, (r + 0.5) * resolution) for r, c in path]
    seg = [0.0]
    for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
        seg.append(seg[-1] + math.hypot(x1 - x0, y1 - y0))
    total = seg[-1]
    eps = 1e-9
    waypoints: list[tuple[float, float]] = []
    k = 1
    while len(waypoints) < limit:
        s = k * spacing
        if s > total + eps:
            break
        s = min(s, total)
        j = 1
        while j < len(seg) and seg[j] < s - eps:
            j += 1
        if j >= len(seg):
            j = len(seg) - 1
        s0, s1 = seg[j - 1], seg[j]
        t = 0.0 if s1 == s0 else (s - s0) / (s1 - s0)
        x = pts[j - 1][0] + t * (pts[j][0] - pts[j - 1][0])
        y = pts[j - 1][1] + t * (pts[j][1] - pts[j - 1][1])
        waypoints.append((x, y))
        k += 1
    covered = len(waypoints) * spacing
    terminal = (total - covered) <= spacing + eps
    return SubgoalChain(waypoints=tuple(waypoints), terminal=terminal)
