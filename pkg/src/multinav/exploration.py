"""Waypoint-proposal policies: EgoMap in, masked spatial heatmap out.

Three scripted scorers stand in for the trained recurrent policy behind the
same interface: a deterministic update produces a raw heatmap and a new
hidden state, the heatmap is masked to unexplored cells, and the waypoint is
sampled from the result. The hidden state is a fixed-size vector of visit
anchors: regions the agent has already been dispatched to are down-weighted
by 0.5 per prior visit, which is the recurrence made observable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .mapping import FREE, UNKNOWN, EgoMap
from .planning import dijkstra_seeded

DEFAULT_TAU = 1.0            # m, nearest-frontier score decay
DEFAULT_DISK_RADIUS = 1.0    # m, info-gain neighborhood
DEFAULT_DECAY_RADIUS = 1.0   # m, visit anchor influence
DEFAULT_REWARD_SCALE = 0.01  # the coverage reward's scaling hyper-parameter
VISIT_DECAY = 0.5
ANCHOR_SLOTS = 32
ANCHOR_MERGE_RADIUS = 0.5    # m


@dataclass(frozen=True)
class PolicyState:
    """Fixed-size recurrent state: [x, y, count] * ANCHOR_SLOTS + write cursor."""
    hidden: np.ndarray
    step: int = 0


def _empty_hidden() -> np.ndarray:
    return np.zeros(3 * ANCHOR_SLOTS + 1)


def _active_anchors(hidden: np.ndarray):
    for i in range(ANCHOR_SLOTS):
        count = hidden[3 * i + 2]
        if count > 0:
            yield hidden[3 * i], hidden[3 * i + 1], count


def _record_visit(hidden: np.ndarray, x: float, y: float) -> np.ndarray:
    out = hidden.copy()
    for i in range(ANCHOR_SLOTS):
        if out[3 * i + 2] > 0 and math.hypot(out[3 * i] - x, out[3 * i + 1] - y) \
                <= ANCHOR_MERGE_RADIUS:
            out[3 * i + 2] += 1.0
            return out
    cursor = int(out[-1])
    out[3 * cursor] = x
    out[3 * cursor + 1] = y
    out[3 * cursor + 2] = 1.0
    out[-1] = (cursor + 1) % ANCHOR_SLOTS
    return out


def _decay_weights(egomap: EgoMap, hidden: np.ndarray,
                   radius: float) -> np.ndarray | None:
    """Per-cell multiplier 0.5^(visits within radius); None when no anchors."""
    weights = None
    side = egomap.side
    for ax, ay, count in _active_anchors(hidden):
        er, ec = egomap.world_to_cell(ax, ay)
        rows = np.arange(side)[:, None] + 0.5
        cols = np.arange(side)[None, :] + 0.5
        d2 = (rows - er) ** 2 + (cols - ec) ** 2
        mask = d2 * (egomap.resolution ** 2) <= radius * radius
        if weights is None:
            weights = np.ones((side, side))
        weights[mask] *= VISIT_DECAY ** count
    return weights


def _frontier_mask(cells: np.ndarray) -> np.ndarray:
    """Unknown cells 8-adjacent to a known-free cell."""
    free = cells == FREE
    near_free = ndimage.binary_dilation(free, structure=np.ones((3, 3), bool))
    return (cells == UNKNOWN) & near_free


def _free_distances(cells: np.ndarray) -> np.ndarray:
    """Path distance (cell units) from the ego center through free cells."""
    side = cells.shape[0]
    center = (side // 2, side // 2)
    passable = cells == FREE
    passable = passable.copy()
    passable[center] = True  # the agent stands there regardless of belief state
    return dijkstra_seeded(passable, [(center, 0.0)])


class ExplorationPolicy:
    """Deterministic heatmap scorer; randomness lives only in sampling."""

    name = "base"

    def initial_state(self) -> PolicyState:
        return PolicyState(hidden=_empty_hidden(), step=0)

    def update(self, egomap: EgoMap, state: PolicyState
               ) -> tuple[np.ndarray, PolicyState]:
        raise NotImplementedError


class NearestFrontierPolicy(ExplorationPolicy):
    """score(c) = exp(-d_path(agent, c) / tau) on frontier cells."""

    name = "nearest_frontier"

    def __init__(self, tau: float = DEFAULT_TAU,
                 decay_radius: float = DEFAULT_DECAY_RADIUS):
        self.tau = tau
        self.decay_radius = decay_radius

    def update(self, egomap, state):
        cells = egomap.cells
        side = egomap.side
        frontier = _frontier_mask(cells)
        scores = np.zeros((side, side))
        if frontier.any():
            dist = _free_distances(cells)
            free = cells == FREE
            # a frontier cell is entered from its cheapest known-free neighbor
            best = np.full((side, side), math.inf)
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    step = math.sqrt(2.0) if dr and dc else 1.0
                    shifted = np.full((side, side), math.inf)
                    src_r = slice(max(0, -dr), side - max(0, dr))
                    src_c = slice(max(0, -dc), side - max(0, dc))
                    dst_r = slice(max(0, dr), side + min(0, dr))
                    dst_c = slice(max(0, dc), side + min(0, dc))
                    vals = np.where(free[src_r, src_c],
                                    dist[src_r, src_c] + step, math.inf)
                    shifted[dst_r, dst_c] = vals
                    np.minimum(best, shifted, out=best)
            d_m = best * egomap.resolution
            reachable = frontier & np.isfinite(d_m)
            scores[reachable] = np.exp(-d_m[reachable] / self.tau)
            weights = _decay_weights(egomap, state.hidden, self.decay_radius)
            if weights is not None:
                scores *= weights
        new_hidden = _record_visit(state.hidden, egomap.pose.x, egomap.pose.y)
        return scores, PolicyState(hidden=new_hidden, step=state.step + 1)


class InfoGainPolicy(ExplorationPolicy):
    """score(c) = number of unknown cells within a disk of the candidate."""

    name = "info_gain"

    def __init__(self, disk_radius: float = DEFAULT_DISK_RADIUS,
                 decay_radius: float = DEFAULT_DECAY_RADIUS):
        self.disk_radius = disk_radius
        self.decay_radius = decay_radius
        self._kernel_cache: dict[float, np.ndarray] = {}

    def _kernel(self, resolution: float) -> np.ndarray:
        kernel = self._kernel_cache.get(resolution)
        if kernel is None:
            n = int(math.floor(self.disk_radius / resolution))
            rr, cc = np.mgrid[-n:n + 1, -n:n + 1]
            kernel = ((rr * rr + cc * cc) * resolution * resolution
                      <= self.disk_radius * self.disk_radius).astype(np.float64)
            self._kernel_cache[resolution] = kernel
        return kernel

    def update(self, egomap, state):
        cells = egomap.cells
        side = egomap.side
        unknown = cells == UNKNOWN
        frontier = _frontier_mask(cells)
        scores = np.zeros((side, side))
        if frontier.any():
            dist = _free_distances(cells)
            free_reached = np.isfinite(dist) & (cells == FREE)
            near_reached = ndimage.binary_dilation(free_reached,
                                                   structure=np.ones((3, 3), bool))
            reachable = frontier & near_reached
            counts = ndimage.convolve(unknown.astype(np.float64),
                                      self._kernel(egomap.resolution),
                                      mode="constant", cval=0.0)
            scores[reachable] = counts[reachable]
            weights = _decay_weights(egomap, state.hidden, self.decay_radius)
            if weights is not None:
                scores *= weights
        new_hidden = _record_visit(state.hidden, egomap.pose.x, egomap.pose.y)
        return scores, PolicyState(hidden=new_hidden, step=state.step + 1)


class UniformUnexploredPolicy(ExplorationPolicy):
    """Constant score; masking alone shapes the sampling distribution."""

    name = "uniform"

    def update(self, egomap, state):
        side = egomap.side
        return np.ones((side, side)), PolicyState(hidden=state.hidden,
                                                  step=state.step + 1)


POLICIES = {
    "nearest_frontier": NearestFrontierPolicy,
    "info_gain": InfoGainPolicy,
    "uniform": UniformUnexploredPolicy,
}


def mask_unexplored(raw: np.ndarray, egomap: EgoMap) -> np.ndarray:
    """Zero the heatmap wherever the EgoMap cell is not Unknown."""
    if raw.shape != egomap.cells.shape:
        raise ValueError("heatmap and egomap shapes differ")
    return np.where(egomap.cells == UNKNOWN, raw, 0.0)


def sample_waypoint(masked: np.ndarray, rng: np.random.Generator
                    ) -> tuple[int, int] | None:
    """Draw a cell with probability proportional to its score; None when the
    masked heatmap carries no mass (the no-frontier condition)."""
    flat = masked.ravel()
    cum = np.cumsum(flat)
    total = cum[-1]
    if not total > 0.0:
        return None
    u = rng.random() * total
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, flat.size - 1)
    return idx // masked.shape[1], idx % masked.shape[1]


def argmax_waypoint(masked: np.ndarray) -> tuple[int, int] | None:
    """Greedy companion to sample_waypoint: highest score, lowest cell index."""
    flat = masked.ravel()
    idx = int(np.argmax(flat))
    if not flat[idx] > 0.0:
        return None
    return idx // masked.shape[1], idx % masked.shape[1]


def compute_reward(e_t: float, e_prev: float,
                   alpha: float = DEFAULT_REWARD_SCALE) -> float:
    """Coverage gain reward alpha * (e_t - e_prev), areas in square meters."""
    if e_t < e_prev:
        raise ValueError("explored area decreased; mapping bug")
    return alpha * (e_t - e_prev)


def coverage(belief, world) -> float:
    """Explored navigable cells over total navigable cells, in [0, 1]."""
    free = ~world.obstacle.astype(bool)
    total = int(free.sum())
    if total == 0:
        return 0.0
    h, w = free.shape
    explored = np.zeros((h, w), dtype=bool)
    r0 = max(0, belief.off_r)
    c0 = max(0, belief.off_c)
    r1 = min(h, belief.off_r + belief.height)
    c1 = min(w, belief.off_c + belief.width)
    if r1 > r0 and c1 > c0:
        explored[r0:r1, c0:c1] = belief.explored[r0 - belief.off_r:r1 - belief.off_r,
                                                 c0 - belief.off_c:c1 - belief.off_c] > 0
    return float((explored & free).sum()) / total


def heatmap_to_grayscale(scores: np.ndarray) -> np.ndarray:
    """Snapshot export: 0..255 proportional to score, zero stays black."""
    peak = float(scores.max())
    if peak <= 0.0:
        return np.zeros(scores.shape, dtype=np.uint8)
    return np.round(255.0 * scores / peak).astype(np.uint8)
