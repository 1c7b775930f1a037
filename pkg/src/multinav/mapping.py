"""Agent belief state: occupancy integration, fog-of-war, EgoMap, semantic cloud.

The belief grid is tri-state (Unknown / Free / Occupied) with a monotone
explored mask. Cells are addressed in global integer coordinates (row, col),
where cell (r, c) spans world y in [r*res, (r+1)*res) and x likewise; the
backing arrays grow on demand so the agent can never walk off the map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .simulator import LidarScan

UNKNOWN = 0
FREE = 1
OCCUPIED = 2

# PGM-style grayscale convention for snapshots and regression fixtures.
GRAY = {UNKNOWN: 128, FREE: 255, OCCUPIED: 0}

DEFAULT_EGOMAP_SIDE = 128
DEFAULT_MERGE_RADIUS = 0.5
DEFAULT_MAP_THRESHOLD = 0.007


@dataclass(frozen=True)
class PoseEstimate:
    x: float
    y: float
    heading: float
    step: int = 0


def integrate_odometry(est: PoseEstimate, odom_delta) -> PoseEstimate:
    """Dead-reckoning update: compose a body-frame delta onto the estimate."""
    dx, dy, dh = odom_delta
    nx, ny, nh = geometry.compose_pose(est.x, est.y, est.heading, dx, dy, dh)
    return PoseEstimate(nx, ny, nh, est.step + 1)


@dataclass(frozen=True)
class EgoMap:
    """Square, heading-aligned crop of the belief map.

    Row axis is aligned with the heading: the center cell is the agent, ego
    row decreases ahead of the agent, ego column grows to its right. The
    extraction pose is kept as metadata so samples can be mapped back to
    world coordinates.
    """
    cells: np.ndarray          # (side, side) int8 tri-state
    resolution: float
    pose: PoseEstimate

    @property
    def side(self) -> int:
        return int(self.cells.shape[0])

    def cell_to_world(self, r: int, c: int) -> tuple[float, float]:
        c0 = self.side // 2
        fwd = (c0 - r) * self.resolution
        lat = (c - c0) * self.resolution
        ch = math.cos(self.pose.heading)
        sh = math.sin(self.pose.heading)
        return (self.pose.x + fwd * ch + lat * sh,
                self.pose.y + fwd * sh - lat * ch)

    def world_to_cell(self, x: float, y: float) -> tuple[float, float]:
        """Inverse of cell_to_world; fractional ego coordinates."""
        c0 = self.side // 2
        dx = x - self.pose.x
        dy = y - self.pose.y
        ch = math.cos(self.pose.heading)
        sh = math.sin(self.pose.heading)
        fwd = dx * ch + dy * sh
        lat = dx * sh - dy * ch
        return c0 - fwd / self.resolution, c0 + lat / self.resolution


class OccupancyMap:
    """Tri-state belief grid with an explored mask; single-writer."""

    def __init__(self, resolution: float, height: int = 64, width: int = 64,
                 origin: tuple[int, int] = (0, 0)):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.off_r, self.off_c = origin
        self.state = np.zeros((height, width), dtype=np.int8)
        self.explored = np.zeros((height, width), dtype=np.uint8)
        self._occ_stamp = np.zeros((height, width), dtype=np.int32)
        self._change_stamp = np.zeros((height, width), dtype=np.int32)
        self._stamp = 0

    @property
    def height(self) -> int:
        return self.state.shape[0]

    @property
    def width(self) -> int:
        return self.state.shape[1]

    def _grow(self, r0: int, r1: int, c0: int, c1: int) -> None:
        """Ensure global cells [r0, r1] x [c0, c1] are backed, with margin."""
        margin = 32
        grow_top = max(0, self.off_r - r0 + (margin if r0 < self.off_r else 0))
        grow_left = max(0, self.off_c - c0 + (margin if c0 < self.off_c else 0))
        grow_bottom = max(0, r1 - (self.off_r + self.height - 1)
                          + (margin if r1 > self.off_r + self.height - 1 else 0))
        grow_right = max(0, c1 - (self.off_c + self.width - 1)
                         + (margin if c1 > self.off_c + self.width - 1 else 0))
        if not (grow_top or grow_left or grow_bottom or grow_right):
            return
        pad = ((grow_top, grow_bottom), (grow_left, grow_right))
        self.state = np.pad(self.state, pad)
        self.explored = np.pad(self.explored, pad)
        self._occ_stamp = np.pad(self._occ_stamp, pad)
        self._change_stamp = np.pad(self._change_stamp, pad)
        self.off_r -= grow_top
        self.off_c -= grow_left

    def state_at(self, r: int, c: int) -> int:
        ar, ac = r - self.off_r, c - self.off_c
        if 0 <= ar < self.height and 0 <= ac < self.width:
            return int(self.state[ar, ac])
        return UNKNOWN

    def explored_at(self, r: int, c: int) -> bool:
        ar, ac = r - self.off_r, c - self.off_c
        if 0 <= ar < self.height and 0 <= ac < self.width:
            return bool(self.explored[ar, ac])
        return False

    def set_state(self, r: int, c: int, value: int) -> None:
        """Direct write, used by tests and the oracle-seeded baselines."""
        self._grow(r, r, c, c)
        self.state[r - self.off_r, c - self.off_c] = value
        self.explored[r - self.off_r, c - self.off_c] = (value != UNKNOWN)

    def explored_cell_count(self) -> int:
        return int(np.count_nonzero(self.explored))

    def explored_area(self) -> float:
        """Explored area in square meters."""
        return self.explored_cell_count() * (self.resolution * self.resolution)

    def integrate_scan(self, est: PoseEstimate, scan: LidarScan) -> np.ndarray:
        """Fold a scan into the belief; returns changed cells as an (n, 2) array
        of global (row, col), exactly the set whose state flipped."""
        reach = scan.max_range + 2 * self.resolution
        r0 = int(math.floor((est.y - reach) / self.resolution))
        r1 = int(math.floor((est.y + reach) / self.resolution))
        c0 = int(math.floor((est.x - reach) / self.resolution))
        c1 = int(math.floor((est.x + reach) / self.resolution))
        self._grow(r0, r1, c0, c1)

        self._stamp += 1
        angles = np.empty(scan.n_beams)
        for i in range(scan.n_beams):
            angles[i] = geometry.wrap_angle(est.heading + scan.bearings[i])
        cap = scan.n_beams * (int(2.0 * scan.max_range / self.resolution) + 8)
        changed_r = np.empty(cap, dtype=np.int64)
        changed_c = np.empty(cap, dtype=np.int64)
        n = geometry.mark_scan(self.state, self.explored, self._occ_stamp,
                               self._change_stamp, self._stamp,
                               self.off_r, self.off_c, self.resolution,
                               est.x, est.y, angles,
                               np.ascontiguousarray(scan.ranges, dtype=np.float64),
                               scan.max_range, changed_r, changed_c)
        return np.stack([changed_r[:n], changed_c[:n]], axis=1)

    def extract_egomap(self, est: PoseEstimate, side: int = DEFAULT_EGOMAP_SIDE) -> EgoMap:
        """Heading-aligned nearest-neighbor crop; four sub-cell samples per ego
        cell are combined with priority Occupied > Unknown > Free, so a single
        occupied cell can never be rotated away."""
        res = self.resolution
        c0 = side // 2
        rows, cols = np.mgrid[0:side, 0:side]
        fwd = (c0 - rows) * res
        lat = (cols - c0) * res
        ch = math.cos(est.heading)
        sh = math.sin(est.heading)
        # priority encoding: FREE 0 < UNKNOWN 1 < OCCUPIED 2
        pri = np.full((side, side), -1, dtype=np.int8)
        sub = 0.25 * res
        for df, dl in ((-sub, -sub), (-sub, sub), (sub, -sub), (sub, sub)):
            wx = est.x + (fwd + df) * ch + (lat + dl) * sh
            wy = est.y + (fwd + df) * sh - (lat + dl) * ch
            gr = np.floor(wy / res).astype(np.int64) - self.off_r
            gc = np.floor(wx / res).astype(np.int64) - self.off_c
            inside = (gr >= 0) & (gr < self.height) & (gc >= 0) & (gc < self.width)
            s = np.full((side, side), UNKNOWN, dtype=np.int8)
            s[inside] = self.state[gr[inside], gc[inside]]
            p = np.where(s == OCCUPIED, 2, np.where(s == UNKNOWN, 1, 0)).astype(np.int8)
            np.maximum(pri, p, out=pri)
        cells = np.where(pri == 2, OCCUPIED,
                         np.where(pri == 1, UNKNOWN, FREE)).astype(np.int8)
        return EgoMap(cells=cells, resolution=res, pose=est)

    def to_grayscale(self) -> np.ndarray:
        out = np.full(self.state.shape, GRAY[UNKNOWN], dtype=np.uint8)
        out[self.state == FREE] = GRAY[FREE]
        out[self.state == OCCUPIED] = GRAY[OCCUPIED]
        return out


def write_pgm(path, gray: np.ndarray) -> None:
    h, w = gray.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(gray.astype(np.uint8).tobytes())


@dataclass
class SemanticEntry:
    class_id: int
    x: float
    y: float
    confidence: float   # best pixel fraction seen for this entry
    last_seen: int


class SemanticPointCloud:
    """Class-labelled object positions with detection-size confidence.

    Entries below map_threshold are never admitted; demotion that drops an
    entry under the threshold removes it, which is what makes repeated
    false-positive sweeps eventually give up on a phantom object.
    """

    def __init__(self, map_threshold: float = DEFAULT_MAP_THRESHOLD,
                 merge_radius: float = DEFAULT_MERGE_RADIUS):
        self.map_threshold = map_threshold
        self.merge_radius = merge_radius
        self.entries: list[SemanticEntry] = []

    def update(self, detections, est: PoseEstimate) -> None:
        for det in detections:
            if det.pixel_fraction < self.map_threshold:
                continue
            angle = est.heading + det.bearing
            x = est.x + det.range * math.cos(angle)
            y = est.y + det.range * math.sin(angle)
            merged = False
            for entry in self.entries:
                if entry.class_id != det.class_id:
                    continue
                if math.hypot(entry.x - x, entry.y - y) <= self.merge_radius:
                    if det.pixel_fraction > entry.confidence:
                        entry.x, entry.y = x, y
                        entry.confidence = det.pixel_fraction
                    entry.last_seen = est.step
                    merged = True
                    break
            if not merged:
                self.entries.append(SemanticEntry(det.class_id, x, y,
                                                  det.pixel_fraction, est.step))

    def best(self, class_id: int) -> SemanticEntry | None:
        """Highest-confidence entry for a class, or None if never mapped."""
        best = None
        for entry in self.entries:
            if entry.class_id != class_id:
                continue
            if best is None or entry.confidence > best.confidence:
                best = entry
        return best

    def demote(self, entry: SemanticEntry) -> None:
        entry.confidence *= 0.5
        if entry.confidence < self.map_threshold:
            self.entries.remove(entry)

    def seed(self, class_id: int, x: float, y: float,
             confidence: float = 1.0) -> None:
        self.entries.append(SemanticEntry(class_id, x, y, confidence, -1))


def update_semantic(cloud: SemanticPointCloud, detections, est: PoseEstimate
                    ) -> SemanticPointCloud:
    cloud.update(detections, est)
    return cloud
