"""Low-level grid geometry shared by the simulator and the belief map.

The ray kernels here are the single source of truth for cell traversal:
the simulator's raycast and the belief map's scan integration must walk
bit-identical cell sequences, otherwise a zero-noise run can mark a cell
Free that the ground truth holds Obstacle.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a hard dependency, guard for doc builds
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to [0, 2*pi)."""
    a = math.fmod(a, TWO_PI)
    if a < 0.0:
        a += TWO_PI
    return a


def compose_pose(x: float, y: float, heading: float,
                 dx: float, dy: float, dh: float) -> tuple[float, float, float]:
    """Apply a body-frame displacement (dx forward, dy left, dh turn) to a pose.

    Both the simulator and dead-reckoning use this exact function so that a
    zero-noise odometry estimate tracks the true pose bit for bit.
    """
    c = math.cos(heading)
    s = math.sin(heading)
    nx = x + dx * c - dy * s
    ny = y + dx * s + dy * c
    return nx, ny, wrap_angle(heading + dh)


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation taking b to a, in (-pi, pi]."""
    d = math.fmod(a - b, TWO_PI)
    if d > math.pi:
        d -= TWO_PI
    elif d <= -math.pi:
        d += TWO_PI
    return d


def cell_of(x: float, y: float, resolution: float) -> tuple[int, int]:
    """Cell (row, col) containing world point (x, y)."""
    return int(math.floor(y / resolution)), int(math.floor(x / resolution))


def cell_center(r: int, c: int, resolution: float) -> tuple[float, float]:
    return (c + 0.5) * resolution, (r + 0.5) * resolution


@njit(cache=True)
def ray_range(obstacle, resolution, x, y, angle, max_range):
    """Distance along a ray to the first obstacle cell boundary, else inf.

    Amanatides-Woo traversal. The cell containing the start point is never
    tested; ties at cell corners step the row first, then the column, so the
    ray conservatively enters both cells adjacent to the corner.
    """
    h, w = obstacle.shape
    r = int(math.floor(y / resolution))
    c = int(math.floor(x / resolution))
    dx = math.cos(angle)
    dy = math.sin(angle)

    if dx > 0.0:
        step_c = 1
        t_max_x = ((c + 1) * resolution - x) / dx
        t_delta_x = resolution / dx
    elif dx < 0.0:
        step_c = -1
        t_max_x = (c * resolution - x) / dx
        t_delta_x = -resolution / dx
    else:
        step_c = 0
        t_max_x = math.inf
        t_delta_x = math.inf

    if dy > 0.0:
        step_r = 1
        t_max_y = ((r + 1) * resolution - y) / dy
        t_delta_y = resolution / dy
    elif dy < 0.0:
        step_r = -1
        t_max_y = (r * resolution - y) / dy
        t_delta_y = -resolution / dy
    else:
        step_r = 0
        t_max_y = math.inf
        t_delta_y = math.inf

    while True:
        if t_max_x < t_max_y:
            t = t_max_x
            c += step_c
            t_max_x += t_delta_x
        else:
            t = t_max_y
            r += step_r
            t_max_y += t_delta_y
        if t > max_range:
            return math.inf
        if r < 0 or r >= h or c < 0 or c >= w:
            return t
        if obstacle[r, c]:
            return t


@njit(cache=True)
def raycast_ranges(obstacle, resolution, x, y, angles, max_range, out):
    for i in range(angles.shape[0]):
        out[i] = ray_range(obstacle, resolution, x, y, angles[i], max_range)


@njit(cache=True)
def mark_scan(state, explored, occ_stamp, change_stamp, stamp,
              off_r, off_c, resolution, x, y, angles, ranges, max_range,
              changed_r, changed_c):
    """Write one lidar scan into a tri-state belief grid.

    Cells strictly between the sensor cell and the hit are marked Free, the
    hit cell Occupied; beams that saw nothing mark Free up to max_range. An
    Occupied mark from this scan beats a Free mark from this scan; across
    scans the latest observation wins. Returns the number of cells whose
    state changed, their coordinates written into changed_r/changed_c
    (global cell coordinates, deduplicated via change_stamp).
    """
    h, w = state.shape
    n_changed = 0
    n_beams = angles.shape[0]
    # Conservative per-beam cell budget: one row + one column crossing per
    # resolution step, plus slack for the corner double-steps.
    cap = int(2.0 * max_range / resolution) + 8
    free_r = np.empty(n_beams * cap, np.int64)
    free_c = np.empty(n_beams * cap, np.int64)
    n_free = 0

    for i in range(n_beams):
        angle = angles[i]
        rng = ranges[i]
        limit = max_range if rng == math.inf else rng
        r = int(math.floor(y / resolution))
        c = int(math.floor(x / resolution))
        dx = math.cos(angle)
        dy = math.sin(angle)

        if dx > 0.0:
            step_c = 1
            t_max_x = ((c + 1) * resolution - x) / dx
            t_delta_x = resolution / dx
        elif dx < 0.0:
            step_c = -1
            t_max_x = (c * resolution - x) / dx
            t_delta_x = -resolution / dx
        else:
            step_c = 0
            t_max_x = math.inf
            t_delta_x = math.inf

        if dy > 0.0:
            step_r = 1
            t_max_y = ((r + 1) * resolution - y) / dy
            t_delta_y = resolution / dy
        elif dy < 0.0:
            step_r = -1
            t_max_y = (r * resolution - y) / dy
            t_delta_y = -resolution / dy
        else:
            step_r = 0
            t_max_y = math.inf
            t_delta_y = math.inf

        while True:
            if t_max_x < t_max_y:
                t = t_max_x
                c += step_c
                t_max_x += t_delta_x
            else:
                t = t_max_y
                r += step_r
                t_max_y += t_delta_y
            if t > limit:
                break
            ar = r - off_r
            ac = c - off_c
            if ar < 0 or ar >= h or ac < 0 or ac >= w:
                break
            if rng != math.inf and t >= rng:
                # Entering the hit cell: r/ranges came from the same
                # traversal, so the comparison is exact bit-wise.
                occ_stamp[ar, ac] = stamp
                if state[ar, ac] != 2 or explored[ar, ac] == 0:
                    if change_stamp[ar, ac] != stamp:
                        change_stamp[ar, ac] = stamp
                        changed_r[n_changed] = r
                        changed_c[n_changed] = c
                        n_changed += 1
                state[ar, ac] = 2
                explored[ar, ac] = 1
                break
            free_r[n_free] = r
            free_c[n_free] = c
            n_free += 1

    for k in range(n_free):
        ar = free_r[k] - off_r
        ac = free_c[k] - off_c
        if occ_stamp[ar, ac] == stamp:
            continue
        if state[ar, ac] != 1 or explored[ar, ac] == 0:
            if change_stamp[ar, ac] != stamp:
                change_stamp[ar, ac] = stamp
                changed_r[n_changed] = free_r[k]
                changed_c[n_changed] = free_c[k]
                n_changed += 1
        state[ar, ac] = 1
        explored[ar, ac] = 1

    return n_changed


@njit(cache=True)
def _point_rect_dist(px, py, x0, y0, x1, y1):
    dx = 0.0
    if px < x0:
        dx = x0 - px
    elif px > x1:
        dx = px - x1
    dy = 0.0
    if py < y0:
        dy = y0 - py
    elif py > y1:
        dy = py - y1
    return math.hypot(dx, dy)


@njit(cache=True)
def _segment_rect_dist(ax, ay, bx, by, x0, y0, x1, y1):
    # dist(p, rect) is convex, so its restriction to the segment is convex
    # in t; golden-section search localizes the minimum well below the
    # precision anything downstream compares against.
    lo = 0.0
    hi = 1.0
    inv_phi = 0.6180339887498949
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc = _point_rect_dist(ax + c * (bx - ax), ay + c * (by - ay), x0, y0, x1, y1)
    fd = _point_rect_dist(ax + d * (bx - ax), ay + d * (by - ay), x0, y0, x1, y1)
    for _ in range(60):
        if fc < fd:
            hi = d
            d = c
            fd = fc
            c = hi - inv_phi * (hi - lo)
            fc = _point_rect_dist(ax + c * (bx - ax), ay + c * (by - ay), x0, y0, x1, y1)
        else:
            lo = c
            c = d
            fc = fd
            d = lo + inv_phi * (hi - lo)
            fd = _point_rect_dist(ax + d * (bx - ax), ay + d * (by - ay), x0, y0, x1, y1)
    if fc < fd:
        return fc
    return fd


@njit(cache=True)
def swept_disk_hits(obstacle, resolution, ax, ay, bx, by, radius):
    """True if a disk swept from (ax, ay) to (bx, by) touches an obstacle cell."""
    h, w = obstacle.shape
    lox = min(ax, bx) - radius
    hix = max(ax, bx) + radius
    loy = min(ay, by) - radius
    hiy = max(ay, by) + radius
    r0 = max(0, int(math.floor(loy / resolution)))
    r1 = min(h - 1, int(math.floor(hiy / resolution)))
    c0 = max(0, int(math.floor(lox / resolution)))
    c1 = min(w - 1, int(math.floor(hix / resolution)))
    for r in range(r0, r1 + 1):
        for c in range(c0, c1 + 1):
            if not obstacle[r, c]:
                continue
            x0 = c * resolution
            y0 = r * resolution
            if _segment_rect_dist(ax, ay, bx, by, x0, y0,
                                  x0 + resolution, y0 + resolution) < radius:
                return True
    return False
