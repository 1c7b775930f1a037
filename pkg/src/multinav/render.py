"""Replay-based episode rendering to binary PPM (P6) frames.

Determinism makes replay exact: re-running the episode from (map, episode,
config, seed) regenerates every belief state and plan, and the renderer
cross-checks the replayed actions against the stored trace, so a frame
sequence is a faithful visualization of the recorded run.
"""

from __future__ import annotations

import math

import numpy as np

from .config import RunConfig
from .grid_world import Episode, GridMap
from .harness import episode_rngs, make_agent, parse_trace_line
from .mapping import FREE, OCCUPIED
from .simulator import Action, Simulator

COLOR_UNKNOWN = (128, 128, 128)
COLOR_FREE = (255, 255, 255)
COLOR_OCCUPIED = (0, 0, 0)
COLOR_AGENT = (220, 40, 40)
COLOR_WAYPOINT = (40, 90, 230)
COLOR_PATH = (245, 150, 30)
COLOR_GOAL = (40, 180, 60)
COLOR_HEAT = (200, 30, 160)


class TraceMismatch(RuntimeError):
    """Replay diverged from the stored trace (inconsistent inputs)."""


def write_ppm(path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.astype(np.uint8).tobytes())


def _base_frame(agent, zoom: int) -> np.ndarray:
    state = agent.belief.state
    h, w = state.shape
    rgb = np.empty((h, w, 3), dtype=np.uint8)
    rgb[:] = COLOR_UNKNOWN
    rgb[state == FREE] = COLOR_FREE
    rgb[state == OCCUPIED] = COLOR_OCCUPIED
    return np.kron(rgb, np.ones((zoom, zoom, 1), dtype=np.uint8))


def _paint_cell(frame, agent, r: int, c: int, color, zoom: int) -> None:
    lr = r - agent.belief.off_r
    lc = c - agent.belief.off_c
    h, w, _ = frame.shape
    if 0 <= lr * zoom < h and 0 <= lc * zoom < w:
        frame[lr * zoom:(lr + 1) * zoom, lc * zoom:(lc + 1) * zoom] = color


def _paint_point(frame, agent, x: float, y: float, color, zoom: int) -> None:
    res = agent.belief.resolution
    _paint_cell(frame, agent, int(math.floor(y / res)), int(math.floor(x / res)),
                color, zoom)


def _frame(agent, world: GridMap, episode: Episode, zoom: int,
           heatmap: np.ndarray | None) -> np.ndarray:
    frame = _base_frame(agent, zoom)
    if heatmap is not None and heatmap.max() > 0:
        # heatmap lives in the ego frame; splat positive cells back to world
        egomap = agent.belief.extract_egomap(agent.estimate, heatmap.shape[0])
        peak = heatmap.max()
        rr, cc = np.nonzero(heatmap)
        res = agent.belief.resolution
        for r, c in zip(rr, cc):
            x, y = egomap.cell_to_world(int(r), int(c))
            alpha = 0.3 + 0.7 * float(heatmap[r, c]) / peak
            gr = int(math.floor(y / res)) - agent.belief.off_r
            gc = int(math.floor(x / res)) - agent.belief.off_c
            if 0 <= gr < agent.belief.height and 0 <= gc < agent.belief.width:
                block = frame[gr * zoom:(gr + 1) * zoom, gc * zoom:(gc + 1) * zoom]
                block[:] = ((1 - alpha) * block + alpha * np.array(COLOR_HEAT)).astype(np.uint8)
    for r, c in agent.current_path:
        _paint_cell(frame, agent, r, c, COLOR_PATH, zoom)
    for goal in episode.goals:
        _paint_point(frame, agent, goal.x, goal.y, COLOR_GOAL, zoom)
    if agent.waypoint_world is not None:
        _paint_point(frame, agent, *agent.waypoint_world, COLOR_WAYPOINT, zoom)
    _paint_point(frame, agent, agent.estimate.x, agent.estimate.y, COLOR_AGENT, zoom)
    return frame


def render_episode(cfg: RunConfig, world: GridMap, episode: Episode,
                   trace_lines: list[str], episode_index: int,
                   zoom: int = 4, overlay_heatmap: bool = False):
    """Yield (frame_index, rgb) for the prior map plus one frame per step."""
    records = [parse_trace_line(ln) for ln in trace_lines if not ln.startswith("#")]
    sim_rng, agent_rng = episode_rngs(cfg.seed, episode_index)
    budget = None if cfg.step_budget < 0 else cfg.step_budget
    sim = Simulator(world, episode, sensor=cfg.sensor(), motion=cfg.motion(),
                    noise=cfg.noise_model(), rng=sim_rng, step_budget=budget)
    agent = make_agent(cfg, episode, agent_rng)
    obs = sim.reset()
    agent.reset(obs, (world.height, world.width), world.resolution)

    heat = None
    yield 0, _frame(agent, world, episode, zoom, heat)
    for rec in records:
        if obs.episode_over:
            raise TraceMismatch("trace has more steps than the replay")
        action = agent.act(obs)
        if action.value != rec["action"]:
            raise TraceMismatch(
                f"step {rec['step']}: trace action {rec['action']!r} "
                f"!= replayed {action.value!r}")
        obs = sim.step(action)
        agent.absorb(obs)
        if overlay_heatmap:
            egomap = agent.belief.extract_egomap(agent.estimate, cfg.egomap_side)
            raw, _ = agent.policy.update(egomap, agent.policy_state)
            from .exploration import mask_unexplored
            heat = mask_unexplored(raw, egomap)
        yield rec["step"], _frame(agent, world, episode, zoom, heat)


def render_to_directory(cfg: RunConfig, world: GridMap, episode: Episode,
                        trace_lines: list[str], episode_index: int, out_dir,
                        zoom: int = 4, overlay_heatmap: bool = False) -> int:
    import os
    os.makedirs(out_dir, exist_ok=True)
    count = 0
    for idx, frame in render_episode(cfg, world, episode, trace_lines,
                                     episode_index, zoom, overlay_heatmap):
        write_ppm(os.path.join(out_dir, f"frame_{idx:05d}.ppm"), frame)
        count += 1
    return count
