"""Batch episode execution: agents, traces, summary CSV, reproducibility.

Every episode is seeded from (run seed, episode index) through SeedSequence
spawn keys, so results are byte-identical across runs and across worker
counts; the pool only changes wall-clock time, never output.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import exploration, metrics
from .config import RunConfig
from .controller import HybridAgent, RandomWaypointAgent
from .grid_world import (Episode, GridMap, episode_from_text, episode_to_text,
                         load_episode, load_map, map_to_text)
from .metrics import EpisodeResult
from .simulator import Simulator

TRACE_VERSION = 1


def make_agent(cfg: RunConfig, episode: Episode, rng: np.random.Generator):
    """Instantiate the configured agent; see baseline_agents() for the roster."""
    policy_cls = exploration.POLICIES[cfg.policy]
    if cfg.policy == "nearest_frontier":
        policy = policy_cls(tau=cfg.tau)
    elif cfg.policy == "info_gain":
        policy = policy_cls(disk_radius=cfg.disk_radius)
    else:
        policy = policy_cls()
    common = dict(rng=rng, motion=cfg.motion(), egomap_side=cfg.egomap_side,
                  found_trigger=cfg.found_trigger, map_threshold=cfg.map_threshold,
                  subgoal_spacing=cfg.subgoal_spacing, subgoal_limit=cfg.subgoal_limit)
    if cfg.agent == "hybrid":
        return HybridAgent(policy=policy, **common)
    if cfg.agent == "frontier_greedy":
        return HybridAgent(policy=exploration.NearestFrontierPolicy(tau=cfg.tau),
                           greedy=True, **common)
    if cfg.agent == "oracle":
        return HybridAgent(policy=policy, preseed_goals=episode.goals, **common)
    if cfg.agent == "explore":
        return HybridAgent(policy=policy, explore_only=True, **common)
    if cfg.agent == "random":
        return RandomWaypointAgent(**common)
    raise ValueError(f"unknown agent {cfg.agent!r}")


def baseline_agents() -> dict[str, str]:
    """Baseline roster: config `agent` value -> description."""
    return {
        "random": "uniform random waypoints over the reachable belief, no exploitation",
        "frontier_greedy": "deterministic argmax of the nearest-frontier heatmap",
        "oracle": "hybrid agent with all goals pre-seeded into the semantic cloud",
    }


def episode_rngs(run_seed: int, episode_index: int):
    """Independent generators for (simulator, agent), stable per episode."""
    sim_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=run_seed, spawn_key=(episode_index, 0))))
    agent_rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=run_seed, spawn_key=(episode_index, 1))))
    return sim_rng, agent_rng


def _fmt(v: float) -> str:
    return repr(float(v))


def trace_header(cfg: RunConfig, episode: Episode, index: int) -> str:
    return (f"# multinav-trace v{TRACE_VERSION} episode={index} map={episode.map_id} "
            f"seed={cfg.seed} agent={cfg.agent} policy={cfg.policy} noise={cfg.noise}")


@dataclass
class StepRecord:
    """One trace line per environment step; parse with parse_trace_line."""
    step: int
    x: float
    y: float
    heading: float
    est_x: float
    est_y: float
    est_heading: float
    mode: str
    action: str
    waypoint: tuple[float, float] | None
    chain: int
    reward: float
    coverage: float
    explored_area: float
    detections: tuple[tuple[int, float], ...]
    found: int
    collided: int
    over: int

    def to_line(self) -> str:
        wp = "-" if self.waypoint is None else f"{self.waypoint[0]!r},{self.waypoint[1]!r}"
        det = ";".join(f"{c}:{f!r}" for c, f in self.detections) or "-"
        return (f"step={self.step} x={_fmt(self.x)} y={_fmt(self.y)} h={_fmt(self.heading)} "
                f"ex={_fmt(self.est_x)} ey={_fmt(self.est_y)} eh={_fmt(self.est_heading)} "
                f"mode={self.mode} action={self.action} wp={wp} chain={self.chain} "
                f"reward={_fmt(self.reward)} cov={_fmt(self.coverage)} "
                f"area={_fmt(self.explored_area)} det={det} found={self.found} "
                f"collided={self.collided} over={self.over}")


def parse_trace_line(line: str) -> dict:
    out: dict = {}
    for token in line.split():
        key, val = token.split("=", 1)
        if key in ("step", "chain", "found", "collided", "over"):
            out[key] = int(val)
        elif key in ("x", "y", "h", "ex", "ey", "eh", "reward", "cov", "area"):
            out[key] = float(val)
        elif key == "wp":
            out[key] = None if val == "-" else tuple(float(v) for v in val.split(","))
        elif key == "det":
            out[key] = () if val == "-" else tuple(
                (int(p.split(":")[0]), float(p.split(":")[1])) for p in val.split(";"))
        else:
            out[key] = val
    return out


def run_episode(cfg: RunConfig, world: GridMap, episode: Episode,
                episode_index: int) -> tuple[EpisodeResult, list[str]]:
    """Run one episode to completion; returns the result and its trace lines."""
    sim_rng, agent_rng = episode_rngs(cfg.seed, episode_index)
    budget = None if cfg.step_budget < 0 else cfg.step_budget
    sim = Simulator(world, episode, sensor=cfg.sensor(), motion=cfg.motion(),
                    noise=cfg.noise_model(), rng=sim_rng, step_budget=budget)
    agent = make_agent(cfg, episode, agent_rng)
    obs = sim.reset()
    agent.reset(obs, (world.height, world.width), world.resolution)

    lines = [trace_header(cfg, episode, episode_index)]
    e_prev = agent.belief.explored_area()
    e_start = e_prev
    goals_found = 0
    path_at_last_found = 0.0
    curve: list[tuple[int, float]] = []

    while not obs.episode_over:
        action = agent.act(obs)
        mode = agent.mode_name
        waypoint = agent.waypoint_world
        chain_step = agent.chain_step
        obs = sim.step(action)
        agent.absorb(obs)
        e_t = agent.belief.explored_area()
        reward = exploration.compute_reward(e_t, e_prev)
        e_prev = e_t
        cov = exploration.coverage(agent.belief, world)
        if obs.target_found:
            goals_found += 1
            path_at_last_found = sim.path_length
        curve.append((obs.step, cov))
        lines.append(StepRecord(
            step=obs.step, x=obs.true_pose.x, y=obs.true_pose.y,
            heading=obs.true_pose.heading, est_x=agent.estimate.x,
            est_y=agent.estimate.y, est_heading=agent.estimate.heading,
            mode=mode, action=action.value, waypoint=waypoint, chain=chain_step,
            reward=reward, coverage=cov, explored_area=e_t,
            detections=tuple((d.class_id, d.pixel_fraction) for d in obs.detections),
            found=int(obs.target_found), collided=int(obs.collided),
            over=int(obs.episode_over)).to_line())

    result = EpisodeResult(
        episode_index=episode_index, map_id=episode.map_id, seed=episode.seed,
        goals_found=goals_found, n_goals=len(episode.goals),
        agent_path_length=sim.path_length,
        path_length_at_last_found=path_at_last_found,
        oracle_prefix_lengths=metrics.oracle_prefix_lengths(
            world, episode, cfg.motion(), cfg.robot_radius),
        steps_used=sim.step_count,
        final_coverage=exploration.coverage(agent.belief, world),
        coverage_curve=curve)
    lines.append(f"# result goals_found={goals_found} path={sim.path_length!r} "
                 f"steps={sim.step_count} "
                 f"reward_total={_fmt(exploration.DEFAULT_REWARD_SCALE * (e_prev - e_start))}")
    return result, lines


def _worker(args):
    cfg, map_text, episode_text, index = args
    return run_episode(cfg, load_map(map_text), episode_from_text(episode_text), index)


def run_batch(cfg: RunConfig, pairs: list[tuple[GridMap, Episode]]
              ) -> tuple[list[EpisodeResult], list[list[str]]]:
    """Run a list of (world, episode) pairs; order-stable by episode index."""
    if cfg.workers <= 1 or len(pairs) <= 1:
        out = [run_episode(cfg, world, ep, i) for i, (world, ep) in enumerate(pairs)]
    else:
        jobs = [(cfg, map_to_text(world), episode_to_text(ep), i)
                for i, (world, ep) in enumerate(pairs)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(_worker, jobs))
    results = [r for r, _ in out]
    traces = [t for _, t in out]
    return results, traces


def run_to_directory(cfg: RunConfig, pairs: list[tuple[GridMap, Episode]],
                     out_dir) -> list[EpisodeResult]:
    """Full run: effective config echo, per-episode trace files, summary CSV."""
    os.makedirs(out_dir, exist_ok=True)
    trace_dir = os.path.join(out_dir, "traces")
    os.makedirs(trace_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="ascii") as f:
        f.write(cfg.to_text())
    results, traces = run_batch(cfg, pairs)
    for i, lines in enumerate(traces):
        with open(os.path.join(trace_dir, f"episode_{i:04d}.trace"), "w",
                  encoding="ascii") as f:
            f.write("\n".join(lines) + "\n")
    metrics.save_summary(results, os.path.join(out_dir, "summary.csv"))
    return results


def result_from_trace(trace_lines: list[str], world: GridMap, episode: Episode,
                      cfg: RunConfig, episode_index: int) -> EpisodeResult:
    """Recompute an EpisodeResult from a trace alone (plus the run inputs);
    what the `report` subcommand uses to prove traces are self-sufficient."""
    records = [parse_trace_line(ln) for ln in trace_lines if not ln.startswith("#")]
    path = 0.0
    prev = None
    goals_found = 0
    path_at_last_found = 0.0
    curve = []
    for rec in records:
        if prev is not None:
            path += math.hypot(rec["x"] - prev[0], rec["y"] - prev[1])
        else:
            path += math.hypot(rec["x"] - episode.start_pose[0],
                               rec["y"] - episode.start_pose[1])
        prev = (rec["x"], rec["y"])
        if rec["found"]:
            goals_found += 1
            path_at_last_found = path
        curve.append((rec["step"], rec["cov"]))
    return EpisodeResult(
        episode_index=episode_index, map_id=episode.map_id, seed=episode.seed,
        goals_found=goals_found, n_goals=len(episode.goals),
        agent_path_length=path, path_length_at_last_found=path_at_last_found,
        oracle_prefix_lengths=metrics.oracle_prefix_lengths(
            world, episode, cfg.motion(), cfg.robot_radius),
        steps_used=records[-1]["step"] if records else 0,
        final_coverage=records[-1]["cov"] if records else 0.0,
        coverage_curve=curve)


def load_episode_set(episodes_dir, maps_dir=None):
    """Load (world, episode) pairs from a directory of .episode files, with
    map files resolved by map_id in the same/maps directory."""
    import glob
    pairs = []
    files = sorted(glob.glob(os.path.join(str(episodes_dir), "*.episode")))
    if not files:
        raise FileNotFoundError(f"no .episode files in {episodes_dir}")
    map_cache: dict[str, GridMap] = {}
    search = [str(maps_dir)] if maps_dir else []
    search += [str(episodes_dir), os.path.join(str(episodes_dir), "..", "maps")]
    for path in files:
        episode = load_episode(path)
        world = map_cache.get(episode.map_id)
        if world is None:
            for d in search:
                cand = os.path.join(d, f"{episode.map_id}.map")
                if os.path.exists(cand):
                    world = load_map(cand)
                    break
            if world is None:
                raise FileNotFoundError(f"map {episode.map_id!r} not found for {path}")
            map_cache[episode.map_id] = world
        pairs.append((world, episode))
    return pairs
