"""Command-line entry point: gen-maps, gen-episodes, run, render, report."""

from __future__ import annotations

import argparse
import os
import sys

from . import grid_world, harness, metrics
from .config import ConfigError, load_config


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--agent", default=None,
                   help="hybrid | random | frontier_greedy | oracle | explore")
    p.add_argument("--preset", default=None, choices=["loco", "mon"])
    p.add_argument("--noise", default=None, choices=["off", "default"])
    p.add_argument("--policy", default=None,
                   choices=["nearest_frontier", "info_gain", "uniform"])
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--step-budget", type=int, default=None, dest="step_budget")
    p.add_argument("--out", default=None)


def _config_from_args(args) -> "load_config":
    overrides = {k: getattr(args, k) for k in
                 ("seed", "agent", "preset", "noise", "policy", "workers",
                  "step_budget", "out")
                 if hasattr(args, k)}
    return load_config(args.config, overrides)


def cmd_gen_maps(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.count):
        grid = grid_world.generate_maze(args.width, args.height,
                                        seed=args.seed + i,
                                        obstacle_density=args.density)
        path = os.path.join(args.out, f"maze_{i:03d}.map")
        grid_world.save_map(grid, path)
        print(f"wrote {path}")
    return 0


def cmd_gen_episodes(args) -> int:
    import glob
    os.makedirs(args.out, exist_ok=True)
    maps = sorted(glob.glob(os.path.join(args.maps, "*.map")))
    if not maps:
        print(f"no .map files in {args.maps}", file=sys.stderr)
        return 2
    index = 0
    for map_path in maps:
        grid = grid_world.load_map(map_path)
        map_id = os.path.splitext(os.path.basename(map_path))[0]
        for k in range(args.per_map):
            ep = grid_world.generate_episode(
                grid, seed=args.seed + index, n_goals=args.goals, map_id=map_id)
            path = os.path.join(args.out, f"episode_{index:04d}.episode")
            grid_world.save_episode(ep, path)
            print(f"wrote {path}")
            index += 1
    return 0


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    pairs = harness.load_episode_set(args.episodes, args.maps)
    out_dir = cfg.out
    results = harness.run_to_directory(cfg, pairs, out_dir)
    agg = metrics.aggregate(results)
    print(f"{len(results)} episodes -> {out_dir}")
    print("  " + "  ".join(f"{k}={agg[k]:.2f}" for k in metrics.METRIC_NAMES))
    return 0


def cmd_render(args) -> int:
    from .render import render_to_directory
    cfg = load_config(os.path.join(args.run, "config.txt"))
    trace_path = os.path.join(args.run, "traces", f"episode_{args.episode:04d}.trace")
    with open(trace_path, "r", encoding="ascii") as f:
        lines = f.read().splitlines()
    pairs = harness.load_episode_set(args.episodes, args.maps)
    world, episode = pairs[args.episode]
    out = args.out or os.path.join(args.run, f"frames_{args.episode:04d}")
    n = render_to_directory(cfg, world, episode, lines, args.episode, out,
                            zoom=args.zoom, overlay_heatmap=args.heatmap)
    print(f"wrote {n} frames to {out}")
    return 0


def cmd_report(args) -> int:
    import glob
    cfg = load_config(os.path.join(args.run, "config.txt"))
    pairs = harness.load_episode_set(args.episodes, args.maps)
    traces = sorted(glob.glob(os.path.join(args.run, "traces", "*.trace")))
    results = []
    for i, path in enumerate(traces):
        with open(path, "r", encoding="ascii") as f:
            lines = f.read().splitlines()
        world, episode = pairs[i]
        results.append(harness.result_from_trace(lines, world, episode, cfg, i))
    print(metrics.write_summary(results), end="")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="multinav",
        description="Multi-object navigation benchmark: simulator, hybrid agent, metrics")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-maps", help="generate maze map files")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_maps)

    p = sub.add_parser("gen-episodes", help="generate episode files for maps")
    p.add_argument("--maps", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-map", type=int, default=1, dest="per_map")
    p.add_argument("--goals", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_episodes)

    p = sub.add_parser("run", help="run a batch of episodes")
    p.add_argument("--episodes", required=True, help="directory of .episode files")
    p.add_argument("--maps", default=None, help="directory of .map files")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("render", help="render PPM frames by replaying a trace")
    p.add_argument("--run", required=True, help="run directory (with config.txt)")
    p.add_argument("--episodes", required=True)
    p.add_argument("--maps", default=None)
    p.add_argument("--episode", type=int, default=0)
    p.add_argument("--zoom", type=int, default=4)
    p.add_argument("--heatmap", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("report", help="recompute the summary from traces")
    p.add_argument("--run", required=True)
    p.add_argument("--episodes", required=True)
    p.add_argument("--maps", default=None)
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
