"""Command-line entry point: run, sweep, plot, inspect, presets.

Exit status: 0 on success, 2 on a configuration error (the offending key is
named on stderr), 3 when ``run --strict`` ends in a collision.
"""
from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench, config
from .errors import ConfigError, PeekPassError
from .planner import perceive, spawn_frontier
from .sim import Episode, run_episode, write_logs
from .world import Cell

EXIT_OK, EXIT_CONFIG, EXIT_COLLISION = 0, 2, 3


def _key_table() -> str:
    rows = config.schema()
    w = max(len(r[0]) for r in rows)
    wd = max(len(r[1]) for r in rows)
    lines = ["config keys (key, default, unit, meaning):"]
    for key, default, unit, desc in rows:
        lines.append(f"  {key:<{w}}  {default:<{wd}}  [{unit}]  {desc}")
    return "\n".join(lines)


def _add_config_args(p):
    p.add_argument("--preset", help="named preset, see `presets`")
    p.add_argument("--config", action="append", default=[], metavar="PATH",
                   help="config file, applied after the preset; repeatable")
    p.add_argument("--override", "-O", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted key override, applied last; repeatable")
    p.add_argument("--seed", type=int, help="sets scenario.rng_seed and planner.seed")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.RawDescriptionHelpFormatter
    ap = argparse.ArgumentParser(prog="peekpass", description="Peek-and-pass hallway planner testbed.",
                                 epilog=_key_table(), formatter_class=fmt)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one episode", epilog=_key_table(), formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--out", default="out/run", help="output directory (default: out/run)")
    p.add_argument("--strict", action="store_true", help="exit 3 if the episode ends in a collision")

    p = sub.add_parser("sweep", help="run a parameter sweep", epilog=_key_table(), formatter_class=fmt)
    _add_config_args(p)
    p.add_argument("--out", default="out/sweep", help="output directory (default: out/sweep)")
    p.add_argument("--workers", type=int, help="parallel workers (overrides sweep.workers)")
    p.add_argument("--quiet", action="store_true", help="no per-episode progress on stderr")

    p = sub.add_parser("plot", help="render SVG charts from a results CSV")
    p.add_argument("results", help="results.csv written by `sweep`")
    p.add_argument("--out", help="output directory (default: next to the CSV)")

    p = sub.add_parser("inspect", help="print the map and the initial visibility mask as text")
    _add_config_args(p)
    p.add_argument("--cols", type=float, nargs=2, metavar=("X0", "X1"),
                   help="only print the x range [X0, X1] in metres")

    p = sub.add_parser("presets", help="list presets and every config key with its default")
    p.add_argument("name", nargs="?", help="print one preset's contents")
    return ap


def load_config(args) -> config.Config:
    cfg = config.Config()
    if args.preset:
        cfg = config.load_preset(args.preset, cfg)
    for path in args.config:
        cfg = config.load_file(path, cfg)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    cfg = config.apply(cfg, [config.parse_override(o) for o in args.override])
    return config.validate(cfg)


def _echo(cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.cfg"), "w") as fh:
        fh.write(config.dump(cfg))


def cmd_run(args) -> int:
    cfg = load_config(args)
    _echo(cfg, args.out)
    metrics, logs = run_episode(cfg.scenario, cfg.planner)
    write_logs(logs, metrics, args.out)
    m = metrics
    print(f"outcome={m.outcome} time_to_goal={m.time_to_goal!r} avg_speed={m.avg_speed:.4f} "
          f"path_changes={m.path_changes} ps_violations={m.ps_violations} collisions={m.collisions} "
          f"seed={m.scenario_seed}/{m.planner_seed}")
    if args.strict and m.outcome == "collision":
        print("collision under --strict", file=sys.stderr)
        return EXIT_COLLISION
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args)
    spec = bench.SweepSpec.from_config(cfg)
    if args.workers is not None:
        spec = bench.SweepSpec(spec.axes, spec.seeds, spec.base, max(1, args.workers))
    _echo(cfg, args.out)
    progress = None
    if not args.quiet:
        print(f"sweep: {bench.describe(spec)}", file=sys.stderr)

        def progress(i, n, dt):
            print(f"  episode {i + 1}/{n} ({dt:.1f}s)", file=sys.stderr)
    rows, summary = bench.run_sweep(spec, progress)
    bench.write_outputs(rows, summary, args.out)
    paths = bench.render_plots(summary, args.out)
    for r in summary:
        cell = " ".join(f"{c}={bench._fmt(r[c])}" for c in bench.CELL_COLS)
        print(f"{cell} ttg_median={bench._fmt(r['ttg_median'])} speed_median={r['speed_median']:.4f} "
              f"goals={r['goals']}/{r['episodes']}")
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_plot(args) -> int:
    try:
        rows = bench.read_csv(args.results)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.results}: {exc.strerror}", "results") from None
    out = args.out or os.path.dirname(os.path.abspath(args.results))
    for p in bench.render_plots(bench.aggregate(rows), out):
        print(p)
    return EXIT_OK


def render_map(ep: Episode, cfg, cols=None) -> str:
    """Text art: '#' wall, '.' visible, ' ' unknown, ':' frontier, R robot, H human, G goal."""
    g = ep.grid
    mask, _ = perceive(ep, cfg.planner)
    art = np.full(g.cells.shape, " ", dtype="<U1")
    art[mask.visible] = "."
    front = spawn_frontier(mask, g, [], ep.human_radius)
    art[front[:, 0], front[:, 1]] = ":"
    art[g.cells == Cell.OCCUPIED] = "#"
    for _, (x, y), _ in ep.human_discs():
        i, j = g.world_to_cell(x, y)
        art[i, j] = "H"
    i, j = g.world_to_cell(ep.goal.x, ep.goal.y)
    art[i, j] = "G"
    i, j = g.world_to_cell(ep.robot_pose.x, ep.robot_pose.y)
    art[i, j] = "R"
    j0, j1 = 0, g.width
    if cols is not None:
        j0 = max(0, g.world_to_cell(cols[0], 0.0)[1])
        j1 = min(g.width, g.world_to_cell(cols[1], 0.0)[1] + 1)
    return "\n".join("".join(art[i, j0:j1]) for i in range(g.height - 1, -1, -1))


def cmd_inspect(args) -> int:
    cfg = load_config(args)
    ep = Episode(cfg.scenario, cfg.planner)
    print(f"grid {ep.grid.width}x{ep.grid.height} cells at {ep.grid.resolution} m, "
          f"{ep.humans.n} pedestrians, robot {ep.robot_pose}, goal {ep.goal}")
    print(render_map(ep, cfg, args.cols))
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.name:
        print(config.preset_text(args.name), end="")
        return EXIT_OK
    print("presets: " + ", ".join(config.preset_names()))
    print(_key_table())
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "plot": cmd_plot, "inspect": cmd_inspect,
            "presets": cmd_presets}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error [{exc.key}]: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PeekPassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
