"""Command-line entry point: plan, simulate, bench, sweep, replay, make-suite.

Exit codes: 0 success, 2 no path, 3 parse or configuration error,
4 assertion failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path as FsPath

import numpy as np

EXIT_OK = 0
EXIT_NO_PATH = 2
EXIT_PARSE = 3
EXIT_ASSERT = 4

STRATEGY_ALIASES = {
    "nf": "no_fusion",
    "no_fusion": "no_fusion",
    "km": "kmeans_only",
    "kmeans_only": "kmeans_only",
    "es": "euclidean",
    "euclidean": "euclidean",
    "angular": "angular",
    "ours": "angular",
}
METHOD_LABELS = {
    "no_fusion": "No Fusion",
    "kmeans_only": "k-means Only",
    "euclidean": "Euclidean Selection",
    "angular": "Angular Selection",
}


class UsageError(Exception):
    """Bad input files or arguments; maps to the parse-error exit code."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments, which is our no-path code.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_PARSE, f"{self.prog}: error: {message}\n")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write(text: str, dest) -> None:
    if dest is None or str(dest) == "-":
        sys.stdout.write(text)
    else:
        FsPath(dest).write_text(text)


def _fnum(x) -> str:
    return f"{x:g}"


# ---------------------------------------------------------------- parsing helpers


def parse_strategy(token: str, default_beta: float):
    """``nf``, ``km``, ``es``, ``angular`` or ``nf@<beta>`` -> (label, strategy, beta)."""
    name, _, beta_text = token.strip().partition("@")
    strategy = STRATEGY_ALIASES.get(name.lower())
    if strategy is None:
        raise UsageError(f"unknown strategy {token!r}; use nf, km, es or angular")
    if beta_text and strategy != "no_fusion":
        raise UsageError(f"only nf takes a beta, got {token!r}")
    try:
        beta = float(beta_text) if beta_text else default_beta
    except ValueError as exc:
        raise UsageError(f"bad beta in {token!r}") from exc
    label = METHOD_LABELS[strategy]
    if strategy == "no_fusion":
        label += f" (beta={_fnum(beta)})"
    return label, strategy, beta


def parse_ordering(text: str):
    """``angular>es>nf`` -> list of strategy names, best first."""
    parts = [p.strip() for p in text.split(">")]
    if len(parts) < 2 or not all(parts):
        raise UsageError(f"ordering must look like a>b>c, got {text!r}")
    out = []
    for p in parts:
        if p.lower() not in STRATEGY_ALIASES:
            raise UsageError(f"unknown strategy {p!r} in ordering")
        out.append(STRATEGY_ALIASES[p.lower()])
    return out


def parse_values(text: str) -> list:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"--values must be comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise UsageError("--values is empty")
    return vals


# ---------------------------------------------------------------- commands


def _load_cases(args, cfg, camera):
    from .eval import load_suite, make_fork_suite

    noise = cfg.eval.noise
    if args.suite:
        try:
            return load_suite(args.suite, camera, cfg.grid, noise)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot load suite {args.suite}: {exc}") from exc
    return make_fork_suite(cfg.eval.suite_size, cfg.eval.suite_seed, camera, cfg.grid, noise)


def cmd_plan(args, cfg) -> int:
    from .camera import RayTableParseError, load_ray_table, read_mask
    from .fusion import NoPathError, plan
    from .paths import sample_paths
    from .plotting import plan_figure, save_svg

    if abs(args.goal_bearing) > math.pi:
        raise UsageError(f"|goal bearing| must be <= pi, got {args.goal_bearing}")
    try:
        camera = load_ray_table(args.calib, cfg.camera.mount_height) if args.calib else cfg.build_camera()
    except (OSError, RayTableParseError, ValueError) as exc:
        raise UsageError(f"cannot load calibration: {exc}") from exc
    try:
        mask = read_mask(args.mask)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read mask {args.mask}: {exc}") from exc
    w, h = camera.image_dims
    if mask.shape != (h, w):
        raise UsageError(f"mask is {mask.shape[1]}x{mask.shape[0]}, calibration expects {w}x{h}")

    from .camera import project_mask_to_bev

    cmap = project_mask_to_bev(camera, mask, cfg.grid)
    pathset = sample_paths(cfg.sampler, cfg.seed)
    g = np.array([math.sin(args.goal_bearing), math.cos(args.goal_bearing)])
    try:
        _, diag = plan(pathset, cmap, g, cfg.planner_config())
    except NoPathError as exc:
        print(f"no path: {exc}", file=sys.stderr)
        _write(_dump({"status": "no_path", "message": str(exc)}), args.out)
        return EXIT_NO_PATH
    _write(_dump({"status": "ok", "goal_bearing": args.goal_bearing, **diag.to_json()}), args.out)
    if args.svg:
        save_svg(plan_figure(cmap, diag, pathset, g), args.svg)
    return EXIT_OK


def cmd_simulate(args, cfg) -> int:
    from .paths import sample_paths
    from .sim import Mission, default_mission, load_world, outcome_label, run_mission

    try:
        world = load_world(args.world)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load world {args.world}: {exc}") from exc
    if args.mission:
        try:
            mission = Mission.from_json(json.loads(FsPath(args.mission).read_text()))
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"cannot load mission {args.mission}: {exc}") from exc
    else:
        mission = default_mission(world)
    camera = cfg.build_camera()
    log = run_mission(
        world,
        mission,
        cfg.planner_config(),
        camera,
        cfg.seed,
        pathset=sample_paths(cfg.sampler, cfg.seed),
        sim=cfg.sim,
        grid=cfg.grid,
    )
    if args.log:
        FsPath(args.log).write_text(log.to_jsonl())
    print(f"score={_fnum(log.score)} outcome={outcome_label(log)}")
    return EXIT_OK


def cmd_bench(args, cfg) -> int:
    from .eval import run_fusion_bench, table_csv
    from .paths import sample_paths

    tokens = [t for t in args.strategies.split(",") if t.strip()]
    specs = [parse_strategy(t, cfg.planner.beta) for t in tokens]
    ordering = parse_ordering(args.assert_ordering) if args.assert_ordering else None
    if ordering:
        have = {s for _, s, _ in specs}
        missing = [s for s in ordering if s not in have]
        if missing:
            raise UsageError(f"ordering mentions strategies not benchmarked: {missing}")
    camera = cfg.build_camera()
    cases = _load_cases(args, cfg, camera)
    pathset = sample_paths(cfg.sampler, cfg.seed)
    rows = []
    for label, strategy, beta in specs:
        rep = run_fusion_bench(cases, cfg.planner_config(strategy=strategy, beta=beta), pathset, args.jobs)
        rows.append((label, rep))
    _write(table_csv(rows), args.out)
    if args.json:
        FsPath(args.json).write_text(_dump([{"method": label, **rep.to_json()} for label, rep in rows]))
    if ordering:
        # Several nf rows (different betas) are compared through their best one.
        best = {}
        for _, rep in rows:
            best[rep.strategy] = max(best.get(rep.strategy, -1.0), rep.psa)
        pairs = list(zip(ordering, ordering[1:]))
        failed = [(a, b) for a, b in pairs if not best[a] > best[b]]
        for a, b in failed:
            print(f"ordering violated: PSA({a})={best[a]:.3f} <= PSA({b})={best[b]:.3f}", file=sys.stderr)
        if failed:
            return EXIT_ASSERT
    return EXIT_OK


def cmd_sweep(args, cfg) -> int:
    from .eval import beta_csv, beta_sweep, pr_csv, pr_sweep
    from .paths import sample_paths
    from .plotting import beta_curve, pr_curve, save_svg

    values = parse_values(args.values)
    camera = cfg.build_camera()
    cases = _load_cases(args, cfg, camera)
    if args.kind == "threshold":
        if values != sorted(values):
            raise UsageError("threshold values must be ascending")
        rows = pr_sweep(cases, values, cfg.planner_config(), sample_paths(cfg.sampler, cfg.seed), args.jobs)
        text, fig = pr_csv(rows), (pr_curve(rows) if args.svg else None)
    else:
        seeds = [cfg.seed + s for s in cfg.eval.beta_seeds]
        rows = beta_sweep(cases, values, cfg.planner_config(), cfg.sampler, seeds, args.jobs)
        text, fig = beta_csv(rows), (beta_curve(rows) if args.svg else None)
    _write(text, args.out)
    if fig is not None:
        save_svg(fig, args.svg)
    return EXIT_OK


def cmd_replay(args, cfg) -> int:
    from .sim import SimLog, load_world, replay

    try:
        log = SimLog.from_jsonl(FsPath(args.log).read_text())
        world = load_world(args.world) if args.world else None
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"cannot load replay inputs: {exc}") from exc
    frames = replay(log, world)
    out = FsPath(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, svg in enumerate(frames):
        (out / f"frame_{i:05d}.svg").write_text(svg)
    print(f"frames={len(frames)}")
    return EXIT_OK


def cmd_make_suite(args, cfg) -> int:
    from .eval import write_fork_suite

    files = write_fork_suite(args.out_dir, args.n if args.n is not None else cfg.eval.suite_size, cfg.eval.suite_seed)
    print(f"cases={len(files)}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


class _Formatter(argparse.ArgumentDefaultsHelpFormatter):
    # Only show defaults that carry information.
    def _get_help_string(self, action):
        if action.default in (None, [], False) or "(default" in (action.help or ""):
            return action.help
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    fmt = _Formatter
    common = _Parser(add_help=False, formatter_class=fmt)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="override one config value (repeatable; VALUE parsed as JSON)",
    )
    common.add_argument("--seed", type=int, default=None, help="random seed (overrides config)")
    common.add_argument("--ci", action="store_true", help="CI mode: --seed becomes mandatory")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for benches and sweeps")

    parser = _Parser(prog="pathfuse", description=__doc__.splitlines()[0], formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], formatter_class=fmt, help="plan once from a traversability mask")
    p.add_argument("--mask", required=True, help="PGM mask, >=128 means traversable")
    p.add_argument("--calib", default=None, help="ray-table calibration file (default: camera from config)")
    p.add_argument(
        "--goal-bearing", type=float, default=0.0, help="goal bearing in radians, positive to the right of forward"
    )
    p.add_argument("--out", default="-", help="diagnostics JSON destination")
    p.add_argument("--svg", default=None, help="optional BEV plot")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], formatter_class=fmt, help="run a closed-loop mission")
    p.add_argument("--world", required=True, help="world JSON file")
    p.add_argument("--mission", default=None, help="mission JSON (default: single checkpoint at the world goal)")
    p.add_argument("--log", default=None, help="write the JSON-lines log here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("bench", parents=[common], formatter_class=fmt, help="strategy comparison table")
    p.add_argument("--suite", default=None, help="case directory (default: generated fork suite)")
    p.add_argument("--strategies", default="nf@0.1,nf@1,nf@10,km,es,angular", help="comma list of nf[@beta], km, es, angular")
    p.add_argument("--assert-ordering", default=None, help="e.g. angular>es>nf; exit 4 if PSA ordering fails")
    p.add_argument("--out", default="-", help="CSV destination")
    p.add_argument("--json", default=None, help="full report JSON")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt, help="merge-threshold or beta sweep")
    p.add_argument("--kind", choices=("threshold", "beta"), required=True)
    p.add_argument("--values", required=True, help="comma-separated sweep values")
    p.add_argument("--suite", default=None, help="case directory (default: generated fork suite)")
    p.add_argument("--out", default="-", help="CSV destination")
    p.add_argument("--svg", default=None, help="optional plot")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("replay", parents=[common], formatter_class=fmt, help="render a log to SVG frames")
    p.add_argument("--log", required=True, help="simulation JSON-lines log")
    p.add_argument("--world", default=None, help="world file (default: regenerate from the log header)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("make-suite", parents=[common], formatter_class=fmt, help="write a fork case suite")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=None, help="case count (default: eval.suite_size)")
    p.set_defaults(func=cmd_make_suite)
    return parser


def main(argv=None) -> int:
    from .config import ConfigError, load_config

    parser = build_parser()
    args = parser.parse_args(argv)
    if args.ci and args.seed is None:
        print("error: --ci requires --seed", file=sys.stderr)
        return EXIT_PARSE
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = load_config(args.config, args.overrides, args.seed)
        return args.func(args, cfg)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
