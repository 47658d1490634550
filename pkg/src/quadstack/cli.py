"""``quadstack`` command-line entry point."""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import KEYS, ConfigError, RunConfig, resolve
from .controller import Gains
from .global_planner import plan_global
from .global_planner.planner import UnreachableError
from .kinematics import IkParams, RobotModel
from .local_planner import (GaitPattern, PlanningError, body_state_at, check_feasibility,
                            check_node_invariants, plan_gait, plan_to_csv)
from .metrics import (DEFAULT_GOAL_RADIUS, benchmark, emit_report, format_table, aggregate, summarize)
from .robot_interface import (CalibrationTimeout, Event, IllegalTransition, InterfaceState, State,
                              TimingMonitor, apply_index_offsets, parse_offsets, random_encoders,
                              soft_calibrate, state_machine_step, suggested_offsets)
from .robot_interface.calibration import WINDOW
from .simulator import EpisodeSpec, SimConfig, load_run_log, run_episode
from .terrain import (TASKS, TaskEnvConfig, TerrainError, deviation_grid, generate_task_env,
                      load_heightmap, save_heightmap)

PROG = "quadstack"


# ---------------------------------------------------------------------------
# argument parsing

def _xy(text: str):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y but got {text!r}") from None
    if len(vals) not in (2, 3):
        raise argparse.ArgumentTypeError(f"expected x,y or x,y,yaw but got {text!r}")
    return vals


def _floats4(text: str):
    try:
        vals = tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected four numbers, got {text!r}") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError(f"expected four numbers, got {text!r}")
    return vals


def _run_flags() -> argparse.ArgumentParser:
    """Flags mirroring every RunConfig key; all default to None so the file/default wins."""
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run configuration (flag > --config file > default)")
    g.add_argument("--config", help="JSON run configuration file")
    g.add_argument("--map", help="heightmap file")
    g.add_argument("--task", choices=TASKS, help="generate the task map for --seed instead of --map")
    g.add_argument("--seed", type=int, help="task map and plant seed (default 0)")
    g.add_argument("--start", type=_xy, help="start x,y[,yaw]")
    g.add_argument("--goal", type=_xy, help="goal x,y[,yaw]")
    g.add_argument("--cycle-duration", type=float)
    g.add_argument("--duty-factor", type=float)
    g.add_argument("--phase-offsets", type=_floats4, help="four leg phase offsets FL,FR,HL,HR")
    g.add_argument("--full-stance-fraction", type=float)
    g.add_argument("--step-height", type=float)
    g.add_argument("--kp", type=float)
    g.add_argument("--kd", type=float)
    g.add_argument("--ik-lambda", type=float)
    g.add_argument("--ik-tolerance", type=float)
    g.add_argument("--ik-max-iterations", type=int)
    g.add_argument("--threshold", type=float, help="height deviation threshold, m")
    g.add_argument("--probe-length", type=float, help="micro-trajectory length, m")
    g.add_argument("--clearance", type=float, help="obstacle clearance for the grid search, m")
    g.add_argument("--step-size", type=float, help="segment goal spacing along the path, m")
    g.add_argument("--time-limit", type=float, help="simulated seconds")
    g.add_argument("--goal-radius", type=float)
    g.add_argument("--fss-workers", type=int, help="threads for micro-trajectory probes")
    g.add_argument("--mode", choices=("onboard_pd", "torque"))
    g.add_argument("--out", help="output path (default: $QUADSTACK_OUT or .)")
    return p


def build_parser() -> argparse.ArgumentParser:
    run = _run_flags()
    parser = argparse.ArgumentParser(prog=PROG, description="Quadruped planning and control stack.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    terrain = sub.add_parser("terrain", help="generate or validate heightmaps")
    tsub = terrain.add_subparsers(dest="action", metavar="action")
    gen = tsub.add_parser("gen", parents=[run], help="write a task map")
    gen.set_defaults(func=cmd_terrain_gen)
    val = tsub.add_parser("validate", help="parse a map file and print its summary")
    val.add_argument("file")
    val.set_defaults(func=cmd_terrain_validate)

    plan = sub.add_parser("plan", help="global or local planning")
    psub = plan.add_subparsers(dest="action", metavar="action")
    pg = psub.add_parser("global", parents=[run], help="feasibility map, grid path and spline as JSON")
    pg.set_defaults(func=cmd_plan_global)
    pl = psub.add_parser("local", parents=[run], help="one gait plan as CSV")
    pl.set_defaults(func=cmd_plan_local)

    sim = sub.add_parser("simulate", parents=[run], help="run one closed-loop episode")
    sim.add_argument("--name", default="run", help="file stem of the RunLog (default run)")
    sim.set_defaults(func=cmd_simulate)

    bench = sub.add_parser("bench", parents=[run], help="seeded benchmark runs of a task")
    bench.add_argument("--runs", type=int, default=20)
    bench.add_argument("--seed-base", type=int, default=0)
    bench.add_argument("--jobs", type=int, default=1, help="episodes run in parallel processes")
    bench.add_argument("--save-logs", action="store_true", help="also write every RunLog")
    bench.set_defaults(func=cmd_bench)

    cal = sub.add_parser("calibrate", help="soft calibration against simulated encoders")
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--offsets", help="12 comma-separated index offsets to apply")
    cal.add_argument("--offset-range", type=float, default=None,
                     help="max |power-on offset| in rad (default: just inside the index window)")
    cal.add_argument("--amplitude", type=float, default=4.0)
    cal.set_defaults(func=cmd_calibrate)

    rep = sub.add_parser("report", help="summarize saved RunLogs")
    rep.add_argument("--logs", required=True, help="directory of <name>.csv + <name>.json RunLogs")
    rep.add_argument("--out", default=None, help="output directory (default: $QUADSTACK_OUT or .)")
    rep.set_defaults(func=cmd_report)

    con = sub.add_parser("console", parents=[run], help="interactive Sweep/Hold/Run console")
    con.add_argument("--auto", action="store_true", help="issue the go commands automatically")
    con.set_defaults(func=cmd_console)
    return parser


def _flag_dict(args) -> dict:
    out = {}
    for key in KEYS:
        val = getattr(args, key, None)
        if key in ("start", "goal") and val is not None:
            val = val[:2]
        out[key] = val
    return out


def run_config(args) -> RunConfig:
    return resolve(getattr(args, "config", None), _flag_dict(args))


# ---------------------------------------------------------------------------
# wiring helpers

def _terrain(cfg: RunConfig):
    if cfg.map is not None:
        return load_heightmap(cfg.map)
    if cfg.task is not None:
        return generate_task_env(cfg.task, cfg.seed)
    raise ConfigError("no terrain: give --map FILE or --task NAME [--seed N]")


def _endpoints(cfg: RunConfig, hmap):
    env = TaskEnvConfig()
    start = cfg.start or env.start
    goal = cfg.goal or env.goal
    for name, (x, y) in (("start", start), ("goal", goal)):
        if not hmap.contains(x, y):
            raise ConfigError(f"{name} {x},{y} lies outside the map; pass --{name} x,y")
    return tuple(start), tuple(goal)


def _pattern(cfg: RunConfig) -> GaitPattern:
    return GaitPattern(cfg.cycle_duration, cfg.phase_offsets, cfg.duty_factor, cfg.full_stance_fraction,
                       cfg.step_height)


def _ik(cfg: RunConfig) -> IkParams:
    return IkParams(lam=cfg.ik_lambda, tolerance=cfg.ik_tolerance, max_iterations=cfg.ik_max_iterations)


def _label(cfg: RunConfig) -> dict:
    if cfg.task is not None:
        return {"task": cfg.task, "seed": cfg.seed}
    return {"task": "custom", "seed": cfg.seed, "map": os.path.abspath(cfg.map)}


def episode_spec(cfg: RunConfig, hmap) -> EpisodeSpec:
    start, goal = _endpoints(cfg, hmap)
    return EpisodeSpec(hmap, start, goal, time_limit=cfg.time_limit, step_size=cfg.step_size,
                       threshold=cfg.threshold, probe_length=cfg.probe_length, clearance=cfg.clearance,
                       fss_workers=cfg.fss_workers, mode=cfg.mode, gains=Gains.uniform(cfg.kp, cfg.kd),
                       ik=_ik(cfg), goal_radius=cfg.goal_radius, pattern=_pattern(cfg), label=_label(cfg))


def _spec_kwargs(cfg: RunConfig) -> dict:
    return dict(time_limit=cfg.time_limit, step_size=cfg.step_size, threshold=cfg.threshold,
                probe_length=cfg.probe_length, clearance=cfg.clearance, fss_workers=cfg.fss_workers,
                mode=cfg.mode, gains=Gains.uniform(cfg.kp, cfg.kd), ik=_ik(cfg), goal_radius=cfg.goal_radius,
                pattern=_pattern(cfg))


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    if not os.access(d, os.W_OK):
        raise ConfigError(f"output directory {d} is not writable")
    return d


def _progress(msg: str):
    print(msg, file=sys.stderr, flush=True)


# ---------------------------------------------------------------------------
# subcommands

def cmd_terrain_gen(args) -> int:
    cfg = run_config(args)
    if cfg.task is None:
        raise ConfigError("terrain gen needs --task")
    hmap = generate_task_env(cfg.task, cfg.seed)
    out = Path(args.out) if args.out else Path(cfg.out) / f"{cfg.task}_{cfg.seed}.map"
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_heightmap(hmap, out)
    print(f"wrote {out} ({hmap.n_rows}x{hmap.n_cols} cells, resolution {hmap.resolution} m)")
    return 0


def cmd_terrain_validate(args) -> int:
    hmap = load_heightmap(args.file)
    x0, x1, y0, y1 = hmap.bounds
    dev = deviation_grid(hmap)
    print(f"ok: {hmap.n_rows}x{hmap.n_cols} cells, resolution {hmap.resolution} m, "
          f"extent [{x0:g},{x1:g}]x[{y0:g},{y1:g}] m, heights [{hmap.heights.min():g},{hmap.heights.max():g}] m, "
          f"max deviation {dev.max():g} m")
    return 0


def cmd_plan_global(args) -> int:
    cfg = run_config(args)
    hmap = _terrain(cfg)
    start, goal = _endpoints(cfg, hmap)
    plan = plan_global(hmap, start, goal, cfg.threshold, cfg.probe_length, cfg.clearance, cfg.fss_workers)
    out = Path(args.out) if args.out else Path(cfg.out) / "global_plan.json"
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan.to_json() + "\n", encoding="utf-8")
    blocked = int(np.count_nonzero(~plan.feasibility.cells))
    print(f"wrote {out}: {len(plan.grid_path.cells)} cells, grid cost {plan.grid_path.cost:.3f}, "
          f"spline length {plan.path.length:.3f} m, {blocked} infeasible cells")
    return 0


def _pose(hmap, model, xy, default_yaw):
    yaw = xy[2] if len(xy) > 2 else default_yaw
    return body_state_at(hmap, model, xy[0], xy[1], yaw)


def cmd_plan_local(args) -> int:
    cfg = run_config(args)
    hmap = _terrain(cfg)
    model = RobotModel()
    if args.start is None or args.goal is None:
        raise ConfigError("plan local needs --start x,y[,yaw] and --goal x,y[,yaw]")
    yaw = math.atan2(args.goal[1] - args.start[1], args.goal[0] - args.start[0])
    start = _pose(hmap, model, args.start, yaw)
    goal = _pose(hmap, model, args.goal, yaw)
    plan = plan_gait(start, goal, hmap, _pattern(cfg), model)
    out = Path(args.out) if args.out else Path(cfg.out) / "local_plan.csv"
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(plan_to_csv(plan), encoding="utf-8")
    verdict = check_feasibility(plan, model, hmap)
    problems = check_node_invariants(plan, hmap)
    print(f"wrote {out}: {len(plan.t)} nodes, {plan.duration:.2f} s")
    if not verdict or problems:
        reasons = list(verdict.reasons) + problems
        print(f"{PROG}: error: plan infeasible: {'; '.join(reasons)}", file=sys.stderr)
        return 1
    print("feasible")
    return 0


def cmd_simulate(args) -> int:
    cfg = run_config(args)
    hmap = _terrain(cfg)
    spec = episode_spec(cfg, hmap)
    out = _out_dir(cfg.out)
    log = run_episode(spec, SimConfig(seed=cfg.seed))
    csv_path, json_path = out / f"{args.name}.csv", out / f"{args.name}.json"
    log.save(csv_path, json_path)
    s = summarize(log, spec.label["task"], cfg.seed, hmap, spec.goal, spec.goal_radius)
    print(f"{s.outcome}: distance {s.distance:.3f} m, goal error {s.goal_error:.3f} m, "
          f"tracking error {s.tracking_error_rate:.4f} m/s over {s.duration:.2f} s -> {csv_path}")
    return 0


def cmd_bench(args) -> int:
    cfg = run_config(args)
    if cfg.task is None:
        raise ConfigError("bench needs --task")
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")
    out = _out_dir(cfg.out)
    t0 = time.perf_counter()
    res, logs = benchmark(cfg.task, args.runs, args.seed_base, jobs=args.jobs, keep_logs=True,
                          progress=lambda r: _progress(f"[{r.task} seed {r.seed}] {r.outcome}"),
                          **_spec_kwargs(cfg))
    csv_text, json_text = emit_report(res.rows)
    (out / f"bench_{cfg.task}.csv").write_text(csv_text, encoding="utf-8")
    (out / f"bench_{cfg.task}.json").write_text(json_text, encoding="utf-8")
    if args.save_logs:
        logdir = _out_dir(out / "logs")
        for row, log in zip(res.rows, logs):
            log.save(logdir / f"{row.task}_{row.seed}.csv", logdir / f"{row.task}_{row.seed}.json")
    print(format_table([res.aggregate]))
    _progress(f"{args.runs} runs in {time.perf_counter() - t0:.1f} s")
    return 0


def cmd_calibrate(args) -> int:
    kw = {} if args.offset_range is None else {"offset_range": args.offset_range}
    enc = random_encoders(args.seed, **kw)
    res = soft_calibrate(enc, args.amplitude)
    print(f"seed {args.seed}: {res.status}")
    if args.offsets:
        res = apply_index_offsets(res, parse_offsets(args.offsets))
        print(f"after offsets {','.join(map(str, res.applied_offsets))}: {res.status}")
    print("zeros: " + " ".join(f"{z:+.6f}" for z in res.zero))
    if not res.ok:
        print(f"{PROG}: error: index pulses misaligned on joints {list(res.misaligned)}; "
              f"retry with --offsets {','.join(map(str, suggested_offsets(res)))}", file=sys.stderr)
        return 1
    return 0


def cmd_report(args) -> int:
    logdir = Path(args.logs)
    if not logdir.is_dir():
        raise ConfigError(f"--logs {logdir} is not a directory")
    out = _out_dir(args.out or os.environ.get("QUADSTACK_OUT", "."))
    rows = []
    for json_path in sorted(logdir.glob("*.json")):
        csv_path = json_path.with_suffix(".csv")
        if not csv_path.exists():
            continue
        log = load_run_log(csv_path, json_path)
        meta = log.metadata
        task, seed = meta.get("task", "custom"), int(meta.get("seed", 0))
        hmap = load_heightmap(meta["map"]) if "map" in meta else generate_task_env(task, seed)
        rows.append(summarize(log, task, seed, hmap, tuple(meta["goal"]),
                              meta.get("goal_radius", DEFAULT_GOAL_RADIUS)))
    csv_text, json_text = emit_report(rows)
    (out / "report.csv").write_text(csv_text, encoding="utf-8")
    (out / "report.json").write_text(json_text, encoding="utf-8")
    if rows:
        print(format_table(aggregate(rows)))
    print(f"{len(rows)} runs -> {out / 'report.csv'}, {out / 'report.json'}")
    return 0


def cmd_console(args) -> int:
    """Sweep -> Hold -> Run against the simulated robot.

    ``go`` advances the state; ``quit`` leaves.  Run executes one episode and
    prints timing statistics for every simulated second.
    """
    cfg = run_config(args)
    if cfg.map is None and cfg.task is None:
        cfg = resolve(None, {**_flag_dict(args), "task": "walking"})
    hmap = _terrain(cfg)
    spec = episode_spec(cfg, hmap)
    state = InterfaceState()
    print(f"state {state.state.value}: sweeping to the index pulses")
    cal = soft_calibrate(random_encoders(cfg.seed, WINDOW * (1 - 1e-9)))
    state = state_machine_step(state, Event.SWEEP_DONE)
    print(f"sweep done: {cal.status}")

    def next_event():
        if args.auto:
            print("> go (auto)")
            return Event.AUTO_GO
        while True:
            try:
                line = input("> ").strip().lower()
            except EOFError:
                return None
            if line == "go":
                return Event.USER_GO
            if line in ("quit", "exit"):
                return None
            print("commands: go, quit")

    while state.state is not State.RUN:
        ev = next_event()
        if ev is None:
            print("bye")
            return 0
        try:
            state = state_machine_step(state, ev)
        except IllegalTransition as exc:
            print(exc)
            continue
        print(f"state {state.state.value}")

    monitor = TimingMonitor()
    per_second = int(round(1.0 / SimConfig().dt))
    last = [time.perf_counter()]

    def on_tick(k, t):
        now = time.perf_counter()
        monitor.record((now - last[0]) * 1e6)
        last[0] = now
        if (k + 1) % per_second == 0:
            print(f"t={t:5.1f}s {monitor.stats().line()}", flush=True)

    log = run_episode(spec, SimConfig(seed=cfg.seed), on_tick=on_tick)
    print(f"run finished: {log.outcome}, distance {log.distance:.3f} m; {monitor.stats().line()}")
    return 0


# ---------------------------------------------------------------------------

_ERRORS = (ConfigError, TerrainError, PlanningError, UnreachableError, CalibrationTimeout, ValueError, OSError)


def dispatch(argv) -> int:
    parser = build_parser()
    argv = list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        print(f"{PROG}: error: a command is required", file=sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func = getattr(args, "func", None)
    if func is None:
        print(f"{PROG}: error: '{' '.join(argv)}' needs an action; see '{PROG} {argv[0]} --help'", file=sys.stderr)
        return 2
    try:
        return func(args)
    except _ERRORS as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    return dispatch(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
