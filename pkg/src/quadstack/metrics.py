"""Run metrics, outcome judging, seeded benchmarks and CSV/JSON reports."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields

import numpy as np

from .simulator import OUTCOMES, EpisodeSpec, RunLog, SimConfig, run_episode
from .terrain import TASKS, HeightMap, TaskEnvConfig, generate_task_env

REPORT_SCHEMA_VERSION = 1
DEFAULT_GOAL_RADIUS = 0.15
BOUNDS_MARGIN = 0.1


def tracking_error_rate(refs, reals, f_track: float) -> float:
    """Mean per-sample Euclidean error between reference and realized positions, times ``f_track``.

    The stacked-vector alternative ``||X_ref - X_real||_2 / n * f`` is not
    used; it shrinks with run length instead of describing an average.
    """
    refs = np.asarray(refs, dtype=float)
    reals = np.asarray(reals, dtype=float)
    if refs.shape != reals.shape:
        raise ValueError(f"length mismatch: {refs.shape} vs {reals.shape}")
    if refs.ndim != 2 or len(refs) == 0:
        raise ValueError("tracking error needs at least one sample of 3-vectors")
    if not f_track > 0:
        raise ValueError("tracking frequency must be positive")
    # correctly rounded sum, so a constant per-sample error gives the exact rate
    errors = np.linalg.norm(refs - reals, axis=1)
    return math.fsum(errors.tolist()) / len(errors) * f_track


def log_tracking_error_rate(log: RunLog) -> float:
    return tracking_error_rate(log.ref_base[:, :3], log.act_base[:, :3], 1.0 / log.metadata.get("dt", 1e-3))


def tracking_error_series(log: RunLog, window: float) -> np.ndarray:
    """Tracking error rate over consecutive windows of ``window`` seconds (partial tail dropped)."""
    dt = log.metadata.get("dt", 1e-3)
    per = int(round(window / dt))
    if per < 1:
        raise ValueError("window shorter than one sample")
    err = np.linalg.norm(log.ref_base[:, :3] - log.act_base[:, :3], axis=1)
    n = len(err) // per
    return err[:n * per].reshape(n, per).mean(axis=1) / dt


def _final_xy(log: RunLog):
    final = log.metadata.get("final_position")
    if final is not None:
        return float(final[0]), float(final[1])
    if len(log.act_base) == 0:
        return None
    return float(log.act_base[-1, 0]), float(log.act_base[-1, 1])


def judge_outcome(log: RunLog, env: HeightMap, goal, goal_radius: float = DEFAULT_GOAL_RADIUS) -> str:
    """``fell`` > ``out_of_bounds`` > ``success`` > ``timeout``."""
    meta = log.metadata
    if meta.get("fallen") or log.outcome == "fell":
        return "fell"
    xy = _final_xy(log)
    if meta.get("out_of_bounds") or log.outcome == "out_of_bounds":
        return "out_of_bounds"
    if xy is None:
        return "timeout"
    if not env.contains(*xy, margin=BOUNDS_MARGIN):
        return "out_of_bounds"
    if math.dist(xy, goal) <= goal_radius:
        return "success"
    return "timeout"


@dataclass(frozen=True)
class RunSummary:
    task: str
    seed: int
    outcome: str
    distance: float
    tracking_error_rate: float
    duration: float
    goal_error: float = float("nan")

    def __post_init__(self):
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if not self.distance >= 0:
            raise ValueError("distance must be non-negative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")


def summarize(log: RunLog, task: str, seed: int, env: HeightMap, goal,
              goal_radius: float = DEFAULT_GOAL_RADIUS) -> RunSummary:
    return RunSummary(task, int(seed), judge_outcome(log, env, goal, goal_radius), float(log.distance),
                      log_tracking_error_rate(log), log.duration, float(math.dist(_final_xy(log), goal)))


@dataclass(frozen=True)
class Aggregate:
    task: str
    runs: int
    successes: int
    success_rate: float
    mean_distance: float
    mean_tracking_error_rate: float
    mean_goal_error: float


def aggregate(rows) -> list[Aggregate]:
    """One aggregate per task, in first-appearance order."""
    by_task: dict[str, list[RunSummary]] = {}
    for r in rows:
        by_task.setdefault(r.task, []).append(r)
    out = []
    for task, rs in by_task.items():
        n = len(rs)
        wins = sum(r.outcome == "success" for r in rs)
        out.append(Aggregate(task, n, wins, wins / n * 100.0,
                             sum(r.distance for r in rs) / n,
                             sum(r.tracking_error_rate for r in rs) / n,
                             sum(r.goal_error for r in rs) / n))
    return out


@dataclass
class BenchmarkResult:
    rows: list
    aggregate: Aggregate


def episode_for(task: str, seed: int, env_config: TaskEnvConfig | None = None, **spec_kw):
    """Map, episode spec and plant config of one seeded benchmark run."""
    cfg = env_config or TaskEnvConfig()
    hmap = generate_task_env(task, seed, cfg)
    label = {"task": task, "seed": int(seed)}
    spec = EpisodeSpec(hmap, cfg.start, cfg.goal, label=label, **spec_kw)
    return hmap, spec, SimConfig(seed=int(seed))


def _bench_one(args):
    task, seed, env_config, spec_kw = args
    hmap, spec, sim = episode_for(task, seed, env_config, **spec_kw)
    log = run_episode(spec, sim)
    return summarize(log, task, seed, hmap, spec.goal, spec.goal_radius), log


def benchmark(task: str, n_runs: int = 20, seed_base: int = 0, jobs: int = 1,
              env_config: TaskEnvConfig | None = None, keep_logs: bool = False, progress=None,
              **spec_kw):
    """Run ``n_runs`` seeded episodes (seeds ``seed_base .. seed_base + n_runs - 1``).

    Returns a :class:`BenchmarkResult`, plus the list of RunLogs when
    ``keep_logs`` is set.  ``jobs > 1`` runs episodes in worker processes;
    results do not depend on it.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if n_runs < 1:
        raise ValueError("n_runs must be at least 1")
    work = [(task, seed_base + i, env_config, spec_kw) for i in range(n_runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_bench_one, work))
    else:
        results = []
        for item in work:
            results.append(_bench_one(item))
            if progress is not None:
                progress(results[-1][0])
    rows = [r for r, _ in results]
    res = BenchmarkResult(rows, aggregate(rows)[0])
    if keep_logs:
        return res, [log for _, log in results]
    return res


# ---------------------------------------------------------------------------
# reports

CSV_COLUMNS = tuple(f.name for f in fields(RunSummary))


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in astuple_row(r)])
    return buf.getvalue()


def astuple_row(r: RunSummary):
    return tuple(getattr(r, c) for c in CSV_COLUMNS)


def rows_from_csv(text: str) -> list[RunSummary]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected report columns {reader.fieldnames}")
    out = []
    for rec in reader:
        out.append(RunSummary(rec["task"], int(rec["seed"]), rec["outcome"], float(rec["distance"]),
                              float(rec["tracking_error_rate"]), float(rec["duration"]),
                              float(rec["goal_error"])))
    return out


def emit_report(summaries) -> tuple[str, str]:
    """Per-run CSV table and a JSON array of per-task aggregates."""
    rows = list(summaries)
    aggs = [dict(asdict(a), schema_version=REPORT_SCHEMA_VERSION) for a in aggregate(rows)]
    return rows_to_csv(rows), json.dumps(aggs, indent=1) + "\n"


def format_table(aggregates) -> str:
    """Plain-text table: task, average distance, success rate, tracking error."""
    lines = [f"{'Task':<10} {'Distance':>9} {'Success':>8} {'Tracking error':>15}"]
    for a in aggregates:
        lines.append(f"{a.task.capitalize():<10} {a.mean_distance:>7.2f} m {a.success_rate:>7.0f}% "
                     f"{a.mean_tracking_error_rate:>11.4f} m/s")
    return "\n".join(lines)


__all__ = [
    "Aggregate", "BenchmarkResult", "CSV_COLUMNS", "DEFAULT_GOAL_RADIUS", "REPORT_SCHEMA_VERSION", "RunSummary",
    "aggregate", "benchmark", "emit_report", "episode_for", "format_table", "judge_outcome",
    "log_tracking_error_rate", "rows_from_csv", "rows_to_csv", "summarize", "tracking_error_rate",
    "tracking_error_series",
]
