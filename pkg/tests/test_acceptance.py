"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The episode-level criteria run the full stack and take several minutes on
one core (roughly 15 minutes for the whole file).
"""

import json
import math
import time

import numpy as np
from scipy.sparse import lil_matrix
from scipy.sparse.csgraph import dijkstra

from quadstack.cli import dispatch
from quadstack.global_planner import FeasibilityMap, astar
from quadstack.kinematics import RobotModel, forward_kinematics_leg, ik_dls, leg_jacobian, nominal_joint_angles
from quadstack.metrics import (aggregate, benchmark, rows_from_csv, rows_to_csv, tracking_error_rate,
                               tracking_error_series)
from quadstack.robot_interface import (RESOLUTION, SPACING, EncoderModel, TimingMonitor, apply_index_offsets,
                                       random_encoders, soft_calibrate, suggested_offsets)
from quadstack.simulator import EpisodeSpec, SimConfig, run_episode
from quadstack.terrain import TaskEnvConfig, flat_map, generate_task_env

MODEL = RobotModel()


# --- 1 -----------------------------------------------------------------------

def dijkstra_cost(free, start, goal):
    n_rows, n_cols = free.shape
    graph = lil_matrix((free.size, free.size))
    for r in range(n_rows):
        for c in range(n_cols):
            if not free[r, c]:
                continue
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    rr, cc = r + dr, c + dc
                    if (dr, dc) == (0, 0) or not (0 <= rr < n_rows and 0 <= cc < n_cols) or not free[rr, cc]:
                        continue
                    if dr and dc and not (free[r + dr, c] and free[r, c + dc]):
                        continue
                    graph[r * n_cols + c, rr * n_cols + cc] = math.sqrt(2) if dr and dc else 1.0
    dist = dijkstra(graph.tocsr(), indices=start[0] * n_cols + start[1])
    return dist[goal[0] * n_cols + goal[1]]


def test_criterion_1_astar_matches_dijkstra(criterion):
    worst = 0.0
    mismatched = 0
    elapsed = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        free = rng.random((20, 20)) >= 0.3
        cells = np.argwhere(free)
        a, b = rng.choice(len(cells), 2, replace=False)
        s, g = tuple(int(v) for v in cells[a]), tuple(int(v) for v in cells[b])
        fmap = FeasibilityMap(free)
        t0 = time.perf_counter()
        path = astar(fmap, s, g)
        elapsed += time.perf_counter() - t0
        expected = dijkstra_cost(free, s, g)
        if math.isinf(expected):
            mismatched += path is not None
        elif path is None:
            mismatched += 1
        else:
            worst = max(worst, abs(path.cost - expected))
    ok = mismatched == 0 and worst <= 1e-9 and elapsed < 5.0
    assert criterion(1, "A* cost equals Dijkstra oracle on 100 maps", ok,
                     f"max |diff| {worst:.2e}, mismatches {mismatched}, astar time {elapsed:.3f} s")


# --- 2 -----------------------------------------------------------------------

def test_criterion_2_ik_round_trip_and_jacobian(criterion):
    rng = np.random.default_rng(2)
    q_nom = nominal_joint_angles(MODEL)
    rates = []
    for leg in range(4):
        lo = np.array(MODEL.q_min[3 * leg:3 * leg + 3])
        hi = np.array(MODEL.q_max[3 * leg:3 * leg + 3])
        hits = 0
        for _ in range(1000):
            x = forward_kinematics_leg(MODEL, leg, rng.uniform(lo, hi))
            res = ik_dls(MODEL, leg, x, q_nom[3 * leg:3 * leg + 3])
            hits += bool(np.linalg.norm(forward_kinematics_leg(MODEL, leg, res.q) - x) < 1e-4)
        rates.append(hits / 1000)
    jac_err = 0.0
    h = 1e-6
    for _ in range(100):
        leg = int(rng.integers(4))
        q = rng.uniform(MODEL.q_min[3 * leg:3 * leg + 3], MODEL.q_max[3 * leg:3 * leg + 3])
        fd = np.empty((3, 3))
        for j in range(3):
            dq = np.zeros(3)
            dq[j] = h
            hi_x = forward_kinematics_leg(MODEL, leg, q + dq)
            fd[:, j] = (hi_x - forward_kinematics_leg(MODEL, leg, q - dq)) / (2 * h)
        jac_err = max(jac_err, float(np.abs(leg_jacobian(MODEL, leg, q) - fd).max()))
    ok = min(rates) >= 0.99 and jac_err <= 1e-6
    assert criterion(2, "IK round-trip >= 99% per leg, Jacobian within 1e-6", ok,
                     f"success per leg {rates}, max Jacobian diff {jac_err:.1e}")


# --- 3 -----------------------------------------------------------------------

def test_criterion_3_walking_benchmark(tmp_path, criterion):
    t0 = time.perf_counter()
    code = dispatch(["bench", "--task", "walking", "--runs", "20", "--seed-base", "0", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    rows = rows_from_csv((tmp_path / "bench_walking.csv").read_text())
    (agg,) = json.loads((tmp_path / "bench_walking.json").read_text())
    rate = sum(r.outcome == "success" for r in rows) / len(rows) * 100.0
    mean_err = sum(r.goal_error for r in rows) / len(rows)
    ok = code == 0 and len(rows) == 20 and rate >= 90.0 and mean_err <= 0.15 and elapsed < 300.0
    ok = ok and agg["success_rate"] == rate
    assert criterion(3, "walking: >= 90% success, mean goal error <= 0.15 m, < 5 min", ok,
                     f"success {rate:.0f}%, mean goal error {mean_err:.4f} m, {elapsed:.0f} s")


# --- 4 -----------------------------------------------------------------------

def clean_segments(log):
    return all(seg["feasible"] and seg["invariant_violations"] == 0 for seg in log.metadata["segments"])


def test_criterion_4_avoidance_and_climbing(criterion):
    details = []
    ok = True
    for task, floor in (("avoidance", 70.0), ("climbing", 80.0)):
        res, logs = benchmark(task, 20, 0, keep_logs=True)
        dirty = sum(not clean_segments(log) for log in logs)
        details.append(f"{task} {res.aggregate.success_rate:.0f}% (floor {floor:.0f}%), "
                       f"runs with a bad segment {dirty}")
        ok = ok and res.aggregate.success_rate >= floor and dirty == 0
    assert criterion(4, "avoidance >= 70%, climbing >= 80%, every executed plan feasible", ok, "; ".join(details))


# --- 5 -----------------------------------------------------------------------

def test_criterion_5_ten_minute_stitched_run(criterion):
    hmap = flat_map(100.0, 4.0, 0.1)
    spec = EpisodeSpec(hmap, (0.5, 2.0), (99.5, 2.0), time_limit=600.0, record_joints=False)
    log = run_episode(spec)
    seams = log.metadata["seams"]
    exact = all(s["discrepancy"] == 0.0 for s in seams)
    full = all(s["full_contact"] for s in seams)
    # independent of the recorded seam data: the logged reference never jumps
    jump = float(np.linalg.norm(np.diff(log.ref_base[:, :3], axis=0), axis=1).max())
    series = tracking_error_series(log, 60.0)
    ok = (log.outcome == "timeout" and len(log) == 600000 and len(seams) > 100 and exact and full
          and jump < 1e-3 and len(series) == 10 and series[-1] <= 2.0 * series[0])
    assert criterion(5, "10-minute stitched run: exact full-contact seams, no tracking blow-up", ok,
                     f"{len(seams)} seams, max seam gap {max(s['discrepancy'] for s in seams):.1e}, "
                     f"max reference step {jump:.1e} m, first/last minute {series[0]:.4f}/{series[-1]:.4f} m/s, "
                     f"travelled {log.distance:.1f} m")


# --- 6 -----------------------------------------------------------------------

def test_criterion_6_calibration(criterion):
    found = 0
    for seed in range(1000):
        enc = random_encoders(seed)
        res = soft_calibrate(enc)
        found += res.ok and bool(np.all(np.abs(res.zero - enc.true_zero) < RESOLUTION))
    multiples = corrected = total = 0
    for seed in range(200):
        enc = random_encoders(10_000 + seed, offset_range=2.5)
        res = soft_calibrate(enc, max_time=4.0)
        err = (res.zero - enc.true_zero) / SPACING
        multiples += bool(np.all(np.abs(err - np.rint(err)) * SPACING < RESOLUTION))
        fixed = apply_index_offsets(res, suggested_offsets(res))
        corrected += fixed.ok and bool(np.all(np.abs(fixed.zero - enc.true_zero) < RESOLUTION))
        total += 1
    # the single-joint fixture: +0.5 rad is one spacing off and one offset fixes it
    power = np.full(12, 0.05)
    power[7] = 0.5
    res = soft_calibrate(EncoderModel(np.zeros(12), power))
    single = res.misaligned == (7,) and apply_index_offsets(res, [0] * 7 + [-1] + [0] * 4).ok
    ok = found == 1000 and multiples == total and corrected == total and single
    assert criterion(6, "calibration exact inside the window, whole-spacing errors outside", ok,
                     f"in-window {found}/1000, whole multiples {multiples}/{total}, corrected {corrected}/{total}")


# --- 7 -----------------------------------------------------------------------

def test_criterion_7_cadence(criterion):
    cfg = TaskEnvConfig()
    spec = EpisodeSpec(generate_task_env("walking", 0), cfg.start, cfg.goal, time_limit=10.0)
    log = run_episode(spec, SimConfig(seed=0))
    md = log.metadata
    mon = TimingMonitor()
    mon.record(1500.0)
    counts = (md["controller_ticks"], md["plant_steps"], md["global_decisions"], mon.stats().missed_deadlines)
    ok = log.outcome == "timeout" and counts == (10000, 10000, 5, 1)
    assert criterion(7, "10 s episode: 10000 ticks, 10000 steps, 5 decisions; 1.5 ms frame is one miss", ok,
                     f"ticks/steps/decisions/missed = {counts}")


# --- 8 -----------------------------------------------------------------------

def test_criterion_8_determinism(tmp_path, criterion):
    sims = []
    for i, workers in enumerate(("1", "1", "4")):
        out = tmp_path / f"sim{i}"
        dispatch(["simulate", "--task", "avoidance", "--seed", "2", "--time-limit", "6",
                  "--fss-workers", workers, "--out", str(out)])
        sims.append((out / "run.csv").read_bytes())
    benches = []
    for i, workers in enumerate(("1", "1", "3")):
        out = tmp_path / f"bench{i}"
        dispatch(["bench", "--task", "climbing", "--runs", "2", "--seed-base", "7", "--time-limit", "4",
                  "--fss-workers", workers, "--out", str(out), "--save-logs"])
        logs = sorted((out / "logs").glob("*.csv"))
        benches.append([(out / "bench_climbing.csv").read_bytes()] + [p.read_bytes() for p in logs])
    ok = len(sims[0]) > 0 and sims[0] == sims[1] == sims[2] and len(benches[0]) == 3 \
        and benches[0] == benches[1] == benches[2]
    assert criterion(8, "simulate and bench byte-identical across repeats and FSS worker counts", ok,
                     f"simulate CSV {len(sims[0])} bytes, bench files {len(benches[0])}")


# --- 9 -----------------------------------------------------------------------

def test_criterion_9_metric_formulas(criterion):
    z = np.zeros((100, 3))
    zero = tracking_error_rate(z, z, 1000.0)
    const = tracking_error_rate(z, z + np.array([0.001, 0.0, 0.0]), 1000.0)
    res = benchmark("walking", 3, 11, time_limit=3.0)
    again = aggregate(rows_from_csv(rows_to_csv(res.rows)))[0]
    wins = sum(r.outcome == "success" for r in res.rows)
    ok = zero == 0.0 and const == 1.0 and again == res.aggregate and res.aggregate.success_rate == wins / 3 * 100.0
    assert criterion(9, "tracking-error fixtures exact, success % recomputable from CSV", ok,
                     f"0 -> {zero}, 0.001 m at 1 kHz -> {const}, success {res.aggregate.success_rate:.1f}%")
