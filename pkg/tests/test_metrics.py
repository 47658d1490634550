import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quadstack.metrics import (CSV_COLUMNS, REPORT_SCHEMA_VERSION, RunSummary, aggregate, benchmark, emit_report,
                               format_table, judge_outcome, rows_from_csv, rows_to_csv, summarize,
                               tracking_error_rate, tracking_error_series)
from quadstack.simulator import RunLog
from quadstack.terrain import flat_map

ENV = flat_map(3.0, 3.0, 0.05)
GOAL = (2.5, 1.5)


def fake_log(final_xy, outcome="timeout", n=10, **meta):
    act = np.zeros((n, 6))
    act[:, :2] = final_xy
    ref = act.copy()
    ref[:, 0] += 0.002
    meta.setdefault("dt", 1e-3)
    return RunLog(np.arange(n) * 1e-3, ref, act, None, None, np.ones((n, 4), dtype=bool), outcome, 1.0, meta)


def test_tracking_examples():
    z = np.zeros((5, 3))
    assert tracking_error_rate(z, z, 1000) == 0.0
    assert tracking_error_rate(z, z + [0.001, 0, 0], 1000) == pytest.approx(1.0)
    reals = np.array([[0.001, 0, 0], [0, 0.003, 0]])
    assert tracking_error_rate(np.zeros((2, 3)), reals, 1000) == pytest.approx(2.0)


def test_tracking_errors():
    with pytest.raises(ValueError):
        tracking_error_rate(np.zeros((2, 3)), np.zeros((3, 3)), 1000)
    with pytest.raises(ValueError):
        tracking_error_rate(np.zeros((0, 3)), np.zeros((0, 3)), 1000)
    with pytest.raises(ValueError):
        tracking_error_rate(np.zeros((1, 3)), np.zeros((1, 3)), 0.0)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 50), st.floats(1, 2000), st.floats(0.1, 10))
def test_tracking_linear_and_translation_invariant(seed, n, f, alpha):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    base = tracking_error_rate(a, b, f)
    assert tracking_error_rate(a, b, alpha * f) == pytest.approx(alpha * base, rel=1e-12)
    shift = rng.normal(size=3) * 10
    assert tracking_error_rate(a + shift, b + shift, f) == pytest.approx(base, rel=1e-9)
    # independent arithmetic
    assert base == pytest.approx(math.fsum(math.dist(p, q) for p, q in zip(a, b)) / n * f, rel=1e-12)


def test_tracking_series_constant():
    log = fake_log((1.0, 1.0), n=3000)
    assert tracking_error_series(log, 1.0) == pytest.approx([2.0, 2.0, 2.0])


def test_judge_precedence():
    assert judge_outcome(fake_log(GOAL, fallen=True), ENV, GOAL) == "fell"
    assert judge_outcome(fake_log(GOAL, "fell"), ENV, GOAL) == "fell"
    assert judge_outcome(fake_log(GOAL, fallen=True, out_of_bounds=True), ENV, GOAL) == "fell"
    assert judge_outcome(fake_log(GOAL, out_of_bounds=True), ENV, GOAL) == "out_of_bounds"
    assert judge_outcome(fake_log((3.04, 1.5)), ENV, (3.0, 1.5)) == "out_of_bounds"
    assert judge_outcome(fake_log(GOAL), ENV, GOAL) == "success"
    assert judge_outcome(fake_log((2.4, 1.5)), ENV, GOAL, 0.15) == "success"
    assert judge_outcome(fake_log((1.0, 1.5)), ENV, GOAL) == "timeout"
    # metadata final position wins over the last logged sample
    assert judge_outcome(fake_log((1.0, 1.5), final_position=[*GOAL, 0.3]), ENV, GOAL) == "success"


def test_summary_validation():
    with pytest.raises(ValueError):
        RunSummary("walking", 0, "crashed", 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        RunSummary("walking", 0, "success", -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        RunSummary("walking", 0, "success", 1.0, 1.0, 0.0)


def test_summarize_fake_log():
    row = summarize(fake_log(GOAL), "walking", 4, ENV, GOAL)
    assert row.outcome == "success" and row.tracking_error_rate == pytest.approx(2.0)
    assert row.duration == pytest.approx(0.01) and row.goal_error == 0.0


def rows_strategy():
    row = st.builds(RunSummary, st.sampled_from(["walking", "avoidance", "climbing"]), st.integers(0, 99),
                    st.sampled_from(["success", "fell", "out_of_bounds", "timeout"]), st.floats(0, 5),
                    st.floats(0, 100), st.floats(0.001, 60), st.floats(0, 3))
    return st.lists(row, max_size=25)


@settings(max_examples=60, deadline=None)
@given(rows_strategy())
def test_report_round_trip_and_recompute(rows):
    text, doc = emit_report(rows)
    assert rows_from_csv(text) == rows
    aggs = json.loads(doc)
    tasks = list(dict.fromkeys(r.task for r in rows))
    assert [a["task"] for a in aggs] == tasks
    for a in aggs:
        mine = [r for r in rows_from_csv(text) if r.task == a["task"]]
        wins = sum(r.outcome == "success" for r in mine)
        assert a["schema_version"] == REPORT_SCHEMA_VERSION
        assert a["runs"] == len(mine) and a["successes"] == wins
        assert a["success_rate"] == wins / len(mine) * 100.0
        assert a["mean_distance"] == pytest.approx(math.fsum(r.distance for r in mine) / len(mine), rel=1e-12)
        assert a["mean_tracking_error_rate"] == pytest.approx(
            math.fsum(r.tracking_error_rate for r in mine) / len(mine), rel=1e-12)


def test_empty_report():
    text, doc = emit_report([])
    assert text == ",".join(CSV_COLUMNS) + "\n"
    assert json.loads(doc) == []


def test_bad_csv_columns():
    with pytest.raises(ValueError):
        rows_from_csv("task,seed\nwalking,1\n")


def test_single_run_benchmark_matches_its_row():
    res = benchmark("walking", 1, 5, time_limit=20.0)
    (row,) = res.rows
    agg = res.aggregate
    assert agg.runs == 1 and agg.mean_distance == row.distance
    assert agg.mean_tracking_error_rate == row.tracking_error_rate
    assert agg.success_rate == (100.0 if row.outcome == "success" else 0.0)
    assert aggregate(rows_from_csv(rows_to_csv(res.rows)))[0] == agg


def test_format_table_shape():
    rows = [RunSummary("walking", 0, "success", 2.0, 1.5, 10.0), RunSummary("climbing", 0, "fell", 1.0, 2.5, 4.0)]
    lines = format_table(aggregate(rows)).splitlines()
    assert lines[0].split()[:2] == ["Task", "Distance"]
    assert lines[1].startswith("Walking") and "100%" in lines[1]
    assert lines[2].startswith("Climbing") and " 0%" in lines[2]
