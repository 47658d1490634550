import io
import json

from quadstack.cli import dispatch, main
from quadstack.metrics import rows_from_csv
from quadstack.simulator import load_run_log


def run(capsys, *argv):
    code = dispatch([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_no_arguments_prints_usage(capsys):
    code, _, err = run(capsys)
    assert code != 0 and "usage:" in err


def test_unknown_subcommand(capsys):
    code, _, err = run(capsys, "fly")
    assert code == 2 and "invalid choice" in err


def test_missing_action(capsys):
    code, _, err = run(capsys, "terrain")
    assert code == 2 and "needs an action" in err


def test_help_lists_every_command(capsys):
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    for cmd in ("terrain", "plan", "simulate", "bench", "calibrate", "report", "console"):
        assert cmd in out


def test_terrain_gen_validate_simulate(tmp_path, capsys):
    m = tmp_path / "m.map"
    assert run(capsys, "terrain", "gen", "--task", "walking", "--seed", 1, "--out", m)[0] == 0
    code, out, _ = run(capsys, "terrain", "validate", m)
    assert code == 0 and out.startswith("ok: 60x60 cells") and "extent [-0.025,2.975]x[-0.025,2.975]" in out
    code, out, _ = run(capsys, "simulate", "--map", m, "--time-limit", 2, "--out", tmp_path / "o", "--name", "r")
    assert code == 0 and "timeout" in out
    log = load_run_log(tmp_path / "o" / "r.csv", tmp_path / "o" / "r.json")
    assert len(log) == 2000 and log.metadata["task"] == "custom" and log.metadata["map"] == str(m)


def test_validate_rejects_bad_map(tmp_path, capsys):
    bad = tmp_path / "bad.map"
    bad.write_text("nonsense\n")
    code, _, err = run(capsys, "terrain", "validate", bad)
    assert code == 1 and err.startswith("quadstack: error:")


def test_conflicting_sources(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"map": "x.map", "task": "walking"}')
    code, _, err = run(capsys, "simulate", "--config", cfg)
    assert code == 1 and "conflicting" in err


def test_missing_terrain(capsys):
    code, _, err = run(capsys, "plan", "global")
    assert code == 1 and "--map" in err


def test_plan_global(tmp_path, capsys):
    out = tmp_path / "g.json"
    code, text, _ = run(capsys, "plan", "global", "--task", "avoidance", "--seed", 2, "--out", out)
    assert code == 0 and "spline length" in text
    doc = json.loads(out.read_text())
    assert doc


def test_plan_local(tmp_path, capsys):
    out = tmp_path / "l.csv"
    code, text, _ = run(capsys, "plan", "local", "--task", "walking", "--start", "0.5,1.5",
                        "--goal", "0.8,1.5", "--out", out)
    assert code == 0 and text.strip().endswith("feasible")
    assert out.read_text().startswith("t,")


def test_plan_local_infeasible(tmp_path, capsys):
    # straight through the first wall of avoidance seed 0
    code, _, err = run(capsys, "plan", "local", "--task", "avoidance", "--start", "1.0,0.5",
                       "--goal", "1.6,0.5", "--out", tmp_path / "l.csv")
    assert code == 1 and "infeasible" in err


def test_bench_and_report(tmp_path, capsys):
    code, out, err = run(capsys, "bench", "--task", "walking", "--runs", 2, "--seed-base", 4,
                         "--time-limit", 1.5, "--out", tmp_path, "--save-logs")
    assert code == 0 and out.startswith("Task") and "[walking seed 5]" in err
    rows = rows_from_csv((tmp_path / "bench_walking.csv").read_text())
    assert [r.seed for r in rows] == [4, 5]
    (agg,) = json.loads((tmp_path / "bench_walking.json").read_text())
    assert agg["runs"] == 2
    code, out, _ = run(capsys, "report", "--logs", tmp_path / "logs", "--out", tmp_path / "rep")
    assert code == 0 and "2 runs" in out
    again = rows_from_csv((tmp_path / "rep" / "report.csv").read_text())
    assert again == rows


def test_report_empty_dir(tmp_path, capsys):
    code, _, _ = run(capsys, "report", "--logs", tmp_path, "--out", tmp_path)
    assert code == 0
    assert json.loads((tmp_path / "report.json").read_text()) == []


def test_calibrate(capsys):
    code, out, _ = run(capsys, "calibrate", "--seed", 3)
    assert code == 0 and "seed 3: ok" in out


def test_calibrate_misaligned_then_fixed(capsys):
    code, _, err = run(capsys, "calibrate", "--seed", 1, "--offset-range", 1.0)
    assert code == 1 and "retry with --offsets" in err
    offsets = err.rsplit("--offsets ", 1)[1].strip()
    code, out, _ = run(capsys, "calibrate", "--seed", 1, "--offset-range", 1.0, "--offsets", offsets)
    assert code == 0 and out.splitlines()[1].endswith(": ok")


def test_calibrate_zero_amplitude(capsys):
    code, _, err = run(capsys, "calibrate", "--amplitude", 0)
    assert code == 1 and "joint 0" in err


def test_console_auto(capsys):
    code, out, _ = run(capsys, "console", "--auto", "--time-limit", 2)
    assert code == 0
    lines = out.splitlines()
    assert lines[0].startswith("state Sweep")
    assert "state Hold" in lines and "state Run" in lines
    assert sum(line.startswith("t=") for line in lines) == 2
    assert "missed=" in lines[-1]


def test_console_interactive(monkeypatch, capsys):
    monkeypatch.setattr("sys.stdin", io.StringIO("status\ngo\nquit\n"))
    code, out, _ = run(capsys, "console", "--time-limit", 1)
    assert code == 0
    assert "commands: go, quit" in out and "state Hold" in out and "state Run" not in out
    assert out.strip().endswith("bye")


def test_bench_jobs_match_serial(tmp_path, capsys):
    for jobs in ("1", "2"):
        code, _, _ = run(capsys, "bench", "--task", "climbing", "--runs", 2, "--time-limit", 1,
                         "--jobs", jobs, "--out", tmp_path / jobs)
        assert code == 0
    assert (tmp_path / "1" / "bench_climbing.csv").read_bytes() == (tmp_path / "2" / "bench_climbing.csv").read_bytes()
