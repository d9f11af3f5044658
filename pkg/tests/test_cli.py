import csv
import io
import json

import pytest
from click.testing import CliRunner

from beepsp.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def files(tmp_path):
    (tmp_path / "p3.txt").write_text("3 2\n0 1\n1 2\n")
    (tmp_path / "dest.txt").write_text("2 1\n")
    (tmp_path / "bad.txt").write_text("3 2\n0 1\n")
    (tmp_path / "h.txt").write_text("3 3\n1 0\n1 1\n1 2\n")
    return tmp_path


def invoke(runner, *args):
    return runner.invoke(main, [str(a) for a in args], catch_exceptions=False)


SUMMARY_KEYS = {"instance", "seed", "task", "policy", "success", "failure_reason", "rounds", "palette", "verdicts"}


def test_run_three_path(runner, files):
    res = invoke(runner, "run", "--graph", files / "p3.txt", "--dest", files / "dest.txt", "--task", "single")
    assert res.exit_code == 0, res.output
    out = json.loads(res.output)
    assert SUMMARY_KEYS <= set(out)
    assert set(out["rounds"]) == {"wakeup", "preprocessing", "construction", "total"}
    assert set(out["palette"]) == {"k", "W", "max_epoch_used"}
    assert out["success"] is True and out["z"] == [1, 1, 1]


def test_run_empty_target(runner, files):
    res = invoke(runner, "run", "--graph", files / "p3.txt", "--dest", files / "dest.txt", "--policy", "fixed:1")
    out = json.loads(res.output)
    assert res.exit_code == 0 and out["success"] is True
    assert out["z"] == [0, 0, 0] and out["rounds"]["construction"] == 0


def test_run_errors_nonzero(runner, files):
    assert invoke(runner, "run", "--graph", files / "bad.txt", "--dest", files / "dest.txt").exit_code != 0
    assert invoke(runner, "run", "--graph", files / "nope.txt", "--dest", files / "dest.txt").exit_code != 0
    assert invoke(runner, "run", "--graph", files / "p3.txt").exit_code != 0
    assert invoke(runner, "run", "--graph", files / "p3.txt", "--dest", files / "dest.txt", "--policy", "x").exit_code != 0
    (files / "srcdest.txt").write_text("0 1\n")
    assert invoke(runner, "run", "--graph", files / "p3.txt", "--dest", files / "srcdest.txt").exit_code != 0


def test_gen_then_run_then_verify(runner, files):
    g = files / "p4.txt"
    assert invoke(runner, "gen", "graph", "path:n=4", "-o", g).exit_code == 0
    assert g.read_text() == "4 3\n0 1\n1 2\n2 3\n"
    sched = files / "s.txt"
    assert invoke(runner, "gen", "schedule", "--graph", g, "--count", "2", "--max-wake", "5", "-o", sched).exit_code == 0
    trace = files / "t.jsonl"
    res = invoke(runner, "run", "--graph", g, "--dest", sched, "--trace", trace)
    assert res.exit_code == 0 and json.loads(res.output)["success"] is True
    res = invoke(runner, "verify", "--trace", trace, "--graph", g, "--dest", sched)
    assert res.exit_code == 0
    assert json.loads(res.output)["ok"] is True

    lines = trace.read_text().splitlines()
    recs = [json.loads(x) for x in lines]
    i = next(i for i, r in enumerate(recs) if r["action"] == "B")
    recs[i]["obs"] = "beep"
    trace.write_text("\n".join(json.dumps(r) for r in recs) + "\n")
    res = invoke(runner, "verify", "--trace", trace, "--graph", g, "--dest", sched)
    report = json.loads(res.output)
    assert res.exit_code == 0 and not report["ok"]
    assert report["violations"][0].startswith("(i)")


def test_sweep_csv(runner):
    res = invoke(runner, "sweep", "--gen", "path:n=4", "--gen", "cycle:n=5", "--seeds", "0:2", "--task", "tree")
    assert res.exit_code == 0
    body = res.output.split("success rate")[0]
    rows = list(csv.DictReader(io.StringIO(body)))
    assert [(r["instance"], r["seed"]) for r in rows] == [
        ("gen:path:n=4", "0"), ("gen:path:n=4", "1"), ("gen:cycle:n=5", "0"), ("gen:cycle:n=5", "1")
    ]
    assert all(r["success"] == "True" for r in rows)
    assert "success rate: 4/4" in res.output


def test_sweep_empty_range(runner):
    res = invoke(runner, "sweep", "--gen", "path:n=4", "--seeds", "3:3")
    assert res.exit_code == 0
    assert res.output.splitlines()[0].startswith("instance,seed")
    assert "0/0" in res.output


def test_sweep_bad_spec(runner):
    assert invoke(runner, "sweep", "--gen", "nope:n=4").exit_code != 0


def test_hbd_singletons(runner, files):
    res = invoke(runner, "hbd", files / "h.txt")
    out = json.loads(res.output)
    assert res.exit_code == 0 and out["feasible"]
    T = out["params"]["iterations"]
    assert all(1 <= c <= T for c in out["solution"]["edge_color"])
    assert out["stats"]["max_epoch_used"] == 0


def test_hbd_random_and_bad_flags(runner, files):
    h = files / "r.txt"
    assert invoke(runner, "gen", "hypergraph", "--vertices", 30, "--edges", 80, "--max-rank", 5, "-o", h).exit_code == 0
    out = json.loads(invoke(runner, "hbd", h, "--seed", 3).output)
    assert out["feasible"] and out["violations"] == []
    assert invoke(runner, "hbd", h, "--c1", "0").exit_code != 0
    (files / "hb.txt").write_text("2 1\n3 0 1\n")
    assert invoke(runner, "hbd", files / "hb.txt").exit_code != 0
