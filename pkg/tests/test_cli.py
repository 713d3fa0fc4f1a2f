from __future__ import annotations

import json
import subprocess
import sys

import pytest

from sharecascade.cli import main
from sharecascade.experiments import COLUMNS, read_records


@pytest.fixture
def k3(tmp_path):
    p = tmp_path / "k3.edges"
    p.write_text("0 1\n1 2\n0 2\n")
    return p


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_sweep_with_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rows": 3, "cols": 3, "gamma": 2.0, "alpha": [2, 6], "beta": [1], "replicas": 50}))
    out = tmp_path / "results.csv"
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    text = out.read_text()
    assert text.splitlines()[0] == ",".join(COLUMNS)
    assert len(read_records(text)) == 2
    assert main(["sweep", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.read_text() == text
    # flags override config fields
    assert main(["sweep", "--config", str(cfg), "--alpha", "4", "--format", "json"]) == 0
    recs = json.loads(capsys.readouterr().out)
    assert [r["alpha"] for r in recs] == [4.0]


def test_coverage_check_grid(capsys):
    assert main(["coverage-check", "--topology", "grid", "--rows", "2", "--cols", "2", "--gamma", "2"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 4 and all(ln.startswith(f"node {i}: pass") for i, ln in enumerate(lines))


def test_coverage_check_too_large(capsys):
    assert main(["coverage-check", "--rows", "4", "--cols", "4"]) == 2
    assert _err(capsys)["error"] == "usage"


def test_gadget_trace(k3, tmp_path):
    out = tmp_path / "trace.json"
    args = ["gadget", "--graph", str(k3), "--r", "2", "--seed-nodes", "0,1", "--out", str(out)]
    assert main(args) == 0
    first = out.read_text()
    trace = json.loads(first)
    assert trace["final_count"] == 14 and trace["node_layer_vertex_cover"]
    assert trace["rounds"][0] == [3, 4, 5]
    assert main(args) == 0 and out.read_text() == first


def test_gadget_bad_inputs(k3, tmp_path, capsys):
    assert main(["gadget", "--graph", str(tmp_path / "none"), "--r", "2"]) == 2
    assert main(["gadget", "--graph", str(k3), "--r", "2", "--seed-nodes", "99"]) == 2
    assert _err(capsys)["error"] == "usage"


def test_inspect(capsys):
    assert main(["inspect", "--rows", "2", "--cols", "3", "--gamma", "2"]) == 0
    out = capsys.readouterr().out
    assert "n 6" in out and "average_degree 2.3333333333333335" in out and "C_u min 6.0" in out


def test_simulate_json(capsys):
    assert main(["simulate", "--rows", "3", "--cols", "3", "--alpha", "8", "--seed", "4"]) == 0
    first = capsys.readouterr().out
    res = json.loads(first)
    assert res["n"] == 9 and res["seed"] == 4 and res["rounds"] >= 1
    assert set(res["welfare"]) == {"active", "serviced", "sum", "max"}
    assert main(["simulate", "--rows", "3", "--cols", "3", "--alpha", "8", "--seed", "4"]) == 0
    assert capsys.readouterr().out == first


def test_default_seed_is_zero(capsys):
    main(["simulate", "--rows", "2", "--cols", "2", "--alpha", "5"])
    a = capsys.readouterr().out
    main(["simulate", "--rows", "2", "--cols", "2", "--alpha", "5", "--seed", "0"])
    assert capsys.readouterr().out == a


def test_compare_models(capsys):
    assert main(["compare-models", "--rows", "3", "--cols", "3", "--alpha", "2,8", "--replicas", "40",
                 "--format", "json"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert len(body["records"]) == 6 and len(body["gaps"]) == 2
    assert main(["compare-models", "--rows", "3", "--cols", "3", "--alpha", "2", "--replicas", "40"]) == 0
    cap = capsys.readouterr()
    assert len(read_records(cap.out)) == 3 and "demand_minus_nonetwork" in cap.err


def test_threshold_study(capsys):
    assert main(["threshold-study", "--rows", "2", "--cols", "2", "--gammas", "0.5,3", "--replicas", "20",
                 "--format", "json"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert [b["average_degree"] for b in body] == [0.0, 3.0]


def test_greedy(capsys):
    assert main(["greedy", "--rows", "2", "--cols", "3", "--gamma", "5", "--k", "2", "--replicas", "200"]) == 0
    body = json.loads(capsys.readouterr().out)
    assert len(body["seeds"]) == 2 and body["mean"] >= 2


def test_latency_file(tmp_path, capsys):
    p = tmp_path / "lat.txt"
    p.write_text("3\n0 1 2\n1 0 1\n2 1 0\n")
    assert main(["inspect", "--latency", str(p), "--gamma", "1.5"]) == 0
    assert "average_degree 1.3333333333333333" in capsys.readouterr().out
    p.write_text("2\n0 1\n1 3\n")
    assert main(["inspect", "--latency", str(p)]) == 2
    assert "row 1, column 1" in _err(capsys)["message"]


@pytest.mark.parametrize("argv", [
    ["sweep", "--bogus"],
    [],
    ["sweep", "--config", "/nonexistent/cfg.json"],
    ["sweep", "--topology", "file", "--latency", "/nonexistent/lat.txt"],
    ["sweep", "--alpha", "one,two"],
    ["sweep", "--model", "gossip"],
    ["sweep", "--replicas", "0"],
])
def test_usage_errors(argv, capsys):
    assert main(argv) == 2
    assert _err(capsys)["error"] == "usage"


def test_malformed_config(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["sweep", "--config", str(p)]) == 2
    p.write_text('{"colour": "blue"}')
    assert main(["sweep", "--config", str(p)]) == 2


def test_runtime_error(capsys):
    assert main(["sweep", "--gamma", "-1"]) == 1
    assert _err(capsys)["error"] == "runtime"


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sharecascade", "inspect", "--rows", "2", "--cols", "2"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.startswith("n 4")
