import csv
import io
import json

import pytest

from senseflow.cli import main, parse_duration
from senseflow.sim import save_scenario
from senseflow.sim.scenarios import classroom_scenario


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


@pytest.mark.parametrize("text, seconds", [("90", 90.0), ("10m", 600.0), ("2min", 120.0), ("1.5h", 5400.0), ("30s", 30.0)])
def test_parse_duration(text, seconds):
    assert parse_duration(text) == seconds


@pytest.mark.parametrize("text", ["", "10x", "-5m", "m"])
def test_parse_duration_rejects(text):
    with pytest.raises(ValueError):
        parse_duration(text)


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "room.json"
    save_scenario(classroom_scenario(rooms=2, sessions=1, duration=3600.0), path)
    return path


def test_manual_chain(tmp_path, scenario_file, capsys):
    sim = tmp_path / "sim"
    assert main(["simulate", str(scenario_file), "--out", str(sim)]) == 0
    config = tmp_path / "cfg.json"
    config.write_text(json.dumps({"t_dataset": 600, "t_interval": 300}))
    spool = tmp_path / "spool"
    for gn in (1, 2, 3, 4):
        assert main(["agent", "--config", str(config), "--gn", str(gn), "--input", str(sim / "capture.csv"),
                     "--out", str(spool), "--start", "0", "--until", "3600"]) == 0
    store = tmp_path / "store"
    assert main(["serve", "--store", str(store), "--spool", str(spool), "--once"]) == 0
    assert "24 new packets" in capsys.readouterr().out

    assert main(["analyze", "density", "--store", str(store), "--t-win", "10m"]) == 0
    density = rows(capsys.readouterr().out)
    assert {r["gn"] for r in density} == {"1", "2", "3", "4"}

    truth = json.loads((sim / "ground_truth.json").read_text())
    for room, gns in (("room1", ("1", "2")), ("room2", ("3", "4"))):
        got = [sum(int(r["count"]) for r in density if r["gn"] in gns and float(r["window_start"]) == 600.0 * k)
               for k in range(6)]
        assert got == truth["headcount"][room]

    out = tmp_path / "dwell.json"
    assert main(["analyze", "dwell", "--store", str(store), "--out", "json", "-o", str(out)]) == 0
    assert set(json.loads(out.read_text())) == {"durations", "histogram"}

    assert main(["analyze", "trajectories", "--store", str(store), "--t-win", "600",
                 "--locations", str(sim / "ground_truth.json")]) == 0
    traj = rows(capsys.readouterr().out)
    assert all(r["steps"] in ("1", "2") for r in traj)

    targets = tmp_path / "targets.json"
    targets.write_text("[[1], [2]]")
    assert main(["analyze", "flow", "--store", str(store), "--t-win", "600", "--targets", str(targets),
                 "--locations", str(sim / "ground_truth.json"), "--out", "json"]) == 0
    flow = json.loads(capsys.readouterr().out)
    assert sum(t["matches"] for t in flow["targets"]) == flow["population"] == len(traj)


def test_analyze_needs_t_win(tmp_path, capsys):
    assert main(["analyze", "density", "--store", str(tmp_path / "none")]) == 1
    assert "--t-win" in capsys.readouterr().err


def test_pipeline_command(tmp_path, scenario_file, capsys):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"scenario": "room.json", "out": "run", "analysis": {"t_win": 600}}))
    assert main(["pipeline", str(manifest)]) == 0
    out = capsys.readouterr().out
    assert "windows exact" in out
    assert (tmp_path / "run" / "metrics.json").exists()


def test_pipeline_bad_manifest_field(tmp_path, capsys):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"scenario": "lab", "collection": {"t_interval": "5 minutes"}}))
    assert main(["pipeline", str(manifest)]) == 2
    assert "collection.t_interval" in capsys.readouterr().err


def test_pipeline_missing_capture(tmp_path, capsys):
    manifest = tmp_path / "m.json"
    manifest.write_text(json.dumps({"capture": "absent.csv", "out": "run"}))
    assert main(["pipeline", str(manifest)]) == 1
    assert "stage 'agent' failed" in capsys.readouterr().err


def test_simulate_bad_scenario(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"duration": 10, "gateways": [{"id": "x", "position": [0, 0]}], "phones": []}))
    assert main(["simulate", str(path), "--out", str(tmp_path)]) == 2
    assert "gateways[0].id" in capsys.readouterr().err


def test_agent_bad_capture(tmp_path, capsys):
    cap = tmp_path / "c.csv"
    cap.write_text("ts,mac,rssi,gn\nsoon,aa:bb:cc:dd:ee:ff,-50,1\n")
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"collection": {"t_dataset": 600, "t_interval": 60}}')
    assert main(["agent", "--config", str(cfg), "--gn", "1", "--input", str(cap), "--out", str(tmp_path / "s")]) == 1
    assert "line 2" in capsys.readouterr().err


def test_sweep_traffic(tmp_path, scenario_file, capsys):
    assert main(["sweep-traffic", str(scenario_file), "--t-dataset", "10m", "--t-interval", "5m"]) == 0
    (row,) = rows(capsys.readouterr().out)
    assert (float(row["t_dataset"]), float(row["t_interval"])) == (600.0, 300.0)
    assert main(["sweep-traffic", str(scenario_file), "--t-dataset", "10m,30m", "--t-interval", "5m,10m"]) == 0
    assert len(rows(capsys.readouterr().out)) == 4


def test_sweep_detection(tmp_path, capsys):
    out = tmp_path / "det.csv"
    assert main(["sweep-detection", "--modes", "NRWifiScrOn", "--speeds", "1.25,4.5", "--gn-counts", "1,4",
                 "--replications", "1", "-o", str(out)]) == 0
    assert "one replication" in capsys.readouterr().err
    table = rows(out.read_text())
    assert len(table) == 4 and all(r["stderr"] == "" for r in table)
    assert all(r["rate_android"] == "1.0" for r in table)


def test_sweep_flow(tmp_path, capsys):
    summary = tmp_path / "s.json"
    assert main(["sweep-flow", "--phones", "Android:NRWifiScrOn,Windows:NRWifiScrOff", "--replications", "1",
                 "--summary", str(summary)]) == 0
    table = rows(capsys.readouterr().out)
    assert len(table) == 4
    deltas = {(d["os"], d["mode"]): d["mean_delta"] for d in json.loads(summary.read_text())["delta"]}
    assert deltas == {("Android", "NRWifiScrOn"): 1.0, ("Windows", "NRWifiScrOff"): 0.0}


def test_seed_changes_simulation(tmp_path):
    path = tmp_path / "noisy.json"
    save_scenario(classroom_scenario(rooms=1, sessions=1, duration=1800.0, shadowing_sigma=4.0), path)
    main(["simulate", str(path), "--seed", "1", "--out", str(tmp_path / "a")])
    main(["simulate", str(path), "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "capture.csv").read_bytes() != (tmp_path / "b" / "capture.csv").read_bytes()
