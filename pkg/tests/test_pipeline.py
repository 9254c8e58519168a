import json

import pytest

from senseflow.capture import write_capture
from senseflow.pipeline import (
    ManifestError,
    RunManifest,
    StageError,
    load_manifest,
    run_pipeline,
    sweep_traffic,
    with_overrides,
)
from senseflow.sim import save_scenario
from senseflow.sim.scenarios import classroom_scenario, flow_scenario

OUTPUTS = ("capture.csv", "ground_truth.json", "density.csv", "dwell.csv", "dwell_hist.csv", "trajectories.json",
           "flow.json", "metrics.json")


@pytest.fixture
def small_classroom(tmp_path):
    path = tmp_path / "room.json"
    save_scenario(classroom_scenario(rooms=2, duration=3600.0, sessions=1), path)
    return path


def snapshot(out):
    files = {name: (out / name).read_bytes() for name in OUTPUTS}
    files.update({f"packets/{p.name}": p.read_bytes() for p in sorted((out / "packets").iterdir())})
    return files


class TestManifest:
    def test_shipped(self):
        m = load_manifest("classroom")
        assert (m.scenario, m.t_dataset, m.t_interval, m.t_win) == ("classroom", 600.0, 300.0, 600.0)
        assert load_manifest("flow_tracking").targets == ((1, 2, 3, 4, 5, 6, 7), (1, 2, 5, 6, 4, 3, 7))

    def test_round_trip(self):
        m = load_manifest("flow_tracking")
        assert RunManifest.from_dict(m.to_dict()) == m

    @pytest.mark.parametrize(
        "doc, field",
        [
            ({"scenario": "lab", "collection": {"t_dataset": "10m"}}, "collection.t_dataset"),
            ({"scenario": "lab", "surprise": 1}, "surprise"),
            ({"scenario": "lab", "analysis": {"targets": [[1, "x"]]}}, "analysis.targets[0]"),
            ({"scenario": "lab", "analysis": {"t_win": 0}}, "analysis.t_win"),
            ({"out": "x"}, "scenario"),
            ({"scenario": "lab", "seed": True}, "seed"),
        ],
    )
    def test_field_errors(self, doc, field):
        with pytest.raises(ManifestError) as info:
            RunManifest.from_dict(doc)
        assert info.value.field == field

    def test_bad_json(self, tmp_path):
        p = tmp_path / "m.json"
        p.write_text("{\n  oops\n}")
        with pytest.raises(ManifestError, match="line 2"):
            load_manifest(str(p))

    def test_overrides(self):
        m = with_overrides(load_manifest("lab"), out_dir="elsewhere", seed=None)
        assert m.out_dir == "elsewhere" and m.seed is None


class TestRun:
    def test_outputs_and_zero_error(self, tmp_path, small_classroom):
        m = RunManifest(str(tmp_path / "run"), scenario=str(small_classroom))
        res = run_pipeline(m)
        for name in OUTPUTS:
            assert (res.out_dir / name).exists()
        de = res.metrics["detection_error"]
        assert de["windows"] and de["exact_windows"] == len(de["windows"])
        assert res.packets == len(list((res.out_dir / "packets").iterdir()))

    def test_deterministic(self, tmp_path, small_classroom):
        m = RunManifest(str(tmp_path / "run"), scenario=str(small_classroom), seed=4)
        first = snapshot(run_pipeline(m).out_dir)
        second = snapshot(run_pipeline(m).out_dir)
        assert first == second

    def test_seed_override_changes_capture(self, tmp_path):
        path = tmp_path / "noisy.json"
        save_scenario(classroom_scenario(rooms=1, duration=1800.0, sessions=1, shadowing_sigma=4.0), path)
        a = run_pipeline(RunManifest(str(tmp_path / "a"), scenario=str(path), seed=1)).out_dir
        b = run_pipeline(RunManifest(str(tmp_path / "b"), scenario=str(path), seed=2)).out_dir
        assert (a / "capture.csv").read_bytes() != (b / "capture.csv").read_bytes()

    def test_empty_capture(self, tmp_path):
        cap = tmp_path / "empty.csv"
        write_capture([], cap)
        res = run_pipeline(RunManifest(str(tmp_path / "run"), capture=str(cap)))
        assert res.events == res.packets == 0
        assert (res.out_dir / "density.csv").read_text() == "gn,window_start,count\n"
        assert "detection_error" not in res.metrics

    def test_capture_with_truth(self, tmp_path, small_classroom):
        first = run_pipeline(RunManifest(str(tmp_path / "sim"), scenario=str(small_classroom))).out_dir
        m = RunManifest(str(tmp_path / "replay"), capture=str(first / "capture.csv"),
                        ground_truth=str(first / "ground_truth.json"))
        out = run_pipeline(m).out_dir
        assert (out / "metrics.json").read_bytes() == (first / "metrics.json").read_bytes()

    def test_missing_capture_fails_in_agent_stage(self, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "density.csv").write_text("stale\n")
        with pytest.raises(StageError) as info:
            run_pipeline(RunManifest(str(out), capture=str(tmp_path / "nope.csv")))
        assert info.value.stage == "agent"
        assert not (out / "density.csv").exists() and not (out / "packets").exists()

    def test_flow_manifest(self, tmp_path):
        path = tmp_path / "flow.json"
        save_scenario(flow_scenario([("Android", "NRWifiScrOn", 0), ("Android", "NRWifiScrOn", 1)], seed=2), path)
        m = with_overrides(load_manifest("flow_tracking"), scenario=str(path), out_dir=str(tmp_path / "run"))
        res = run_pipeline(m)
        ta = res.metrics["tracking_accuracy"]
        assert [p["delta"] for p in ta["phones"]] == [1.0, 1.0]
        flow = json.loads((res.out_dir / "flow.json").read_text())["targets"]
        assert [(r["matches"], r["recognized"]) for r in flow] == [(1, 1), (1, 1)]


class TestTrafficSweep:
    def test_single_cell_from_capture(self, tmp_path, event):
        cap = tmp_path / "c.csv"
        write_capture([event(1.0), event(5.0), event(700.0)], cap)
        (row,) = sweep_traffic(str(cap), [600.0], [60.0])
        assert (row["packets"], row["records"]) == (2, 2)

    def test_grid_from_scenario(self, small_classroom):
        rows = sweep_traffic(str(small_classroom), [600.0, 1800.0], [300.0, 600.0])
        assert [(r["t_dataset"], r["t_interval"]) for r in rows] == [(600, 300), (600, 600), (1800, 300), (1800, 600)]
