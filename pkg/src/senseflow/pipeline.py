"""
End-to-end pipeline
===================

A :class:`RunManifest` names a scenario (or an existing capture), the
collection settings used by the gateway agents and the analysis settings
used by the server. :func:`run_pipeline` runs the stages in order::

    simulate -> agent -> server -> analyze -> metrics

and writes everything under the manifest's output directory:

=====================  =====================================================
``capture.csv``        probe events (``ts,mac,rssi,gn``), when simulated
``ground_truth.json``  simulator ground truth, when simulated
``packets/``           one ``<gn>_<period_start>.ndjson`` file per packet
``density.csv``        ``gn,window_start,count``
``dwell.csv``          ``gn,mac,duration``
``dwell_hist.csv``     ``gn,bucket,count`` (bucket = lower edge, seconds)
``trajectories.json``  observed trajectory per MAC
``flow.json``          per-target match, recognition and ambiguity counts
``metrics.json``       detection error per region and window, tracking
                       accuracy per planted walk, agent summaries
=====================  =====================================================

Re-running a manifest replaces the previous outputs with identical bytes.
A failing stage removes its own partial outputs and raises
:class:`StageError` naming the stage.
"""

from __future__ import annotations

import csv
import json
import shutil
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .agent import SpoolSink, run_agent
from .capture import read_capture
from .domain import CollectionConfig
from .experiments import (
    FLOW_CONFIG,
    FLOW_T_WIN,
    detection_rate_experiment,
    flow_tracking_experiment,
    group_by_gateway,
    traffic_sweep,
)
from .metrics import detection_error, tracking_accuracy
from .server import PacketStore, density, dwell_durations, ingest_spool, resolve_placements, trajectories_from_placements
from .sim.engine import GroundTruthLog, Scenario, load_scenario, simulate
from .sim.models import ALL_MODES, SPEEDS
from .sim.scenarios import CANONICAL, FLOW_TARGETS
from .trajectory import Trajectory, flow_counts


class ManifestError(ValueError):
    def __init__(self, field_path: str, detail: str):
        self.field = field_path
        super().__init__(f"{field_path}: {detail}")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")


# --- scenario and manifest references ----------------------------------------


def _data_file(kind: str, name: str):
    return resources.files("senseflow").joinpath("data", kind, f"{name}.json")


def resolve_scenario(ref: str, base: Optional[Path] = None) -> Scenario:
    """A scenario file path, or the name of a shipped scenario."""
    path = Path(ref)
    if base is not None and not path.is_absolute():
        path = base / path
    if path.exists():
        return load_scenario(path)
    if ref in CANONICAL:
        with resources.as_file(_data_file("scenarios", ref)) as shipped:
            return load_scenario(shipped)
    raise FileNotFoundError(f"no scenario file {str(path)!r} and no shipped scenario named {ref!r}")


@dataclass(frozen=True)
class RunManifest:
    """Everything that determines one pipeline run."""

    out_dir: str
    scenario: Optional[str] = None
    capture: Optional[str] = None
    ground_truth: Optional[str] = None
    seed: Optional[int] = None
    t_dataset: float = 600.0
    t_interval: float = 300.0
    t_win: float = 600.0
    targets: tuple = ()
    dwell_floor: float = 0.0
    base_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.scenario is None and self.capture is None:
            raise ManifestError("scenario", "either a scenario or a capture is required")
        CollectionConfig(self.t_dataset, self.t_interval)
        if not self.t_win > 0:
            raise ManifestError("analysis.t_win", "must be positive")
        object.__setattr__(self, "targets", tuple(tuple(int(s) for s in t) for t in self.targets))
        if any(len(t) == 0 for t in self.targets):
            raise ManifestError("analysis.targets", "targets must be non-empty")

    @property
    def config(self) -> CollectionConfig:
        return CollectionConfig(self.t_dataset, self.t_interval)

    def path(self, ref: Optional[str]) -> Optional[Path]:
        if ref is None:
            return None
        p = Path(ref)
        if self.base_dir is not None and not p.is_absolute():
            p = Path(self.base_dir) / p
        return p

    def to_dict(self) -> dict:
        out = {
            "out": self.out_dir,
            "seed": self.seed,
            "collection": {"t_dataset": self.t_dataset, "t_interval": self.t_interval},
            "analysis": {"t_win": self.t_win, "targets": [list(t) for t in self.targets], "dwell_floor": self.dwell_floor},
        }
        for key in ("scenario", "capture", "ground_truth"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        return out

    @classmethod
    def from_dict(cls, obj: dict, base_dir=None) -> "RunManifest":
        if not isinstance(obj, dict):
            raise ManifestError("<document>", "expected a JSON object")

        def get(section, key, kinds, default):
            src = obj if section is None else obj.get(section, {})
            name = key if section is None else f"{section}.{key}"
            if not isinstance(src, dict):
                raise ManifestError(section, "expected an object")
            value = src.get(key, default)
            if value is not default and (isinstance(value, bool) or not isinstance(value, kinds)):
                raise ManifestError(name, f"expected {'/'.join(k.__name__ for k in kinds)}, got {type(value).__name__}")
            return value

        known = {"out", "scenario", "capture", "ground_truth", "seed", "collection", "analysis", "v"}
        for key in obj:
            if key not in known:
                raise ManifestError(key, "unknown field")
        targets = get("analysis", "targets", (list,), [])
        for i, t in enumerate(targets):
            if not isinstance(t, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in t):
                raise ManifestError(f"analysis.targets[{i}]", "expected a list of gateway or location ids")
        try:
            return cls(
                out_dir=get(None, "out", (str,), "run"),
                scenario=get(None, "scenario", (str,), None),
                capture=get(None, "capture", (str,), None),
                ground_truth=get(None, "ground_truth", (str,), None),
                seed=get(None, "seed", (int,), None),
                t_dataset=float(get("collection", "t_dataset", (int, float), 600.0)),
                t_interval=float(get("collection", "t_interval", (int, float), 300.0)),
                t_win=float(get("analysis", "t_win", (int, float), 600.0)),
                targets=tuple(tuple(t) for t in targets),
                dwell_floor=float(get("analysis", "dwell_floor", (int, float), 0.0)),
                base_dir=None if base_dir is None else str(base_dir),
            )
        except ManifestError:
            raise
        except ValueError as exc:
            raise ManifestError("collection", str(exc)) from exc


def load_manifest(ref: str) -> RunManifest:
    """A manifest file, or the name of a shipped manifest."""
    path = Path(ref)
    if not path.exists() and "/" not in ref and not ref.endswith(".json"):
        with resources.as_file(_data_file("manifests", ref)) as shipped:
            if not shipped.exists():
                raise FileNotFoundError(f"no manifest file {ref!r} and no shipped manifest of that name")
            return RunManifest.from_dict(_read_json(shipped))
    return RunManifest.from_dict(_read_json(path), base_dir=path.parent)


def _read_json(path: Path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"line {exc.lineno} column {exc.colno}", exc.msg) from exc


# --- report writers ----------------------------------------------------------


def write_csv(path: Path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def write_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


def trajectories_json(trajectories: dict, t_win: float, by_location: bool) -> dict:
    return {
        "t_win": t_win,
        "by_location": by_location,
        "trajectories": [
            {"mac": str(mac), "steps": list(x.steps), "times": list(x.times or ())}
            for mac, x in sorted(trajectories.items())
        ],
    }


# --- pipeline ----------------------------------------------------------------

STAGE_OUTPUTS = {
    "simulate": ("capture.csv", "ground_truth.json"),
    "agent": ("packets",),
    "server": (),
    "analyze": ("density.csv", "dwell.csv", "dwell_hist.csv", "trajectories.json", "flow.json"),
    "metrics": ("metrics.json",),
}


def _remove(out: Path, names: Sequence[str]) -> None:
    for name in names:
        p = out / name
        if p.is_dir():
            shutil.rmtree(p)
        elif p.exists():
            p.unlink()


@dataclass
class PipelineResult:
    out_dir: Path
    events: int = 0
    packets: int = 0
    bytes_uploaded: int = 0
    metrics: dict = field(default_factory=dict)


def run_pipeline(manifest: RunManifest) -> PipelineResult:
    out = Path(manifest.out_dir)
    if manifest.base_dir is not None and not out.is_absolute():
        out = Path(manifest.base_dir) / out
    out.mkdir(parents=True, exist_ok=True)
    for names in STAGE_OUTPUTS.values():
        _remove(out, names)
    result = PipelineResult(out)
    ctx: dict = {}

    def stage(name, fn):
        try:
            fn()
        except Exception as exc:
            _remove(out, STAGE_OUTPUTS[name])
            raise StageError(name, exc) from exc

    def do_simulate():
        if manifest.scenario is None:
            ctx["capture"] = manifest.path(manifest.capture)
            gt = manifest.path(manifest.ground_truth)
            ctx["truth"] = None if gt is None else GroundTruthLog.from_json(json.loads(gt.read_text()))
            return
        scenario = resolve_scenario(manifest.scenario, None if manifest.base_dir is None else Path(manifest.base_dir))
        if manifest.seed is not None:
            scenario = scenario.with_seed(manifest.seed)
        sim = simulate(scenario)
        ctx["capture"], _ = sim.write(out)
        ctx["truth"] = sim.truth
        ctx["events"] = sim.events()

    def do_agent():
        truth: Optional[GroundTruthLog] = ctx["truth"]
        events = ctx.get("events")
        if events is None:
            events = read_capture(ctx["capture"])
        by_gn = group_by_gateway(events)
        gateways = set(by_gn) | ({g.id for g in truth.gateways} if truth else set())
        start, until = (truth.start, truth.end) if truth else (None, None)
        summaries = {}
        for gn in sorted(gateways):
            s = run_agent(manifest.config, gn, by_gn.get(gn, []), SpoolSink(out / "packets"), start, until)
            if not s.ok:
                raise OSError(f"gateway {gn}: {s.error}")
            summaries[gn] = s
        (out / "packets").mkdir(exist_ok=True)
        result.events = sum(s.events_ingested for s in summaries.values())
        result.packets = sum(s.packets_emitted for s in summaries.values())
        result.bytes_uploaded = sum(s.bytes_uploaded for s in summaries.values())
        ctx["summaries"] = summaries

    def do_server():
        store = PacketStore()
        _, errors = ingest_spool(store, out / "packets")
        if errors:
            raise ValueError("; ".join(errors))
        ctx["store"] = store

    def do_analyze():
        store, truth = ctx["store"], ctx["truth"]
        start, end = (truth.start, truth.end) if truth else (None, None)
        locations = truth.locations if truth else {}
        placements = resolve_placements(store, manifest.t_win, start, end)
        dens = density(store, manifest.t_win, start, end, placements)
        dwell = dwell_durations(store, start, end, floor=manifest.dwell_floor)
        trajectories = trajectories_from_placements(placements, locations or None)
        write_csv(out / "density.csv", dens.rows(), ("gn", "window_start", "count"))
        write_csv(out / "dwell.csv", dwell.rows(), ("gn", "mac", "duration"))
        write_csv(out / "dwell_hist.csv", dwell.histogram_rows(), ("gn", "bucket", "count"))
        write_json(out / "trajectories.json", trajectories_json(trajectories, manifest.t_win, bool(locations)))
        write_json(
            out / "flow.json",
            {"targets": flow_counts(trajectories.values(), manifest.targets) if manifest.targets else []},
        )
        ctx.update(density=dens, trajectories=trajectories)

    def do_metrics():
        truth = ctx["truth"]
        metrics = {
            "collection": {
                "t_dataset": manifest.t_dataset,
                "t_interval": manifest.t_interval,
                "events": result.events,
                "packets": result.packets,
                "bytes_uploaded": result.bytes_uploaded,
                "per_gateway": {
                    str(gn): {"events": s.events_ingested, "packets": s.packets_emitted, "bytes": s.bytes_uploaded}
                    for gn, s in ctx["summaries"].items()
                },
            },
            "t_win": manifest.t_win,
        }
        if truth is not None:
            metrics["detection_error"] = detection_report(ctx["density"], truth, manifest.t_win)
            metrics["tracking_accuracy"] = tracking_report(ctx["trajectories"], truth)
        write_json(out / "metrics.json", metrics)
        result.metrics = metrics

    for name, fn in (
        ("simulate", do_simulate),
        ("agent", do_agent),
        ("server", do_server),
        ("analyze", do_analyze),
        ("metrics", do_metrics),
    ):
        stage(name, fn)
    return result


def detection_report(dens, truth: GroundTruthLog, t_win: float) -> dict:
    """Detection error per region and window with a non-zero headcount."""
    rows, skipped = [], 0
    for region in truth.regions:
        truth_counts = truth.headcount(region, t_win)
        detected = dens.grouped({region.name: region.gateways})[region.name]
        if len(detected) != len(truth_counts):
            raise ValueError(f"window mismatch for region {region.name}")
        for ws, d, t in zip(truth.window_starts(t_win), detected, truth_counts):
            if t <= 0:
                skipped += 1
                continue
            rows.append(
                {"region": region.name, "window_start": float(ws), "detected": int(d), "truth": int(t),
                 "error": detection_error(int(d), int(t))}
            )
    errors = np.array([r["error"] for r in rows])
    return {
        "windows": rows,
        "zero_truth_windows": skipped,
        "exact_windows": int(np.sum(errors == 0)) if rows else 0,
        "mean_abs_error": float(np.mean(np.abs(errors))) if rows else None,
    }


def tracking_report(trajectories: dict, truth: GroundTruthLog) -> dict:
    """Tracking accuracy of every phone with a planted trajectory."""
    rows = []
    for phone in truth.phones:
        if not phone.planted:
            continue
        x = trajectories.get(phone.mac, Trajectory(times=()))
        rows.append(
            {"mac": str(phone.mac), "os": phone.os, "mode": phone.mode, "planted": list(phone.planted),
             "observed": list(x.steps), "delta": tracking_accuracy(x, phone.planted)}
        )
    deltas = [r["delta"] for r in rows]
    return {"phones": rows, "mean_delta": float(np.mean(deltas)) if deltas else None}


# --- sweeps ------------------------------------------------------------------


def sweep_traffic(
    source: str,
    t_datasets: Sequence[float],
    t_intervals: Sequence[float],
    seed: Optional[int] = None,
) -> list[dict]:
    """Uploaded bytes per (t_dataset, t_interval) on one fixed stream.

    ``source`` is a capture CSV or a scenario (file or shipped name) that is
    simulated once.
    """
    start = until = None
    if str(source).endswith(".csv"):
        events = read_capture(source)
    else:
        scenario = resolve_scenario(source)
        if seed is not None:
            scenario = scenario.with_seed(seed)
        events = simulate(scenario).events()
        start, until = scenario.start, scenario.end
    cells = traffic_sweep(group_by_gateway(events), t_datasets, t_intervals, start, until)
    return [asdict(c) for c in cells]


TRAFFIC_COLUMNS = ("t_dataset", "t_interval", "bytes", "packets", "records")
DETECTION_COLUMNS = (
    "mode", "speed", "gn_count", "replications", "mean_rate", "stderr", "rate_ios", "rate_android", "rate_windows",
)


def sweep_detection(
    modes=ALL_MODES,
    speeds=tuple(SPEEDS.values()),
    gn_counts=(1, 2, 3, 4),
    replications: int = 100,
    seed: int = 0,
    jobs: int = 1,
) -> list[dict]:
    cells = detection_rate_experiment(modes, speeds, gn_counts, replications, seed, jobs)
    return [c.row() for c in cells]


DEFAULT_FLOW_PHONES = (
    ("Android", "NRWifiScrOn"),
    ("iOS", "NRWifiScrOn"),
    ("Windows", "NRWifiScrOn"),
    ("Android", "RWifiScrOn"),
    ("iOS", "RWifiScrOn"),
    ("Windows", "RWifiScrOn"),
    ("Windows", "NRWifiScrOff"),
)
FLOW_COLUMNS = ("replication", "mac", "os", "mode", "target", "planted", "observed", "delta", "matched", "recognized")


def sweep_flow(
    phone_set=DEFAULT_FLOW_PHONES,
    targets=FLOW_TARGETS,
    speed="normal",
    replications: int = 10,
    seed: int = 0,
    jobs: int = 1,
    config: CollectionConfig = FLOW_CONFIG,
    t_win: float = FLOW_T_WIN,
) -> dict:
    summary = flow_tracking_experiment(phone_set, targets, speed, replications, seed, config, t_win, jobs=jobs)
    rows = []
    for p in summary["phones"]:
        row = asdict(p)
        row["planted"] = " ".join(map(str, p.planted))
        row["observed"] = " ".join(map(str, p.observed))
        row["recognized"] = "" if p.recognized is None else p.recognized
        rows.append(row)
    return {"rows": rows, "delta": summary["delta"], "recognition": summary["recognition"]}


def with_overrides(manifest: RunManifest, **overrides) -> RunManifest:
    return replace(manifest, **{k: v for k, v in overrides.items() if v is not None})
