"""
Experiments
===========

Runners that wire the simulator, the gateway agents and the server together:

* :func:`replay` pushes a probe-event stream through one agent per gateway
  and returns the resulting packet store;
* :func:`traffic_sweep` replays one capture under a grid of collection
  settings and totals the uploaded bytes;
* :func:`detection_rate_experiment` counts phones detected by walk-through
  scenarios over modes, speeds and gateway counts;
* :func:`flow_tracking_experiment` measures tracking accuracy and trajectory
  recognition on the seven-location deployment.

Cells and replications are independent and may run in worker processes
(``jobs > 1``); results do not depend on ``jobs``.
"""

from __future__ import annotations

import math
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .agent import AgentSummary, MemorySink, run_agent
from .domain import CollectionConfig, DatasetPacket, ProbeEvent
from .metrics import tracking_accuracy
from .server import PacketStore, observed_trajectories
from .sim.engine import simulate
from .sim.models import ALL_MODES, OPERATING_SYSTEMS, SPEEDS, Mode
from .sim.scenarios import FLOW_TARGETS, flow_scenario, walkthrough_scenario
from .trajectory import Trajectory, matches_trajectory, recognize_trajectory


def group_by_gateway(events: Iterable[ProbeEvent]) -> dict[int, list[ProbeEvent]]:
    out: dict[int, list[ProbeEvent]] = defaultdict(list)
    for e in events:
        out[e.gn].append(e)
    return dict(out)


class _CountingSink:
    """Keeps only byte and record totals; used by the traffic sweep."""

    def __init__(self):
        self.records = 0

    def send(self, packet: DatasetPacket, payload: bytes) -> None:
        self.records += len(packet.records)

    def close(self) -> None:
        pass


def replay(
    events_by_gn: dict[int, list[ProbeEvent]],
    config: CollectionConfig,
    gateways: Optional[Iterable[int]] = None,
    start: Optional[float] = None,
    until: Optional[float] = None,
) -> tuple[PacketStore, dict[int, AgentSummary]]:
    """Run one agent per gateway and ingest every packet into a fresh store.

    ``gateways`` adds gateways that heard nothing; with ``start`` pinned they
    still upload (empty) packets.
    """
    store = PacketStore()
    summaries = {}
    for gn in sorted(set(events_by_gn) | set(gateways or ())):
        sink = MemorySink()
        summaries[gn] = run_agent(config, gn, events_by_gn.get(gn, []), sink, start, until)
        for p in sink.packets:
            store.ingest(p)
    return store, summaries


# --- data traffic -----------------------------------------------------------


@dataclass(frozen=True)
class TrafficCell:
    t_dataset: float
    t_interval: float
    bytes: int
    packets: int
    records: int


def traffic_sweep(
    events_by_gn: dict[int, list[ProbeEvent]],
    t_datasets: Sequence[float],
    t_intervals: Sequence[float],
    start: Optional[float] = None,
    until: Optional[float] = None,
) -> list[TrafficCell]:
    """Total uploaded bytes for every (t_dataset, t_interval) on one stream."""
    if not t_datasets or not t_intervals:
        raise ValueError("both grids must be non-empty")
    rows = []
    for t_dataset in t_datasets:
        for t_interval in t_intervals:
            config = CollectionConfig(t_dataset, t_interval)
            total = packets = records = 0
            for gn in sorted(events_by_gn):
                sink = _CountingSink()
                summary = run_agent(config, gn, events_by_gn[gn], sink, start, until)
                total += summary.bytes_uploaded
                packets += summary.packets_emitted
                records += sink.records
            rows.append(TrafficCell(float(t_dataset), float(t_interval), total, packets, records))
    return rows


# --- detection rate ---------------------------------------------------------


def replication_seed(seed: int, replication: int) -> int:
    """Seed of one replication; shared by every cell of a sweep."""
    return int(np.random.SeedSequence([seed, replication]).generate_state(1)[0])


@dataclass(frozen=True)
class DetectionCell:
    mode: str
    speed: float
    gn_count: int
    replications: int
    mean_rate: float
    stderr: Optional[float]
    rate_by_os: dict

    def row(self) -> dict:
        out = {
            "mode": self.mode,
            "speed": self.speed,
            "gn_count": self.gn_count,
            "replications": self.replications,
            "mean_rate": self.mean_rate,
            "stderr": "" if self.stderr is None else self.stderr,
        }
        for os_name in OPERATING_SYSTEMS:
            out[f"rate_{os_name.lower()}"] = self.rate_by_os.get(os_name, "")
        return out


def _detection_cell(args) -> DetectionCell:
    mode, speed, gn_count, replications, seed = args
    rates = np.zeros(replications)
    by_os: dict[str, list[float]] = defaultdict(list)
    for r in range(replications):
        scenario = walkthrough_scenario(mode, speed, gn_count, replication_seed(seed, r))
        result = simulate(scenario)
        seen = result.detected_macs()
        rates[r] = len(seen) / len(scenario.phones)
        per_os: dict[str, list[bool]] = defaultdict(list)
        for p in scenario.phones:
            per_os[p.model.os].append(p.mac in seen)
        for os_name, hits in per_os.items():
            by_os[os_name].append(float(np.mean(hits)))
    stderr = float(rates.std(ddof=1) / math.sqrt(replications)) if replications > 1 else None
    return DetectionCell(
        Mode.parse(mode).name,
        float(speed),
        int(gn_count),
        replications,
        float(rates.mean()),
        stderr,
        {k: float(np.mean(v)) for k, v in sorted(by_os.items())},
    )


def _map(fn, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def detection_rate_experiment(
    modes: Sequence = ALL_MODES,
    speeds: Sequence[float] = tuple(SPEEDS.values()),
    gn_counts: Sequence[int] = (1, 2, 3, 4),
    replications: int = 100,
    seed: int = 0,
    jobs: int = 1,
) -> list[DetectionCell]:
    """Mean share of the five carried phones heard by at least one gateway.

    Every cell uses the same replication seeds (common random numbers), so
    differences between cells come from speed and gateway count alone.
    With a single replication the standard error is reported as ``None``.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    for n in gn_counts:
        if not 1 <= n <= 4:
            raise ValueError("gn_count must be between 1 and 4")
    cells = [(Mode.parse(m).name, float(v), int(n), replications, seed) for m in modes for v in speeds for n in gn_counts]
    return _map(_detection_cell, cells, jobs)


# --- flow tracking ----------------------------------------------------------

FLOW_CONFIG = CollectionConfig(t_dataset=600.0, t_interval=30.0)
FLOW_T_WIN = 2.0


@dataclass(frozen=True)
class FlowPhoneResult:
    replication: int
    mac: str
    os: str
    mode: str
    target: int
    planted: tuple[int, ...]
    observed: tuple[int, ...]
    delta: float
    matched: bool
    recognized: Optional[int]


def flow_replication(
    phones: Sequence[tuple[str, str, int]],
    targets: Sequence[Sequence[int]] = FLOW_TARGETS,
    speed="normal",
    seed: int = 0,
    config: CollectionConfig = FLOW_CONFIG,
    t_win: float = FLOW_T_WIN,
    replication: int = 0,
    shadowing_sigma: float = 4.0,
) -> list[FlowPhoneResult]:
    """Simulate, collect and analyse one flow-tracking run."""
    scenario = flow_scenario(phones, speed, seed, targets, shadowing_sigma=shadowing_sigma)
    result = simulate(scenario)
    store, _ = replay(
        group_by_gateway(result.events()), config, [g.id for g in scenario.gateways], scenario.start, scenario.end
    )
    observed = observed_trajectories(store, t_win, scenario.start, scenario.end, scenario.locations)
    out = []
    for spec, truth, (_, _, target) in zip(scenario.phones, result.truth.phones, phones):
        x = observed.get(spec.mac, Trajectory(times=()))
        planted = truth.planted
        out.append(
            FlowPhoneResult(
                replication,
                str(spec.mac),
                spec.model.os,
                spec.model.mode.name,
                target,
                planted,
                tuple(x.steps),
                tracking_accuracy(x, planted),
                matches_trajectory(x, targets[target]),
                recognize_trajectory(x, targets),
            )
        )
    return out


def _flow_job(args) -> list[FlowPhoneResult]:
    phones, targets, speed, seed, config, t_win, r, sigma = args
    return flow_replication(phones, targets, speed, replication_seed(seed, r), config, t_win, r, sigma)


def flow_tracking_experiment(
    phone_set: Sequence[tuple[str, str]],
    targets: Sequence[Sequence[int]] = FLOW_TARGETS,
    speed="normal",
    replications: int = 10,
    seed: int = 0,
    config: CollectionConfig = FLOW_CONFIG,
    t_win: float = FLOW_T_WIN,
    shadowing_sigma: float = 4.0,
    jobs: int = 1,
) -> dict:
    """Every (os, mode) in ``phone_set`` walks every target in each replication.

    Returns per-phone results plus two summaries: mean tracking accuracy per
    (os, mode), and recognition rate per (target, os, mode), i.e. the share
    of walkers of that target whose observed trajectory matches it.
    """
    if replications < 1:
        raise ValueError("replications must be at least 1")
    phones = [(os_name, Mode.parse(mode).name, k) for k in range(len(targets)) for os_name, mode in phone_set]
    jobs_args = [(phones, targets, speed, seed, config, t_win, r, shadowing_sigma) for r in range(replications)]
    results = [row for rows in _map(_flow_job, jobs_args, jobs) for row in rows]

    deltas: dict[tuple[str, str], list[float]] = defaultdict(list)
    matched: dict[tuple[int, str, str], list[bool]] = defaultdict(list)
    for row in results:
        deltas[(row.os, row.mode)].append(row.delta)
        matched[(row.target, row.os, row.mode)].append(row.matched)
    return {
        "phones": results,
        "delta": [
            {"os": os_name, "mode": mode, "mean_delta": float(np.mean(v)), "n": len(v)}
            for (os_name, mode), v in deltas.items()
        ],
        "recognition": [
            {"target": list(targets[t]), "os": os_name, "mode": mode, "rate": float(np.mean(v)), "n": len(v)}
            for (t, os_name, mode), v in matched.items()
        ],
    }


def mean_delta(summary: dict, os_name: str, mode) -> float:
    mode = Mode.parse(mode).name
    for row in summary["delta"]:
        if row["os"] == os_name and row["mode"] == mode:
            return row["mean_delta"]
    raise KeyError((os_name, mode))
