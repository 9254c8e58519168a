"""
Simulation engine
=================

Phones emit probe requests as a jittered renewal process; each emission is
received by every gateway within coverage, with RSSI drawn from the channel
model independently per gateway. Output is a time-sorted list of probe
events plus a ground-truth log of where every phone really was.

Randomness comes from one ``numpy`` generator family per phone, derived from
the scenario seed and the phone's ``stream`` key. Phones that share a stream
key and have the same emission parameters emit at identical times, which is
how experiments compare phone models under common random numbers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..capture import write_capture
from ..domain import Gateway, MacAddress, ProbeEvent, check_unique_gateways
from .models import (
    ChannelModel,
    GeometryError,
    Mode,
    MobilityPlan,
    PhoneModel,
    SPEEDS,
    segment_disk_intervals,
    segment_rect_interval,
)


class ScenarioError(ValueError):
    """Scenario file problem; ``field`` names the offending entry."""

    def __init__(self, field_path: str, detail: str):
        self.field = field_path
        super().__init__(f"{field_path}: {detail}")


@dataclass(frozen=True)
class PhoneSpec:
    mac: MacAddress
    model: PhoneModel
    plan: MobilityPlan
    stream: Optional[int] = None


@dataclass(frozen=True)
class Region:
    """Axis-aligned area used for ground-truth headcounts."""

    name: str
    bounds: tuple[float, float, float, float]
    gateways: tuple[int, ...] = ()

    def contains(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float)
        xmin, ymin, xmax, ymax = self.bounds
        return (xy[..., 0] >= xmin) & (xy[..., 0] <= xmax) & (xy[..., 1] >= ymin) & (xy[..., 1] <= ymax)


@dataclass(frozen=True)
class Scenario:
    gateways: tuple[Gateway, ...]
    phones: tuple[PhoneSpec, ...]
    channel: ChannelModel = ChannelModel()
    duration: float = 3600.0
    rng_seed: int = 0
    start: float = 0.0
    regions: tuple[Region, ...] = ()
    truth_window: float = 600.0
    name: str = "scenario"

    def __post_init__(self) -> None:
        object.__setattr__(self, "gateways", tuple(self.gateways))
        object.__setattr__(self, "phones", tuple(self.phones))
        object.__setattr__(self, "regions", tuple(self.regions))
        check_unique_gateways(self.gateways)
        if any(g.position is None for g in self.gateways):
            raise GeometryError("every simulated gateway needs a position")
        if len({p.mac for p in self.phones}) != len(self.phones):
            raise ValueError("duplicate phone MAC address")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def locations(self) -> dict[int, int]:
        return {g.id: g.location for g in self.gateways if g.location is not None}

    def with_seed(self, seed: int) -> "Scenario":
        return Scenario(
            self.gateways, self.phones, self.channel, self.duration, seed,
            self.start, self.regions, self.truth_window, self.name,
        )


@dataclass
class PhoneTruth:
    mac: MacAddress
    os: str
    mode: str
    radio_on: bool
    active: list[tuple[float, float]]
    timeline: list[tuple[float, float, float]]
    coverage: dict[int, list[tuple[float, float]]]
    planted: tuple[int, ...]

    def position_at(self, t) -> np.ndarray:
        arr = np.array(self.timeline, dtype=float)
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, arr[:, 0], arr[:, 1]), np.interp(t, arr[:, 0], arr[:, 2])], axis=-1)


def _merge(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if out and lo <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], hi))
        else:
            out.append((lo, hi))
    return out


def _intersect(a: list[tuple[float, float]], b: list[tuple[float, float]]) -> list[tuple[float, float]]:
    out = []
    for lo1, hi1 in a:
        for lo2, hi2 in b:
            lo, hi = max(lo1, lo2), min(hi1, hi2)
            if lo < hi:
                out.append((lo, hi))
    return _merge(out)


def _timeline_intervals(timeline, piece, active) -> list[tuple[float, float]]:
    found = []
    for (t0, x0, y0), (t1, x1, y1) in zip(timeline, timeline[1:]):
        iv = piece(t0, t1, (x0, y0), (x1, y1))
        if iv is not None:
            found.append(iv)
    return _intersect(_merge(found), active)


@dataclass
class GroundTruthLog:
    """True positions, coverage intervals and planted trajectories."""

    phones: list[PhoneTruth]
    regions: tuple[Region, ...]
    start: float
    end: float
    truth_window: float
    gateways: tuple[Gateway, ...] = ()

    @property
    def locations(self) -> dict[int, int]:
        return {g.id: g.location for g in self.gateways if g.location is not None}

    def phone(self, mac) -> PhoneTruth:
        mac = mac if isinstance(mac, MacAddress) else MacAddress.parse(mac)
        for p in self.phones:
            if p.mac == mac:
                return p
        raise KeyError(str(mac))

    def region(self, name: str) -> Region:
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def region_intervals(self, phone: PhoneTruth, region: Region) -> list[tuple[float, float]]:
        return _timeline_intervals(
            phone.timeline,
            lambda t0, t1, p0, p1: segment_rect_interval(t0, t1, p0, p1, region.bounds),
            phone.active,
        )

    def headcount(self, region: str | Region, t_win: Optional[float] = None) -> np.ndarray:
        """Phones inside the region at some instant of each window."""
        region = region if isinstance(region, Region) else self.region(region)
        t_win = self.truth_window if t_win is None else t_win
        n = int(np.ceil((self.end - self.start) / t_win - 1e-9))
        starts = self.start + np.arange(n) * t_win
        counts = np.zeros(n, dtype=int)
        for phone in self.phones:
            inside = np.zeros(n, dtype=bool)
            for lo, hi in self.region_intervals(phone, region):
                inside |= (starts < hi) & (starts + t_win > lo)
            counts += inside
        return counts

    def window_starts(self, t_win: Optional[float] = None) -> np.ndarray:
        t_win = self.truth_window if t_win is None else t_win
        n = int(np.ceil((self.end - self.start) / t_win - 1e-9))
        return self.start + np.arange(n) * t_win

    def to_json(self) -> dict:
        return {
            "v": 1,
            "start": self.start,
            "end": self.end,
            "truth_window": self.truth_window,
            "phones": [
                {
                    "mac": str(p.mac),
                    "os": p.os,
                    "mode": p.mode,
                    "radio_on": p.radio_on,
                    "active": [list(iv) for iv in p.active],
                    "timeline": [list(k) for k in p.timeline],
                    "coverage": {str(g): [list(iv) for iv in ivs] for g, ivs in sorted(p.coverage.items())},
                    "planted": list(p.planted),
                }
                for p in self.phones
            ],
            "gateways": [
                {"id": g.id, "label": g.label, "position": list(g.position) if g.position else None, "location": g.location}
                for g in self.gateways
            ],
            "regions": [
                {"name": r.name, "bounds": list(r.bounds), "gateways": list(r.gateways)} for r in self.regions
            ],
            "headcount": {r.name: self.headcount(r).tolist() for r in self.regions},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GroundTruthLog":
        phones = [
            PhoneTruth(
                MacAddress.parse(p["mac"]),
                p["os"],
                p["mode"],
                p["radio_on"],
                [tuple(iv) for iv in p["active"]],
                [tuple(k) for k in p["timeline"]],
                {int(g): [tuple(iv) for iv in ivs] for g, ivs in p["coverage"].items()},
                tuple(p["planted"]),
            )
            for p in obj["phones"]
        ]
        regions = tuple(Region(r["name"], tuple(r["bounds"]), tuple(r["gateways"])) for r in obj["regions"])
        gateways = tuple(
            Gateway(g["id"], g.get("label"), tuple(g["position"]) if g.get("position") else None, g.get("location"))
            for g in obj.get("gateways", ())
        )
        return cls(phones, regions, obj["start"], obj["end"], obj["truth_window"], gateways)


@dataclass
class SimulationResult:
    """Events as parallel arrays, sorted by (ts, mac, gateway)."""

    ts: np.ndarray
    mac_index: np.ndarray
    rssi: np.ndarray
    gn: np.ndarray
    macs: list[MacAddress]
    truth: GroundTruthLog
    _events: Optional[list[ProbeEvent]] = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.ts)

    def events(self) -> list[ProbeEvent]:
        if self._events is None:
            macs = self.macs
            self._events = [
                ProbeEvent(macs[m], t, r, g)
                for t, m, r, g in zip(self.ts.tolist(), self.mac_index.tolist(), self.rssi.tolist(), self.gn.tolist())
            ]
        return self._events

    def events_for(self, gn: int) -> list[ProbeEvent]:
        return [e for e in self.events() if e.gn == gn]

    def detected_macs(self) -> set[MacAddress]:
        return {self.macs[i] for i in np.unique(self.mac_index)}

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        capture, truth = out / "capture.csv", out / "ground_truth.json"
        write_capture(self.events(), capture)
        truth.write_text(json.dumps(self.truth.to_json(), indent=1, sort_keys=True) + "\n")
        return capture, truth


def _phone_rngs(seed: int, stream: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream,))
    return [np.random.default_rng(child) for child in ss.spawn(3)]


def emission_times(model: PhoneModel, active: Sequence[tuple[float, float]], rng_phase, rng_jitter) -> np.ndarray:
    """Burst start times falling inside the active intervals.

    One renewal process runs from the first activation: the first burst
    falls uniformly within one mean interval, each following gap is the mean
    interval scaled by ``1 + U(-jitter, +jitter)``. Bursts while the phone is
    absent are dropped.
    """
    if not active:
        return np.zeros(0)
    a, b = active[0][0], active[-1][1]
    interval, jitter = model.mean_probe_interval, model.jitter_fraction
    first = a + rng_phase.random() * interval
    if first >= b:
        return np.zeros(0)
    chunk = int((b - first) / (interval * (1 - jitter))) + 2
    gaps = []
    total = first
    while True:
        draw = rng_jitter.uniform(-jitter, jitter, size=chunk) if jitter > 0 else np.zeros(chunk)
        step = interval * (1.0 + draw)
        gaps.append(step)
        total += step.sum()
        if total >= b:
            break
    times = first + np.concatenate([[0.0], np.cumsum(np.concatenate(gaps))])
    keep = np.zeros(len(times), dtype=bool)
    for lo, hi in active:
        keep |= (times >= lo) & (times < hi)
    return times[keep]


def _planted(plan: MobilityPlan, gateways: Sequence[Gateway], radius: float) -> tuple[int, ...]:
    if plan.kind != "walk" or not gateways:
        return ()
    pos = np.array([g.position for g in gateways])
    steps = []
    for p in plan.positions:
        d = np.hypot(*(pos - np.asarray(p)).T)
        k = int(np.argmin(d))
        if d[k] <= radius:
            g = gateways[k]
            sid = g.location if g.location is not None else g.id
            if not steps or steps[-1] != sid:
                steps.append(sid)
    return tuple(steps)


def simulate(s: Scenario) -> SimulationResult:
    """Run one scenario; identical scenarios give identical results."""
    gw_ids = np.array([g.id for g in s.gateways], dtype=np.int64)
    gw_pos = np.array([g.position for g in s.gateways], dtype=float).reshape(-1, 2)
    ch = s.channel
    end = s.end

    ts_parts, mac_parts, rssi_parts, gn_parts = [], [], [], []
    truths = []
    for idx, phone in enumerate(s.phones):
        model, plan = phone.model, phone.plan
        times, pts = plan.timeline(end)
        active = [(max(a, s.start), b) for a, b in plan.active_intervals(end) if b > s.start]
        timeline = [(float(t), float(x), float(y)) for t, (x, y) in zip(times, pts)]
        coverage = {}
        for g in s.gateways:
            ivs = _timeline_intervals(
                timeline,
                lambda t0, t1, p0, p1: segment_disk_intervals(t0, t1, p0, p1, g.position, ch.coverage_radius),
                active,
            )
            if ivs:
                coverage[g.id] = ivs
        truths.append(
            PhoneTruth(
                phone.mac, model.os, model.mode.name, model.radio_on, active, timeline, coverage,
                _planted(plan, s.gateways, ch.coverage_radius),
            )
        )
        if not model.radio_on or not active or len(gw_ids) == 0:
            continue

        rng_phase, rng_jitter, rng_noise = _phone_rngs(s.rng_seed, idx if phone.stream is None else phone.stream)
        bursts = emission_times(model, active, rng_phase, rng_jitter)
        if model.burst_size > 1:
            offsets = np.arange(model.burst_size) * model.burst_spacing
            t = (bursts[:, None] + offsets[None, :]).ravel()
            t = t[np.any([(t >= lo) & (t < hi) for lo, hi in active], axis=0)]
        else:
            t = bursts
        if len(t) == 0:
            continue
        xy = plan.position_at(t, end)
        dist = np.hypot(xy[:, None, 0] - gw_pos[None, :, 0], xy[:, None, 1] - gw_pos[None, :, 1])
        rssi = ch.expected_rssi(dist)
        if ch.shadowing_sigma > 0:
            rssi = rssi + rng_noise.normal(0.0, ch.shadowing_sigma, size=rssi.shape)
        rssi = ch.clamp(rssi)
        hit_t, hit_g = np.nonzero(dist <= ch.coverage_radius)
        ts_parts.append(t[hit_t])
        mac_parts.append(np.full(len(hit_t), idx, dtype=np.int64))
        rssi_parts.append(rssi[hit_t, hit_g])
        gn_parts.append(gw_ids[hit_g])

    if ts_parts:
        ts = np.round(np.concatenate(ts_parts), 3)
        mac_index = np.concatenate(mac_parts)
        rssi = np.round(np.concatenate(rssi_parts), 1)
        gn = np.concatenate(gn_parts)
    else:
        ts, rssi = np.zeros(0), np.zeros(0)
        mac_index, gn = np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    macs = [p.mac for p in s.phones]
    rank = {m: r for r, m in enumerate(sorted(macs))}
    mac_rank = np.array([rank[m] for m in macs], dtype=np.int64)
    # rounding must not push an event onto the scenario end
    inside = ts < end
    ts, mac_index, rssi, gn = ts[inside], mac_index[inside], rssi[inside], gn[inside]
    order = np.lexsort((gn, mac_rank[mac_index], ts))
    truth = GroundTruthLog(truths, s.regions, s.start, end, s.truth_window, s.gateways)
    return SimulationResult(ts[order], mac_index[order], rssi[order], gn[order], macs, truth)


# --- scenario files ---------------------------------------------------------


def _get(obj: dict, key: str, path: str, kinds=None, default=...):
    if key not in obj:
        if default is ...:
            raise ScenarioError(f"{path}{key}", "missing")
        return default
    value = obj[key]
    if kinds is not None:
        allowed = kinds if isinstance(kinds, tuple) else (kinds,)
        if (isinstance(value, bool) and bool not in allowed) or not isinstance(value, allowed):
            names = "/".join("null" if k is type(None) else k.__name__ for k in allowed)
            raise ScenarioError(f"{path}{key}", f"expected {names}, got {type(value).__name__}")
    return value


def _xy(value, path: str) -> tuple[float, float]:
    if not (isinstance(value, (list, tuple)) and len(value) == 2 and all(isinstance(v, (int, float)) for v in value)):
        raise ScenarioError(path, "expected [x, y]")
    return (float(value[0]), float(value[1]))


def _mobility(obj: dict, path: str) -> MobilityPlan:
    kind = _get(obj, "kind", path, str)
    start = float(_get(obj, "start_time", path, (int, float), 0.0))
    try:
        if kind == "stationary":
            end = _get(obj, "end_time", path, (int, float, type(None)), None)
            presence = _get(obj, "presence", path, (list, type(None)), None)
            if presence is not None:
                presence = [_xy(iv, f"{path}presence[{i}]") for i, iv in enumerate(presence)]
            return MobilityPlan.stationary(_xy(_get(obj, "position", path), path + "position"), start, end, presence)
        if kind == "walk":
            pts = _get(obj, "waypoints", path, list)
            speed = _get(obj, "speed", path, (int, float, str))
            if isinstance(speed, str) and speed not in SPEEDS:
                raise ScenarioError(path + "speed", f"unknown speed name {speed!r}")
            return MobilityPlan.walk([_xy(p, f"{path}waypoints[{i}]") for i, p in enumerate(pts)], speed, start)
    except GeometryError as exc:
        raise ScenarioError(path.rstrip("."), str(exc)) from exc
    raise ScenarioError(path + "kind", f"unknown mobility kind {kind!r}")


def scenario_from_dict(obj: dict) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("<document>", "expected a JSON object")
    ch = _get(obj, "channel", "", dict, {})
    try:
        channel = ChannelModel(**{k: float(v) for k, v in ch.items()})
    except TypeError as exc:
        raise ScenarioError("channel", str(exc)) from exc
    gateways = []
    for i, g in enumerate(_get(obj, "gateways", "", list)):
        path = f"gateways[{i}]."
        gateways.append(
            Gateway(
                _get(g, "id", path, int),
                _get(g, "label", path, (str, type(None)), None),
                _xy(_get(g, "position", path), path + "position"),
                _get(g, "location", path, (int, type(None)), None),
            )
        )
    phones = []
    for i, p in enumerate(_get(obj, "phones", "", list)):
        path = f"phones[{i}]."
        try:
            mac = MacAddress.parse(_get(p, "mac", path, str))
        except ValueError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(path + "mac", str(exc)) from exc
        kwargs = {}
        for key in ("mean_probe_interval", "jitter_fraction", "burst_spacing"):
            if key in p:
                kwargs[key] = float(_get(p, key, path, (int, float)))
        if "burst_size" in p:
            kwargs["burst_size"] = _get(p, "burst_size", path, int)
        if "radio_off_when_screen_off" in p:
            kwargs["radio_off_when_screen_off"] = _get(p, "radio_off_when_screen_off", path, bool)
        try:
            model = PhoneModel(_get(p, "os", path, str), Mode.parse(_get(p, "mode", path)), **kwargs)
        except (ValueError, KeyError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError(path.rstrip("."), str(exc)) from exc
        plan = _mobility(_get(p, "mobility", path, dict), path + "mobility.")
        phones.append(PhoneSpec(mac, model, plan, _get(p, "stream", path, (int, type(None)), None)))
    regions = []
    for i, r in enumerate(_get(obj, "regions", "", list, [])):
        path = f"regions[{i}]."
        bounds = _get(r, "bounds", path, list)
        if len(bounds) != 4:
            raise ScenarioError(path + "bounds", "expected [xmin, ymin, xmax, ymax]")
        regions.append(Region(_get(r, "name", path, str), tuple(float(b) for b in bounds), tuple(_get(r, "gateways", path, list, []))))
    try:
        return Scenario(
            tuple(gateways),
            tuple(phones),
            channel,
            float(_get(obj, "duration", "", (int, float))),
            _get(obj, "seed", "", int, 0),
            float(_get(obj, "start", "", (int, float), 0.0)),
            tuple(regions),
            float(_get(obj, "truth_window", "", (int, float), 600.0)),
            _get(obj, "name", "", str, "scenario"),
        )
    except ValueError as exc:
        if isinstance(exc, ScenarioError):
            raise
        raise ScenarioError("<document>", str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    def plan(p: MobilityPlan) -> dict:
        if p.kind == "stationary":
            out = {"kind": "stationary", "position": list(p.positions[0])}
            if p.presence is not None:
                out["presence"] = [list(iv) for iv in p.presence]
            else:
                out.update(start_time=p.start_time, end_time=p.end_time)
            return out
        return {"kind": "walk", "waypoints": [list(x) for x in p.positions], "speed": p.speed, "start_time": p.start_time}

    phones = []
    for ph in s.phones:
        m = ph.model
        entry = {
            "mac": str(ph.mac),
            "os": m.os,
            "mode": m.mode.name,
            "mean_probe_interval": m.mean_probe_interval,
            "jitter_fraction": m.jitter_fraction,
            "radio_off_when_screen_off": m.radio_off_when_screen_off,
            "mobility": plan(ph.plan),
        }
        if m.burst_size != 1:
            entry["burst_size"] = m.burst_size
            entry["burst_spacing"] = m.burst_spacing
        if ph.stream is not None:
            entry["stream"] = ph.stream
        phones.append(entry)
    return {
        "v": 1,
        "name": s.name,
        "seed": s.rng_seed,
        "start": s.start,
        "duration": s.duration,
        "truth_window": s.truth_window,
        "channel": {
            "rssi_at_reference": s.channel.rssi_at_reference,
            "path_loss_exponent": s.channel.path_loss_exponent,
            "shadowing_sigma": s.channel.shadowing_sigma,
            "coverage_radius": s.channel.coverage_radius,
            "reference_distance": s.channel.reference_distance,
        },
        "gateways": [
            {"id": g.id, "label": g.label, "position": list(g.position), "location": g.location} for g in s.gateways
        ],
        "regions": [{"name": r.name, "bounds": list(r.bounds), "gateways": list(r.gateways)} for r in s.regions],
        "phones": phones,
    }


def load_scenario(path) -> Scenario:
    text = Path(path).read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno} column {exc.colno}", exc.msg) from exc
    return scenario_from_dict(obj)


def save_scenario(s: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(s), indent=1) + "\n")
