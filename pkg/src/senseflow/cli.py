"""Command-line entry point: ``senseflow <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import threading
import time
from pathlib import Path
from typing import Optional, Sequence

from .agent import PeriodError, OrderingError, RoutingError, open_sink, run_agent
from .capture import CaptureFormatError, iter_capture
from .domain import CollectionConfig, PacketError
from .pipeline import (
    DEFAULT_FLOW_PHONES,
    DETECTION_COLUMNS,
    FLOW_COLUMNS,
    TRAFFIC_COLUMNS,
    ManifestError,
    StageError,
    load_manifest,
    resolve_scenario,
    run_pipeline,
    sweep_detection,
    sweep_flow,
    sweep_traffic,
    trajectories_json,
    with_overrides,
)
from .server import (
    ConflictError,
    PacketServer,
    PacketStore,
    density,
    dwell_durations,
    ingest_spool,
    observed_trajectories,
)
from .sim.engine import ScenarioError, simulate
from .sim.models import ALL_MODES, SPEEDS, Mode
from .sim.scenarios import FLOW_TARGETS
from .trajectory import flow_counts

log = logging.getLogger("senseflow")

_UNITS = {"s": 1.0, "m": 60.0, "min": 60.0, "h": 3600.0}


def parse_duration(text: str) -> float:
    """Seconds from ``"600"``, ``"600s"``, ``"10m"``, ``"10min"`` or ``"2h"``."""
    t = str(text).strip().lower()
    for suffix in sorted(_UNITS, key=len, reverse=True):
        if t.endswith(suffix):
            value = float(t[: -len(suffix)]) * _UNITS[suffix]
            break
    else:
        value = float(t)
    if not value > 0:
        raise ValueError(f"duration must be positive: {text!r}")
    return value


def _duration(text: str) -> float:
    try:
        return parse_duration(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}") from exc


def _durations(text: str) -> list[float]:
    return [_duration(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    return [SPEEDS[x] if x in SPEEDS else float(x) for x in text.split(",") if x.strip()]


def _ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def _csv_text(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _read_json_file(path: str, what: str):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{what} {path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _load_targets(path: str) -> list[tuple[int, ...]]:
    obj = _read_json_file(path, "targets file")
    if isinstance(obj, dict):
        obj = obj.get("targets")
    if not isinstance(obj, list) or not obj:
        raise ValueError(f"targets file {path}: expected a non-empty list of id sequences")
    out = []
    for i, t in enumerate(obj):
        if not isinstance(t, list) or not t or not all(isinstance(s, int) and not isinstance(s, bool) for s in t):
            raise ValueError(f"targets file {path}: targets[{i}] must be a non-empty list of integers")
        out.append(tuple(t))
    return out


def _load_locations(path: Optional[str]) -> Optional[dict[int, int]]:
    if path is None:
        return None
    obj = _read_json_file(path, "locations file")
    if isinstance(obj, dict) and "gateways" in obj:
        # a ground-truth log
        return {g["id"]: g["location"] for g in obj["gateways"] if g.get("location") is not None}
    if not isinstance(obj, dict):
        raise ValueError(f"locations file {path}: expected an object mapping gateway id to location id")
    return {int(k): int(v) for k, v in obj.items()}


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args) -> int:
    scenario = resolve_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    result = simulate(scenario)
    capture, truth = result.write(args.out)
    print(
        f"simulated {scenario.name}: {len(result)} events, {len(scenario.phones)} phones, "
        f"{len(scenario.gateways)} gateways, seed {scenario.rng_seed} -> {capture}, {truth}"
    )
    return 0


def cmd_agent(args) -> int:
    cfg = _read_json_file(args.config, "config")
    if not isinstance(cfg, dict):
        raise ValueError(f"config {args.config}: expected an object")
    if "collection" in cfg:
        cfg = cfg["collection"]
    for key in ("t_dataset", "t_interval"):
        if not isinstance(cfg.get(key), (int, float)) or isinstance(cfg.get(key), bool):
            raise ValueError(f"config {args.config}: {key} missing or not a number")
    config = CollectionConfig(float(cfg["t_dataset"]), float(cfg["t_interval"]))
    sink = open_sink(args.out)
    summary = run_agent(config, args.gn, iter_capture(args.input, gn=args.gn), sink, args.start, args.until)
    print(
        f"gateway {args.gn}: {summary.events_ingested} events, {summary.packets_emitted} packets, "
        f"{summary.bytes_uploaded} bytes"
    )
    if not summary.ok:
        print(f"senseflow: error: {summary.error}", file=sys.stderr)
        return 1
    return 0


def _open_store(path: str) -> PacketStore:
    p = Path(path)
    if p.exists():
        store = PacketStore.open(p)
    else:
        store = PacketStore(p)
    return store


def cmd_serve(args) -> int:
    if args.spool is None and args.listen is None:
        raise ValueError("serve needs --spool and/or --listen")
    store = _open_store(args.store)
    before = len(store)
    seen: set = set()
    errors: list[str] = []
    server = None
    if args.listen is not None:
        host, _, port = args.listen.rpartition(":")
        server = PacketServer((host or "127.0.0.1", int(port)), store)
        print(f"listening on {server.server_address[0]}:{server.server_address[1]}", flush=True)

    def scan():
        if args.spool is not None:
            _, errs = ingest_spool(store, args.spool, seen)
            errors.extend(errs)

    try:
        if args.once:
            scan()
            if server is not None:
                server.handle_request()
        else:
            if server is not None:
                threading.Thread(target=server.serve_forever, daemon=True).start()
            deadline = None if args.duration is None else time.monotonic() + args.duration
            while deadline is None or time.monotonic() < deadline:
                scan()
                time.sleep(args.poll if deadline is None else max(0.0, min(args.poll, deadline - time.monotonic())))
            scan()
    except KeyboardInterrupt:
        pass
    finally:
        if server is not None:
            if not args.once:
                server.shutdown()
            errors.extend(server.errors)
            server.server_close()
    print(f"store {args.store}: {len(store) - before} new packets, {len(store)} total, {len(errors)} rejected")
    for e in errors:
        print(f"rejected: {e}", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    store = PacketStore.open(args.store) if Path(args.store).exists() else PacketStore()
    start, end = args.start, args.end
    kind, fmt = args.report, args.out
    if kind in ("density", "trajectories", "flow") and args.t_win is None:
        raise ValueError(f"analyze {kind} needs --t-win")
    if kind == "density":
        d = density(store, args.t_win, start, end)
        if fmt == "csv":
            text = _csv_text(d.rows(), ("gn", "window_start", "count"))
        else:
            text = _json_text(
                {
                    "t_win": d.t_win,
                    "window_starts": [float(t) for t in d.window_starts],
                    "series": {str(gn): [int(c) for c in d.counts[g]] for g, gn in enumerate(d.gateways)},
                }
            )
    elif kind == "dwell":
        rep = dwell_durations(store, start, end, floor=args.dwell_floor)
        if fmt == "csv":
            if args.histogram:
                text = _csv_text(rep.histogram_rows(), ("gn", "bucket", "count"))
            else:
                text = _csv_text(rep.rows(), ("gn", "mac", "duration"))
        else:
            text = _json_text({"durations": rep.rows(), "histogram": rep.histogram_rows()})
    else:
        locations = _load_locations(args.locations)
        trajectories = observed_trajectories(store, args.t_win, start, end, locations)
        if kind == "trajectories":
            if fmt == "csv":
                rows = [
                    {"mac": str(m), "steps": " ".join(map(str, x.steps)), "first_window": x.times[0] if x.times else "",
                     "last_window": x.times[-1] if x.times else ""}
                    for m, x in sorted(trajectories.items())
                ]
                text = _csv_text(rows, ("mac", "steps", "first_window", "last_window"))
            else:
                text = _json_text(trajectories_json(trajectories, args.t_win, locations is not None))
        else:
            if args.targets is None:
                raise ValueError("analyze flow needs --targets")
            rows = flow_counts(trajectories.values(), _load_targets(args.targets))
            if fmt == "csv":
                for r in rows:
                    r["target"] = " ".join(map(str, r["target"]))
                text = _csv_text(rows, ("target", "matches", "recognized", "ambiguous"))
            else:
                text = _json_text({"population": len(trajectories), "targets": rows})
    _emit(text, args.output)
    return 0


def cmd_pipeline(args) -> int:
    manifest = with_overrides(load_manifest(args.manifest), out_dir=args.out, seed=args.seed)
    result = run_pipeline(manifest)
    print(
        f"pipeline -> {result.out_dir}: {result.events} events, {result.packets} packets, "
        f"{result.bytes_uploaded} bytes uploaded"
    )
    de = result.metrics.get("detection_error")
    if de and de["windows"]:
        print(f"detection error: {de['exact_windows']}/{len(de['windows'])} windows exact, mean |error| {de['mean_abs_error']:.4f}")
    ta = result.metrics.get("tracking_accuracy")
    if ta and ta["phones"]:
        print(f"tracking accuracy: mean delta {ta['mean_delta']:.4f} over {len(ta['phones'])} phones")
    return 0


def cmd_sweep_traffic(args) -> int:
    rows = sweep_traffic(args.source, args.t_dataset, args.t_interval, args.seed)
    _emit(_csv_text(rows, TRAFFIC_COLUMNS), args.output)
    return 0


def cmd_sweep_detection(args) -> int:
    rows = sweep_detection(args.modes, args.speeds, args.gn_counts, args.replications, args.seed, args.jobs)
    if args.replications == 1:
        print("note: one replication per cell, stderr left empty", file=sys.stderr)
    _emit(_csv_text(rows, DETECTION_COLUMNS), args.output)
    return 0


def _phones(text: str) -> list[tuple[str, str]]:
    out = []
    for item in text.split(","):
        os_name, _, mode = item.strip().partition(":")
        out.append((os_name, Mode.parse(mode).name))
    return out


def cmd_sweep_flow(args) -> int:
    targets = _load_targets(args.targets) if args.targets else FLOW_TARGETS
    result = sweep_flow(args.phones, targets, args.speed, args.replications, args.seed, args.jobs)
    _emit(_csv_text(result["rows"], FLOW_COLUMNS), args.output)
    if args.summary:
        Path(args.summary).write_text(_json_text({"delta": result["delta"], "recognition": result["recognition"]}))
    for row in result["delta"]:
        print(f"{row['os']:8s} {row['mode']:13s} mean delta {row['mean_delta']:.3f}", file=sys.stderr)
    return 0


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="senseflow", description="Passive Wi-Fi probe-request people tracking.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario into capture.csv + ground_truth.json")
    p.add_argument("scenario", help="scenario JSON file or shipped scenario name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("agent", help="run one gateway agent over a capture file")
    p.add_argument("--config", required=True, help="JSON with t_dataset and t_interval (seconds)")
    p.add_argument("--gn", type=int, required=True)
    p.add_argument("--input", required=True, help="capture CSV")
    p.add_argument("--out", required=True, help="spool directory or tcp://host:port")
    p.add_argument("--start", type=float, help="first period start (default: aligned to t_dataset)")
    p.add_argument("--until", type=float, help="end of the stream; the last packet is cut there")
    p.set_defaults(func=cmd_agent)

    p = sub.add_parser("serve", help="ingest packets from a spool directory and/or a TCP port")
    p.add_argument("--store", required=True, help="packet store directory")
    p.add_argument("--spool", help="spool directory to watch")
    p.add_argument("--listen", help="host:port for newline-delimited JSON packets")
    p.add_argument("--once", action="store_true", help="one spool scan and at most one TCP connection, then exit")
    p.add_argument("--poll", type=float, default=1.0, help="spool scan interval in seconds")
    p.add_argument("--duration", type=float, help="stop after this many seconds")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("analyze", help="density, dwell, trajectory and flow reports from a store")
    p.add_argument("report", choices=("density", "dwell", "trajectories", "flow"))
    p.add_argument("--store", required=True)
    p.add_argument("--t-win", type=_duration)
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="end", type=float)
    p.add_argument("--out", choices=("csv", "json"), default="csv", help="report format")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    p.add_argument("--targets", help="JSON list of gateway or location id sequences (flow)")
    p.add_argument("--locations", help="JSON gateway->location map, or a ground_truth.json")
    p.add_argument("--histogram", action="store_true", help="dwell: bucket counts instead of durations")
    p.add_argument("--dwell-floor", type=float, default=0.0, help="seconds counted for a single-probe record")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("pipeline", help="simulate -> agents -> server -> reports from a manifest")
    p.add_argument("manifest", help="manifest JSON file or shipped manifest name")
    p.add_argument("--out", help="override the manifest's output directory")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("sweep-traffic", help="uploaded bytes per (t_dataset, t_interval)")
    p.add_argument("source", help="capture CSV, scenario file or shipped scenario name")
    p.add_argument("--t-dataset", type=_durations, default=_durations("10m,30m,60m,120m"))
    p.add_argument("--t-interval", type=_durations, default=_durations("5m,10m,20m,30m"))
    p.add_argument("--seed", type=int)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep_traffic)

    p = sub.add_parser("sweep-detection", help="detection rate per (mode, speed, gateway count)")
    p.add_argument("--modes", type=lambda t: [Mode.parse(x) for x in t.split(",")], default=list(ALL_MODES))
    p.add_argument("--speeds", type=_floats, default=list(SPEEDS.values()), help="m/s or slow/normal/jog/run")
    p.add_argument("--gn-counts", type=_ints, default=[1, 2, 3, 4])
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_sweep_detection)

    p = sub.add_parser("sweep-flow", help="tracking accuracy and recognition on the seven-location layout")
    p.add_argument("--phones", type=_phones, default=list(DEFAULT_FLOW_PHONES), help="os:mode,os:mode,...")
    p.add_argument("--targets", help="JSON list of location id sequences (default: the two built-in routes)")
    p.add_argument("--speed", default="normal", type=lambda t: t if t in SPEEDS else float(t))
    p.add_argument("--replications", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-o", "--output", help="per-phone CSV (default stdout)")
    p.add_argument("--summary", help="also write mean delta and recognition rates as JSON")
    p.set_defaults(func=cmd_sweep_flow)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ManifestError) as exc:
        print(f"senseflow: error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"senseflow: error: {exc}", file=sys.stderr)
        return 1
    except (
        PacketError, ConflictError, CaptureFormatError, OrderingError, RoutingError, PeriodError, ValueError, OSError,
    ) as exc:
        print(f"senseflow: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
