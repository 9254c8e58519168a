"""
Flow server
===========

Amalgamates dataset packets from all gateways and derives:

* placements: one gateway per (MAC, analysis window), the one with the
  strongest average RSSI (overhearing resolution),
* people density per gateway and window,
* dwell durations and their histogram,
* observed trajectories, fed to the LCS matching in :mod:`senseflow.trajectory`.

All analytics are pure reads of the store.
"""

from __future__ import annotations

import logging
import math
import os
import socketserver
import tempfile
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .agent import spool_name
from .domain import DatasetPacket, MacAddress, PacketError, deserialize_packet, serialize_packet
from .trajectory import Trajectory

log = logging.getLogger(__name__)


class ConflictError(ValueError):
    """A packet with the same (gateway, period) but different content exists."""


class PacketStore:
    """Packets indexed by ``(gateway, period_start)``.

    With a ``directory`` every newly ingested packet is also persisted as a
    spool-style file, and :meth:`open` reloads such a directory.
    """

    def __init__(self, directory=None):
        self._packets: dict[tuple[int, float], DatasetPacket] = {}
        self.watermark: dict[int, float] = {}
        self._lock = threading.Lock()
        self.directory = Path(directory) if directory is not None else None
        if self.directory is not None:
            self.directory.mkdir(parents=True, exist_ok=True)

    @classmethod
    def open(cls, directory) -> "PacketStore":
        store = cls()
        for path in sorted(Path(directory).glob("*.ndjson")):
            store.ingest(deserialize_packet(path.read_bytes()))
        store.directory = Path(directory)
        return store

    def __len__(self) -> int:
        return len(self._packets)

    def __contains__(self, key) -> bool:
        return key in self._packets

    def ingest(self, p: DatasetPacket) -> "PacketStore":
        with self._lock:
            existing = self._packets.get(p.key)
            if existing is not None:
                if existing != p:
                    raise ConflictError(f"conflicting packet for gateway {p.gn} period {p.period_start}")
                return self
            self._packets[p.key] = p
            self.watermark[p.gn] = max(self.watermark.get(p.gn, p.period_end), p.period_end)
            if self.directory is not None:
                self._persist(p)
        return self

    def ingest_bytes(self, data: bytes) -> DatasetPacket:
        p = deserialize_packet(data)
        self.ingest(p)
        return p

    def _persist(self, p: DatasetPacket) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".part")
        with os.fdopen(fd, "wb") as fh:
            fh.write(serialize_packet(p))
        os.replace(tmp, self.directory / spool_name(p.gn, p.period_start))

    def packets(self, start: Optional[float] = None, end: Optional[float] = None) -> list[DatasetPacket]:
        """Packets whose period intersects ``[start, end)``, in key order."""
        out = [
            p
            for p in self._packets.values()
            if (start is None or p.period_end >= start) and (end is None or p.period_start < end)
        ]
        out.sort(key=lambda p: p.key)
        return out

    def gateways(self) -> list[int]:
        return sorted({gn for gn, _ in self._packets})

    def span(self) -> Optional[tuple[float, float]]:
        if not self._packets:
            return None
        return (
            min(p.period_start for p in self._packets.values()),
            max(p.period_end for p in self._packets.values()),
        )


def _resolve_range(store: PacketStore, start, end) -> Optional[tuple[float, float]]:
    span = store.span()
    if span is None and (start is None or end is None):
        return None
    start = span[0] if start is None else float(start)
    end = span[1] if end is None else float(end)
    if end < start:
        raise ValueError("range end precedes start")
    return start, end


def window_count(start: float, end: float, t_win: float) -> int:
    if t_win <= 0:
        raise ValueError("t_win must be positive")
    n = max(0, math.ceil((end - start) / t_win))
    while start + n * t_win < end:
        n += 1
    while n > 0 and start + (n - 1) * t_win >= end:
        n -= 1
    return n


def _window_index(ts: float, start: float, t_win: float, n: int) -> int:
    # largest k with start + k * t_win <= ts, consistent with the float window edges
    k = math.floor((ts - start) / t_win)
    k = min(max(k, 0), n - 1)
    while k + 1 < n and start + (k + 1) * t_win <= ts:
        k += 1
    while k > 0 and start + k * t_win > ts:
        k -= 1
    return k


@dataclass(frozen=True)
class Placement:
    mac: MacAddress
    window_start: float
    gn: int
    winning_rssi: float


def resolve_placements(
    store: PacketStore,
    t_win: float,
    start: Optional[float] = None,
    end: Optional[float] = None,
    macs: Optional[Iterable[MacAddress]] = None,
) -> list[Placement]:
    """Assign every observed (MAC, window) to its strongest gateway.

    Windows ``[start + k*t_win, start + (k+1)*t_win)`` tile the range; a
    record ``[first_ts, last_ts]`` is present in every window it overlaps.
    A gateway's value in a window is the plain mean of its overlapping
    records' average RSSI. Ties go to the smallest gateway id.
    """
    if t_win <= 0:
        raise ValueError("t_win must be positive")
    rng = _resolve_range(store, start, end)
    if rng is None:
        return []
    start, end = rng
    n = window_count(start, end, t_win)
    if n == 0:
        return []
    wanted = None if macs is None else set(macs)

    # (mac, window, gn) -> [sum in tenths of dBm, count]; integer sums keep ties exact
    acc: dict[tuple[MacAddress, int, int], list[int]] = defaultdict(lambda: [0, 0])
    for p in store.packets(start, end):
        for r in p.records:
            if wanted is not None and r.mac not in wanted:
                continue
            if r.last_ts < start or r.first_ts >= start + n * t_win:
                continue
            lo = _window_index(r.first_ts, start, t_win, n)
            hi = _window_index(r.last_ts, start, t_win, n)
            tenths = round(r.avg_rssi * 10)
            for k in range(lo, hi + 1):
                slot = acc[(r.mac, k, p.gn)]
                slot[0] += tenths
                slot[1] += 1

    best: dict[tuple[MacAddress, int], tuple[int, int, int]] = {}
    for (mac, k, gn), (total, count) in acc.items():
        cur = best.get((mac, k))
        if cur is None:
            best[(mac, k)] = (gn, total, count)
            continue
        cgn, ctotal, ccount = cur
        lhs, rhs = total * ccount, ctotal * count
        if lhs > rhs or (lhs == rhs and gn < cgn):
            best[(mac, k)] = (gn, total, count)

    out = [
        Placement(mac, start + k * t_win, gn, total / count / 10.0)
        for (mac, k), (gn, total, count) in best.items()
    ]
    out.sort(key=lambda pl: (pl.window_start, pl.mac))
    return out


@dataclass
class DensitySeries:
    """Unique-MAC counts per (gateway, window); ``counts[g, w]``."""

    t_win: float
    window_starts: np.ndarray
    gateways: tuple[int, ...]
    counts: np.ndarray

    def count(self, gn: int, window_start: float) -> int:
        g = self.gateways.index(gn)
        w = int(np.flatnonzero(np.isclose(self.window_starts, window_start))[0])
        return int(self.counts[g, w])

    def series(self, gn: int) -> list[tuple[float, int]]:
        g = self.gateways.index(gn)
        return [(float(t), int(c)) for t, c in zip(self.window_starts, self.counts[g])]

    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def grouped(self, groups: Mapping[str, Sequence[int]]) -> dict[str, np.ndarray]:
        """Sum gateway rows into named groups (e.g. rooms or locations)."""
        out = {}
        for name, gns in groups.items():
            rows = [self.gateways.index(g) for g in gns if g in self.gateways]
            out[name] = self.counts[rows].sum(axis=0) if rows else np.zeros(len(self.window_starts), dtype=int)
        return out

    def rows(self) -> list[dict]:
        return [
            {"gn": gn, "window_start": float(t), "count": int(c)}
            for g, gn in enumerate(self.gateways)
            for t, c in zip(self.window_starts, self.counts[g])
        ]


def density(
    store: PacketStore,
    t_win: float,
    start: Optional[float] = None,
    end: Optional[float] = None,
    placements: Optional[list[Placement]] = None,
) -> DensitySeries:
    """People density: distinct placed MACs per gateway and window."""
    rng = _resolve_range(store, start, end)
    gateways = tuple(store.gateways())
    if rng is None:
        return DensitySeries(t_win, np.zeros(0), gateways, np.zeros((len(gateways), 0), dtype=int))
    start, end = rng
    n = window_count(start, end, t_win)
    window_starts = start + np.arange(n) * t_win
    if placements is None:
        placements = resolve_placements(store, t_win, start, end)
    extra = sorted({pl.gn for pl in placements} - set(gateways))
    gateways = gateways + tuple(extra)
    counts = np.zeros((len(gateways), n), dtype=int)
    index = {gn: i for i, gn in enumerate(gateways)}
    for pl in placements:
        w = round((pl.window_start - start) / t_win)
        counts[index[pl.gn], w] += 1
    return DensitySeries(t_win, window_starts, gateways, counts)


DEFAULT_DWELL_EDGES = tuple(range(0, 5401, 600))


@dataclass
class DwellReport:
    """Connection time per (gateway, MAC) and a per-gateway histogram.

    Bucket ``i`` counts durations in ``[edges[i], edges[i+1])``; the last
    bucket is open-ended.
    """

    durations: dict[tuple[int, MacAddress], float]
    edges: tuple[float, ...]
    histogram: dict[int, np.ndarray] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        return [
            {"gn": gn, "mac": str(mac), "duration": d}
            for (gn, mac), d in sorted(self.durations.items(), key=lambda kv: (kv[0][0], kv[0][1]))
        ]

    def histogram_rows(self) -> list[dict]:
        return [
            {"gn": gn, "bucket": float(self.edges[i]), "count": int(c)}
            for gn in sorted(self.histogram)
            for i, c in enumerate(self.histogram[gn])
        ]


def dwell_durations(
    store: PacketStore,
    start: Optional[float] = None,
    end: Optional[float] = None,
    floor: float = 0.0,
    edges: Sequence[float] = DEFAULT_DWELL_EDGES,
) -> DwellReport:
    """Sum of record spans per (gateway, MAC), clipped to the range.

    Zero-length records count ``floor`` seconds.
    """
    edges = tuple(float(e) for e in edges)
    if list(edges) != sorted(edges) or len(edges) < 1:
        raise ValueError("histogram edges must be ascending")
    durations: dict[tuple[int, MacAddress], float] = defaultdict(float)
    for p in store.packets(start, end):
        for r in p.records:
            f = r.first_ts if start is None else max(r.first_ts, start)
            l = r.last_ts if end is None else min(r.last_ts, end)
            if l < f or (end is not None and r.first_ts >= end):
                continue
            span = l - f
            durations[(p.gn, r.mac)] += span if span > 0 else floor
    durations = dict(durations)
    histogram = {}
    for gn in {gn for gn, _ in durations} | set(store.gateways()):
        values = np.array([d for (g, _), d in durations.items() if g == gn])
        idx = np.searchsorted(np.asarray(edges), values, side="right") - 1
        counts = np.zeros(len(edges), dtype=int)
        np.add.at(counts, idx[idx >= 0], 1)
        histogram[gn] = counts
    return DwellReport(durations, edges, histogram)


def trajectories_from_placements(
    placements: Iterable[Placement], locations: Optional[Mapping[int, int]] = None
) -> dict[MacAddress, Trajectory]:
    by_mac: dict[MacAddress, list[Placement]] = defaultdict(list)
    for pl in placements:
        by_mac[pl.mac].append(pl)
    out = {}
    for mac, pls in by_mac.items():
        pls.sort(key=lambda pl: pl.window_start)
        steps = [pl.gn if locations is None else locations.get(pl.gn, pl.gn) for pl in pls]
        out[mac] = Trajectory(tuple(steps), tuple(pl.window_start for pl in pls))
    return out


def observed_trajectory(
    store: PacketStore,
    mac: MacAddress,
    t_win: float,
    start: Optional[float] = None,
    end: Optional[float] = None,
    locations: Optional[Mapping[int, int]] = None,
) -> Trajectory:
    """Time-ordered gateway ids of a MAC's placements, repeats collapsed.

    ``locations`` relabels gateway ids (e.g. co-located gateways to one
    location id) before collapsing.
    """
    placements = resolve_placements(store, t_win, start, end, macs=[mac])
    return trajectories_from_placements(placements, locations).get(mac, Trajectory(times=()))


def observed_trajectories(
    store: PacketStore,
    t_win: float,
    start: Optional[float] = None,
    end: Optional[float] = None,
    locations: Optional[Mapping[int, int]] = None,
) -> dict[MacAddress, Trajectory]:
    return trajectories_from_placements(resolve_placements(store, t_win, start, end), locations)


def ingest_spool(store: PacketStore, spool_dir, seen: Optional[set] = None) -> tuple[int, list[str]]:
    """Ingest packet files not yet seen from a spool directory.

    Returns the number of packets ingested and a list of per-file errors;
    bad files are skipped, not retried.
    """
    seen = set() if seen is None else seen
    ingested, errors = 0, []
    for path in sorted(Path(spool_dir).glob("*.ndjson")):
        if path.name in seen:
            continue
        seen.add(path.name)
        try:
            store.ingest_bytes(path.read_bytes())
            ingested += 1
        except (PacketError, ConflictError, OSError) as exc:
            errors.append(f"{path.name}: {exc}")
            log.warning("rejected %s: %s", path.name, exc)
    return ingested, errors


class _PacketHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                self.server.store.ingest_bytes(line)
                self.server.received += 1
            except (PacketError, ConflictError) as exc:
                self.server.errors.append(str(exc))
                log.warning("rejected packet from %s: %s", self.client_address, exc)


class PacketServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    """TCP listener accepting newline-delimited packets into a store."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], store: PacketStore):
        super().__init__(address, _PacketHandler)
        self.store = store
        self.received = 0
        self.errors: list[str] = []
