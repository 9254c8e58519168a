"""
Gateway agent
=============

Per-gateway collection: probes of the same phone are merged into one
contact record while consecutive probes arrive less than ``t_interval``
apart, and every ``t_dataset`` seconds the gateway emits a dataset packet
holding the finalized records of that period.

Period boundaries are derived from event timestamps so that replaying a
capture file is deterministic.
"""

from __future__ import annotations

import logging
import math
import os
import socket
import tempfile
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .capture import CaptureFormatError
from .domain import (
    CollectionConfig,
    ContactRecord,
    DatasetPacket,
    MacAddress,
    ProbeEvent,
    serialize_packet,
)

log = logging.getLogger(__name__)


class OrderingError(ValueError):
    """An event arrived with a timestamp earlier than the previous one."""


class RoutingError(ValueError):
    """An event tagged with another gateway was fed to this agent."""


class PeriodError(ValueError):
    """An event lies beyond the open period; the period must be flushed first."""


class GatewayAgent:
    """Sequential collection state machine for one gateway.

    Open records are kept as mutable ``[first_ts, last_ts, rssi_sum, count]``
    lists for speed; :attr:`open_records` exposes them as
    :class:`ContactRecord` values.
    """

    def __init__(self, config: CollectionConfig, gn: int, start: Optional[float] = None):
        self.config = config
        self.gn = gn
        self.current_period_start: Optional[float] = start
        self._open: dict[MacAddress, list] = {}
        self._closed: list[ContactRecord] = []
        self._last_ts: Optional[float] = None
        self.events_ingested = 0
        # totals over emitted packets; probes_emitted is the sum of probe counts
        self.records_emitted = 0
        self.probes_emitted = 0

    @property
    def period_end(self) -> Optional[float]:
        if self.current_period_start is None:
            return None
        return self.current_period_start + self.config.t_dataset

    @property
    def open_records(self) -> dict[MacAddress, ContactRecord]:
        return {m: ContactRecord(m, r[0], r[1], r[2], r[3]) for m, r in self._open.items()}

    @property
    def closed_records(self) -> list[ContactRecord]:
        return list(self._closed)

    def _align(self, ts: float) -> float:
        return math.floor(ts / self.config.t_dataset) * self.config.t_dataset

    def ingest_probe(self, e: ProbeEvent) -> None:
        if e.gn != self.gn:
            raise RoutingError(f"event for gateway {e.gn} fed to agent of gateway {self.gn}")
        if self._last_ts is not None and e.ts < self._last_ts:
            raise OrderingError(f"event at {e.ts} after {self._last_ts}")
        if self.current_period_start is None:
            self.current_period_start = self._align(e.ts)
        if e.ts < self.current_period_start:
            raise OrderingError(f"event at {e.ts} precedes period start {self.current_period_start}")
        if e.ts >= self.period_end:
            raise PeriodError(f"event at {e.ts} is past period end {self.period_end}")
        self._last_ts = e.ts
        self.events_ingested += 1

        rec = self._open.get(e.mac)
        if rec is None:
            self._open[e.mac] = [e.ts, e.ts, e.rssi, 1]
        elif e.ts - rec[1] < self.config.t_interval:
            rec[1] = e.ts
            rec[2] += e.rssi
            rec[3] += 1
        else:
            self._closed.append(ContactRecord(e.mac, rec[0], rec[1], rec[2], rec[3]))
            self._open[e.mac] = [e.ts, e.ts, e.rssi, 1]

    def _emit(self, period_end: float) -> DatasetPacket:
        records = self._closed + list(self.open_records.values())
        views = sorted((r.finalize() for r in records), key=lambda v: (v.first_ts, v.mac.octets))
        packet = DatasetPacket(self.gn, self.current_period_start, period_end, tuple(views))
        self.records_emitted += len(records)
        self.probes_emitted += sum(r.probe_count for r in records)
        self._open.clear()
        self._closed = []
        self.current_period_start = packet.period_end
        return packet

    def flush_period(self, now: float) -> DatasetPacket:
        """Close the current period; ``now`` must have reached its end."""
        if self.current_period_start is None:
            raise PeriodError("no period open yet")
        end = self.period_end
        if now < end:
            raise PeriodError(f"flush at {now} before period end {end}")
        return self._emit(end)

    def close(self, until: Optional[float] = None) -> DatasetPacket:
        """Emit the final, possibly shortened, packet of a stream."""
        if self.current_period_start is None:
            raise PeriodError("no period open yet")
        end = self.period_end if until is None else min(until, self.period_end)
        if self._last_ts is not None and end < self._last_ts:
            raise PeriodError(f"close at {end} precedes last event at {self._last_ts}")
        return self._emit(end)


class MemorySink:
    """Collects packets in memory; safe for concurrent writers."""

    def __init__(self):
        self.packets: list[DatasetPacket] = []
        self.payloads: list[bytes] = []
        self._lock = threading.Lock()

    def send(self, packet: DatasetPacket, payload: bytes) -> None:
        with self._lock:
            self.packets.append(packet)
            self.payloads.append(payload)

    def close(self) -> None:
        pass


def spool_name(gn: int, period_start: float) -> str:
    return f"{gn}_{period_start:.3f}.ndjson"


class SpoolSink:
    """Writes one ``<gn>_<period_start>.ndjson`` file per packet.

    Files are written to a temporary name and renamed into place, so readers
    never see partial packets.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def send(self, packet: DatasetPacket, payload: bytes) -> None:
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, self.directory / spool_name(packet.gn, packet.period_start))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def close(self) -> None:
        pass


class StreamSink:
    """Sends packets as newline-delimited JSON over a TCP connection."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self.address = (host, port)
        self.timeout = timeout
        self._sock: Optional[socket.socket] = None

    def send(self, packet: DatasetPacket, payload: bytes) -> None:
        if self._sock is None:
            self._sock = socket.create_connection(self.address, timeout=self.timeout)
        self._sock.sendall(payload)

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None


def open_sink(target: str):
    """Sink for a CLI ``--out`` value: ``tcp://host:port``, ``host:port`` or a directory."""
    if target.startswith("tcp://"):
        target = target[len("tcp://"):]
        host, _, port = target.rpartition(":")
        return StreamSink(host, int(port))
    host, sep, port = target.rpartition(":")
    if sep and port.isdigit() and host and "/" not in host:
        return StreamSink(host, int(port))
    return SpoolSink(target)


@dataclass
class AgentSummary:
    packets_emitted: int = 0
    events_ingested: int = 0
    bytes_uploaded: int = 0
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_agent(
    config: CollectionConfig,
    gn: int,
    probe_source: Iterable[ProbeEvent],
    sink,
    start: Optional[float] = None,
    until: Optional[float] = None,
) -> AgentSummary:
    """Drive one gateway agent over a time-ordered event source.

    ``start`` pins the first period start (otherwise the first event's
    timestamp is floored to a multiple of ``t_dataset``); ``until`` marks the
    end of the stream, after which the last packet is cut short. Routing and
    ordering violations raise; I/O failures of the source or sink stop the
    agent and are reported in the summary.
    """
    agent = GatewayAgent(config, gn, start)
    summary = AgentSummary()

    def emit(packet: DatasetPacket) -> None:
        payload = serialize_packet(packet)
        sink.send(packet, payload)
        summary.packets_emitted += 1
        summary.bytes_uploaded += len(payload)

    try:
        for e in probe_source:
            if until is not None and e.ts >= until:
                raise PeriodError(f"event at {e.ts} is at or past stream end {until}")
            while agent.period_end is not None and e.ts >= agent.period_end:
                emit(agent.flush_period(agent.period_end))
            agent.ingest_probe(e)
            summary.events_ingested += 1
        if agent.current_period_start is not None:
            if until is None:
                emit(agent.close())
            else:
                while agent.period_end <= until:
                    emit(agent.flush_period(agent.period_end))
                if agent.current_period_start < until:
                    emit(agent.close(until))
    except (OSError, CaptureFormatError) as exc:
        log.warning("agent for gateway %d stopped: %s", gn, exc)
        summary.error = f"{type(exc).__name__}: {exc}"
    finally:
        try:
            sink.close()
        except OSError as exc:
            summary.error = summary.error or f"{type(exc).__name__}: {exc}"
    return summary
