"""
Domain types
============

Value types shared by the gateway agent, the analytics server and the
simulator, plus the newline-delimited JSON wire format for dataset packets.

Timestamps are seconds since the Unix epoch carried as floats with
millisecond precision. RSSI values are dBm.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

SCHEMA_VERSION = 1
RSSI_MIN = -120.0
RSSI_MAX = 0.0


class PacketError(ValueError):
    """Base class for dataset packet decoding failures."""


class MalformedPacketError(PacketError):
    def __init__(self, field_name: str, detail: str = ""):
        self.field = field_name
        msg = f"malformed packet: field {field_name!r}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class InvariantViolationError(PacketError):
    def __init__(self, index: Optional[int], detail: str):
        self.index = index
        where = "packet" if index is None else f"record {index}"
        super().__init__(f"invariant violation in {where}: {detail}")


class SchemaVersionError(PacketError):
    pass


def quantize_ts(ts: float) -> float:
    """Round a timestamp to the millisecond grid used on the wire."""
    return float(f"{ts:.3f}")


def quantize_rssi(rssi: float) -> float:
    return float(f"{rssi:.1f}")


@dataclass(frozen=True, order=True)
class MacAddress:
    """A 48-bit hardware address; canonical text is lowercase colon-separated."""

    octets: bytes

    def __post_init__(self) -> None:
        if not isinstance(self.octets, (bytes, bytearray)) or len(self.octets) != 6:
            raise ValueError("MAC address must be exactly 6 bytes")
        if isinstance(self.octets, bytearray):
            object.__setattr__(self, "octets", bytes(self.octets))

    @classmethod
    def parse(cls, text: str) -> "MacAddress":
        parts = text.strip().replace("-", ":").split(":")
        if len(parts) != 6 or any(len(p) != 2 for p in parts):
            raise ValueError(f"invalid MAC address: {text!r}")
        try:
            return cls(bytes(int(p, 16) for p in parts))
        except ValueError:
            raise ValueError(f"invalid MAC address: {text!r}") from None

    @classmethod
    def from_int(cls, value: int) -> "MacAddress":
        return cls(value.to_bytes(6, "big"))

    def __str__(self) -> str:
        return ":".join(f"{b:02x}" for b in self.octets)

    def __repr__(self) -> str:
        return f"MacAddress('{self}')"


def as_mac(value) -> MacAddress:
    if isinstance(value, MacAddress):
        return value
    return MacAddress.parse(value)


@dataclass(frozen=True)
class Gateway:
    """A deployed gateway node (GN).

    ``location`` groups co-located gateways; trajectories can be expressed in
    location ids instead of gateway ids.
    """

    id: int
    label: Optional[str] = None
    position: Optional[tuple[float, float]] = None
    location: Optional[int] = None

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("gateway id must be non-negative")
        if self.position is not None:
            object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


def check_unique_gateways(gateways: Iterable[Gateway]) -> None:
    seen = set()
    for g in gateways:
        if g.id in seen:
            raise ValueError(f"duplicate gateway id {g.id}")
        seen.add(g.id)


@dataclass(frozen=True)
class ProbeEvent:
    """One sniffed probe request."""

    mac: MacAddress
    ts: float
    rssi: float
    gn: int

    def __post_init__(self) -> None:
        if not (RSSI_MIN <= self.rssi <= RSSI_MAX):
            raise ValueError(f"rssi {self.rssi} outside [{RSSI_MIN}, {RSSI_MAX}]")


@dataclass(frozen=True)
class ContactRecord:
    """Probes of one MAC merged into a single contact at one gateway."""

    mac: MacAddress
    first_ts: float
    last_ts: float
    rssi_sum: float
    probe_count: int = 1

    def __post_init__(self) -> None:
        if self.first_ts > self.last_ts:
            raise ValueError("first_ts must not exceed last_ts")
        if self.probe_count < 1:
            raise ValueError("probe_count must be positive")
        if not (RSSI_MIN <= self.avg_rssi <= RSSI_MAX):
            raise ValueError("average rssi out of range")

    @classmethod
    def start(cls, e: ProbeEvent) -> "ContactRecord":
        return cls(e.mac, e.ts, e.ts, e.rssi, 1)

    def extend(self, e: ProbeEvent) -> "ContactRecord":
        return ContactRecord(self.mac, self.first_ts, e.ts, self.rssi_sum + e.rssi, self.probe_count + 1)

    @property
    def avg_rssi(self) -> float:
        return self.rssi_sum / self.probe_count

    def finalize(self) -> "RecordView":
        return RecordView(self.mac, self.first_ts, self.last_ts, self.avg_rssi)


@dataclass(frozen=True)
class RecordView:
    """A finalized record as carried in a dataset packet.

    Values are snapped to the wire precision on construction so that a
    packet always equals its own decoded serialization.
    """

    mac: MacAddress
    first_ts: float
    last_ts: float
    avg_rssi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "first_ts", quantize_ts(self.first_ts))
        object.__setattr__(self, "last_ts", quantize_ts(self.last_ts))
        object.__setattr__(self, "avg_rssi", quantize_rssi(self.avg_rssi))

    @property
    def span(self) -> float:
        return self.last_ts - self.first_ts


@dataclass(frozen=True)
class CollectionConfig:
    t_dataset: float
    t_interval: float

    def __post_init__(self) -> None:
        if not (self.t_dataset > 0 and self.t_interval > 0):
            raise ValueError("t_dataset and t_interval must be positive")


def _validate_records(period_start: float, period_end: float, records: Sequence[RecordView]) -> None:
    last_seen: dict[MacAddress, float] = {}
    for i, r in enumerate(records):
        if r.first_ts > r.last_ts:
            raise InvariantViolationError(i, "first_ts > last_ts")
        if not (RSSI_MIN <= r.avg_rssi <= RSSI_MAX):
            raise InvariantViolationError(i, f"avg_rssi {r.avg_rssi} out of range")
        if r.first_ts < period_start or r.last_ts > period_end:
            raise InvariantViolationError(i, "record outside packet period")
        prev = last_seen.get(r.mac)
        if prev is not None and r.first_ts <= prev:
            raise InvariantViolationError(i, f"records for {r.mac} overlap or are out of order")
        last_seen[r.mac] = r.last_ts


@dataclass(frozen=True)
class DatasetPacket:
    """One gateway's upload for one collection period."""

    gn: int
    period_start: float
    period_end: float
    records: tuple[RecordView, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        object.__setattr__(self, "period_start", quantize_ts(self.period_start))
        object.__setattr__(self, "period_end", quantize_ts(self.period_end))
        if self.gn < 0:
            raise InvariantViolationError(None, "gateway id must be non-negative")
        if self.period_end < self.period_start:
            raise InvariantViolationError(None, "period_end before period_start")
        _validate_records(self.period_start, self.period_end, self.records)

    @property
    def key(self) -> tuple[int, float]:
        return (self.gn, self.period_start)

    def overlaps(self, start: float, end: float) -> bool:
        return self.period_start < end and self.period_end >= start


def _num(x: float, digits: int) -> str:
    s = f"{x:.{digits}f}"
    return "0." + "0" * digits if s == "-0." + "0" * digits else s


def serialize_packet(p: DatasetPacket) -> bytes:
    """Encode a packet as one JSON line with a fixed field order."""
    recs = ",".join(
        '{"mac":"%s","first_ts":%s,"last_ts":%s,"avg_rssi":%s}'
        % (r.mac, _num(r.first_ts, 3), _num(r.last_ts, 3), _num(r.avg_rssi, 1))
        for r in p.records
    )
    line = '{"v":%d,"gn":%d,"period_start":%s,"period_end":%s,"records":[%s]}\n' % (
        SCHEMA_VERSION,
        p.gn,
        _num(p.period_start, 3),
        _num(p.period_end, 3),
        recs,
    )
    return line.encode("ascii")


def _field(obj: dict, name: str, kinds, where: str = ""):
    label = f"{where}{name}"
    if name not in obj:
        raise MalformedPacketError(label, "missing")
    value = obj[name]
    if isinstance(value, bool) or not isinstance(value, kinds):
        raise MalformedPacketError(label, f"unexpected type {type(value).__name__}")
    if isinstance(value, float) and not math.isfinite(value):
        raise MalformedPacketError(label, "not finite")
    return value


def deserialize_packet(data: bytes | str) -> DatasetPacket:
    """Decode one packet line produced by :func:`serialize_packet`."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPacketError("<bytes>", "not utf-8") from exc
    try:
        obj = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedPacketError("<document>", str(exc)) from exc
    if not isinstance(obj, dict):
        raise MalformedPacketError("<document>", "not an object")
    version = _field(obj, "v", int)
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(f"unsupported packet schema version {version}")
    gn = _field(obj, "gn", int)
    start = float(_field(obj, "period_start", (int, float)))
    end = float(_field(obj, "period_end", (int, float)))
    raw = _field(obj, "records", list)
    records = []
    for i, r in enumerate(raw):
        where = f"records[{i}]."
        if not isinstance(r, dict):
            raise MalformedPacketError(f"records[{i}]", "not an object")
        try:
            mac = MacAddress.parse(_field(r, "mac", str, where))
        except ValueError as exc:
            if isinstance(exc, PacketError):
                raise
            raise MalformedPacketError(where + "mac", str(exc)) from exc
        first = float(_field(r, "first_ts", (int, float), where))
        last = float(_field(r, "last_ts", (int, float), where))
        avg = float(_field(r, "avg_rssi", (int, float), where))
        if first > last:
            raise InvariantViolationError(i, "first_ts > last_ts")
        records.append(RecordView(mac, first, last, avg))
    return DatasetPacket(gn, start, end, tuple(records))
