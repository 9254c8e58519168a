"""Probe event capture files: CSV with header ``ts,mac,rssi,gn``."""

from __future__ import annotations

import csv
import io
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .domain import MacAddress, ProbeEvent

HEADER = ["ts", "mac", "rssi", "gn"]


class CaptureFormatError(ValueError):
    pass


@lru_cache(maxsize=65536)
def _mac(text: str) -> MacAddress:
    return MacAddress.parse(text)


def format_event(e: ProbeEvent) -> str:
    return f"{e.ts:.3f},{e.mac},{e.rssi:.1f},{e.gn}\n"


def write_capture(events: Iterable[ProbeEvent], dest) -> int:
    """Write events to a path or text stream; returns the number written."""
    if isinstance(dest, (str, Path)):
        with open(dest, "w", newline="") as fh:
            return write_capture(events, fh)
    dest.write(",".join(HEADER) + "\n")
    n = 0
    for e in events:
        dest.write(format_event(e))
        n += 1
    return n


def iter_capture(source, gn: Optional[int] = None) -> Iterator[ProbeEvent]:
    """Stream events from a capture file, optionally keeping one gateway."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as fh:
            yield from iter_capture(fh, gn)
        return
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None:
        return
    if [h.strip() for h in header] != HEADER:
        raise CaptureFormatError(f"expected header {','.join(HEADER)}, got {','.join(header)}")
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise CaptureFormatError(f"line {lineno}: expected 4 fields, got {len(row)}")
        try:
            g = int(row[3])
            if gn is not None and g != gn:
                continue
            yield ProbeEvent(_mac(row[1]), float(row[0]), float(row[2]), g)
        except ValueError as exc:
            raise CaptureFormatError(f"line {lineno}: {exc}") from exc


def read_capture(source, gn: Optional[int] = None) -> list[ProbeEvent]:
    return list(iter_capture(source, gn))


def capture_text(events: Iterable[ProbeEvent]) -> str:
    buf = io.StringIO()
    write_capture(events, buf)
    return buf.getvalue()
