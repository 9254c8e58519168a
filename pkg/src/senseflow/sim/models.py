"""Phone, mobility and radio channel models for the simulator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..domain import RSSI_MAX, RSSI_MIN

OPERATING_SYSTEMS = ("iOS", "Android", "Windows")

# Average probe request interval in seconds, keyed by
# (os, wifi_registered, screen_on).
PROBE_INTERVALS: dict[tuple[str, bool, bool], float] = {
    ("iOS", False, True): 70.6,
    ("iOS", False, False): 109.8,
    ("iOS", True, True): 1200.8,
    ("iOS", True, False): 1204.4,
    ("Android", False, True): 0.8,
    ("Android", False, False): 1.0,
    ("Android", True, True): 2.11,
    ("Android", True, False): 2.15,
    ("Windows", False, True): 10.9,
    ("Windows", False, False): 13.9,
    ("Windows", True, True): 1200.8,
    ("Windows", True, False): 1204.4,
}

SPEEDS = {"slow": 1.25, "normal": 2.25, "jog": 2.6, "run": 4.5}


def normalize_os(name: str) -> str:
    for os_name in OPERATING_SYSTEMS:
        if name.lower() == os_name.lower():
            return os_name
    raise ValueError(f"unknown OS {name!r}; expected one of {', '.join(OPERATING_SYSTEMS)}")


@dataclass(frozen=True)
class Mode:
    """Operational mode: screen on/off and Wi-Fi registered or not."""

    screen_on: bool
    wifi_registered: bool

    @property
    def name(self) -> str:
        return ("R" if self.wifi_registered else "NR") + "WifiScr" + ("On" if self.screen_on else "Off")

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        if isinstance(value, dict):
            screen = str(value["screen"]).lower()
            wifi = str(value["wifi"]).lower().replace("_", "-")
            if screen not in ("on", "off") or wifi not in ("registered", "non-registered"):
                raise ValueError(f"bad mode {value!r}")
            return cls(screen == "on", wifi == "registered")
        for mode in ALL_MODES:
            if str(value).lower() == mode.name.lower():
                return mode
        raise ValueError(f"unknown mode {value!r}; expected one of {', '.join(m.name for m in ALL_MODES)}")

    def __str__(self) -> str:
        return self.name


ALL_MODES = (
    Mode(screen_on=True, wifi_registered=False),
    Mode(screen_on=False, wifi_registered=False),
    Mode(screen_on=True, wifi_registered=True),
    Mode(screen_on=False, wifi_registered=True),
)


@dataclass(frozen=True)
class PhoneModel:
    """Probe emission behaviour of one phone.

    ``mean_probe_interval`` and ``radio_off_when_screen_off`` default from
    the OS and mode: intervals from :data:`PROBE_INTERVALS`, and Windows
    phones switch their radio off when the screen is off.
    """

    os: str
    mode: Mode
    mean_probe_interval: Optional[float] = None
    jitter_fraction: float = 0.1
    radio_off_when_screen_off: Optional[bool] = None
    burst_size: int = 1
    burst_spacing: float = 0.02

    def __post_init__(self) -> None:
        object.__setattr__(self, "os", normalize_os(self.os))
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if self.mean_probe_interval is None:
            key = (self.os, self.mode.wifi_registered, self.mode.screen_on)
            object.__setattr__(self, "mean_probe_interval", PROBE_INTERVALS[key])
        if self.radio_off_when_screen_off is None:
            object.__setattr__(self, "radio_off_when_screen_off", self.os == "Windows")
        if not self.mean_probe_interval > 0:
            raise ValueError("mean_probe_interval must be positive")
        if not 0 <= self.jitter_fraction < 1:
            raise ValueError("jitter_fraction must be in [0, 1)")
        if self.burst_size < 1:
            raise ValueError("burst_size must be at least 1")

    @property
    def radio_on(self) -> bool:
        return self.mode.screen_on or not self.radio_off_when_screen_off


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class MobilityPlan:
    """Stationary presence at one point, or a constant-speed waypoint walk.

    A walk starts at ``start_time`` and the phone disappears once it reaches
    the last waypoint. A stationary phone is present from ``start_time`` to
    ``end_time`` (``None``: until the end of the scenario), or during each of
    the ``presence`` intervals when those are given.
    """

    kind: str
    positions: tuple[tuple[float, float], ...]
    speed: Optional[float] = None
    start_time: float = 0.0
    end_time: Optional[float] = None
    presence: Optional[tuple[tuple[float, float], ...]] = None

    def __post_init__(self) -> None:
        pts = tuple((float(x), float(y)) for x, y in self.positions)
        object.__setattr__(self, "positions", pts)
        if self.kind == "stationary":
            if len(pts) != 1:
                raise GeometryError("a stationary plan has exactly one position")
            if self.end_time is not None and self.end_time < self.start_time:
                raise GeometryError("end_time precedes start_time")
            if self.presence is not None:
                ivs = tuple((float(a), float(b)) for a, b in self.presence)
                if not ivs:
                    raise GeometryError("presence needs at least one interval")
                for (a, b), nxt in zip(ivs, ivs[1:] + ((math.inf, math.inf),)):
                    if not a < b <= nxt[0]:
                        raise GeometryError("presence intervals must be ordered and disjoint")
                object.__setattr__(self, "presence", ivs)
                object.__setattr__(self, "start_time", ivs[0][0])
                object.__setattr__(self, "end_time", ivs[-1][1])
        elif self.kind == "walk":
            if len(pts) < 2:
                raise GeometryError("a walk needs at least two waypoints")
            if self.speed is None or not self.speed > 0:
                raise GeometryError("a walk needs a positive speed")
        else:
            raise GeometryError(f"unknown mobility kind {self.kind!r}")

    @classmethod
    def stationary(cls, position, start_time=0.0, end_time=None, presence=None) -> "MobilityPlan":
        return cls("stationary", (tuple(position),), None, start_time, end_time, presence)

    @classmethod
    def walk(cls, waypoints, speed, start_time=0.0) -> "MobilityPlan":
        if isinstance(speed, str):
            speed = SPEEDS[speed]
        return cls("walk", tuple(tuple(p) for p in waypoints), float(speed), start_time)

    def timeline(self, scenario_end: float) -> tuple[np.ndarray, np.ndarray]:
        """Knot times and positions of the piecewise-linear path."""
        pts = np.array(self.positions, dtype=float)
        if self.kind == "stationary":
            end = scenario_end if self.end_time is None else min(self.end_time, scenario_end)
            end = max(end, self.start_time)
            return np.array([self.start_time, end]), np.vstack([pts, pts])
        seg = np.hypot(*np.diff(pts, axis=0).T)
        times = self.start_time + np.concatenate([[0.0], np.cumsum(seg)]) / self.speed
        return times, pts

    def active_intervals(self, scenario_end: float) -> list[tuple[float, float]]:
        """Intervals during which the phone exists, clipped to the scenario end."""
        if self.presence is not None:
            ivs = self.presence
        else:
            times, _ = self.timeline(scenario_end)
            ivs = ((float(times[0]), float(times[-1])),)
        return [(a, min(b, scenario_end)) for a, b in ivs if a < scenario_end and min(b, scenario_end) > a]

    def position_at(self, t, scenario_end: float) -> np.ndarray:
        times, pts = self.timeline(scenario_end)
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, times, pts[:, 0]), np.interp(t, times, pts[:, 1])], axis=-1)


@dataclass(frozen=True)
class ChannelModel:
    """Log-distance path loss with Gaussian shadowing and a hard coverage edge."""

    rssi_at_reference: float = -40.0
    path_loss_exponent: float = 2.7
    shadowing_sigma: float = 4.0
    coverage_radius: float = 30.0
    reference_distance: float = 1.0

    def __post_init__(self) -> None:
        if self.shadowing_sigma < 0 or self.coverage_radius <= 0 or self.reference_distance <= 0:
            raise ValueError("invalid channel parameters")

    def expected_rssi(self, distance) -> np.ndarray:
        d = np.maximum(np.asarray(distance, dtype=float), self.reference_distance)
        return self.rssi_at_reference - 10.0 * self.path_loss_exponent * np.log10(d / self.reference_distance)

    @staticmethod
    def clamp(rssi) -> np.ndarray:
        return np.clip(rssi, RSSI_MIN, RSSI_MAX)


def segment_disk_intervals(t0, t1, p0, p1, center, radius) -> Optional[tuple[float, float]]:
    """Sub-interval of ``[t0, t1]`` during which a linear motion is inside a disk."""
    p0, p1, c = np.asarray(p0, float), np.asarray(p1, float), np.asarray(center, float)
    if t1 <= t0:
        return (t0, t1) if np.hypot(*(p0 - c)) <= radius else None
    v = (p1 - p0) / (t1 - t0)
    w = p0 - c
    a = float(v @ v)
    b = 2.0 * float(v @ w)
    cc = float(w @ w) - radius * radius
    if a == 0.0:
        return (t0, t1) if cc <= 0 else None
    disc = b * b - 4 * a * cc
    if disc < 0:
        return None
    root = math.sqrt(disc)
    lo = t0 + (-b - root) / (2 * a)
    hi = t0 + (-b + root) / (2 * a)
    lo, hi = max(lo, t0), min(hi, t1)
    return (lo, hi) if lo <= hi else None


def segment_rect_interval(t0, t1, p0, p1, bounds: Sequence[float]) -> Optional[tuple[float, float]]:
    """Sub-interval of ``[t0, t1]`` during which a linear motion is inside a rectangle."""
    xmin, ymin, xmax, ymax = bounds
    lo, hi = 0.0, 1.0
    d = (p1[0] - p0[0], p1[1] - p0[1])
    for delta, start, low, high in ((d[0], p0[0], xmin, xmax), (d[1], p0[1], ymin, ymax)):
        if delta == 0:
            if not (low <= start <= high):
                return None
            continue
        a, b = (low - start) / delta, (high - start) / delta
        if a > b:
            a, b = b, a
        lo, hi = max(lo, a), min(hi, b)
        if lo > hi:
            return None
    return (t0 + lo * (t1 - t0), t0 + hi * (t1 - t0))
