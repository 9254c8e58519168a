"""
Canonical scenarios
===================

Builders for the deployments used by the examples and experiments. Geometry
(coverage radius, gateway spacing, room sizes) is an assumption of this
package, chosen to be plausible indoors; none of it is a measured value.

* ``lab``: one gateway in a lab for one day, researchers with office hours
  and breaks, corridor passers-by.
* ``city``: two gateways along a busy street for one day; mostly short
  passes, a few shop staff staying for hours.
* ``classroom``: four adjacent rooms with two gateways each and scheduled
  sessions; ideal radio (no shadowing) and dense-probing phones.
* ``speed_sweep``: one walk-through cell of the detection-rate experiment.
* ``flow_tracking``: seven locations with two co-located gateways each and
  phones walking the two target routes.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from ..domain import Gateway, MacAddress
from .engine import PhoneSpec, Region, Scenario
from .models import ALL_MODES, SPEEDS, ChannelModel, MobilityPlan, Mode, PhoneModel

HOUR = 3600.0
MINUTE = 60.0

# Location centres of the flow-tracking deployment, 55 m grid. Every leg of
# both target routes stays more than 30 m away from locations it does not
# connect, so a walker is only ever covered by the locations on its route.
FLOW_LOCATIONS = {
    1: (-55.0, 0.0),
    2: (0.0, 0.0),
    3: (55.0, 0.0),
    4: (55.0, 55.0),
    5: (0.0, 55.0),
    6: (27.5, 110.0),
    7: (121.0, 55.0),
}
FLOW_TARGETS = ((1, 2, 3, 4, 5, 6, 7), (1, 2, 5, 6, 4, 3, 7))

# one walker carrying 2 iOS, 2 Android and 1 Windows phone
WALKTHROUGH_PHONES = ("iOS", "iOS", "Android", "Android", "Windows")


def _mac(prefix: int, i: int) -> MacAddress:
    # locally administered unicast addresses
    return MacAddress.from_int((0x02 << 40) | (prefix << 24) | i)


def _pick(rng: np.random.Generator, options: Sequence, weights: Sequence[float]):
    return options[int(rng.choice(len(options), p=np.asarray(weights) / np.sum(weights)))]


def _minute(t: float) -> float:
    return round(t / MINUTE) * MINUTE


def lab_scenario(seed: int = 7, researchers: int = 20, passers_by: int = 150) -> Scenario:
    """One lab gateway over a day (00:00-24:00)."""
    rng = np.random.default_rng(seed)
    gateways = (Gateway(1, "M", (5.0, 4.0)),)
    os_mix, os_w = ("Android", "iOS", "Windows"), (0.45, 0.45, 0.10)
    modes = (Mode.parse("RWifiScrOff"), Mode.parse("RWifiScrOn"), Mode.parse("NRWifiScrOff"), Mode.parse("NRWifiScrOn"))
    mode_w = (0.5, 0.2, 0.2, 0.1)
    phones = []
    for i in range(researchers):
        arrive = _minute(rng.uniform(8.0, 10.5) * HOUR)
        leave = _minute(rng.uniform(17.0, 20.0) * HOUR)
        cuts = []
        if rng.random() < 0.7:
            lunch = _minute(rng.uniform(12.0, 13.0) * HOUR)
            cuts.append((lunch, lunch + _minute(rng.uniform(40, 75) * MINUTE)))
        for _ in range(int(rng.integers(1, 4))):
            t = _minute(rng.uniform(arrive + HOUR, leave - HOUR))
            cuts.append((t, t + _minute(rng.uniform(5, 29) * MINUTE)))
        presence, cursor = [], arrive
        for lo, hi in sorted(cuts):
            if lo > cursor:
                presence.append((cursor, lo))
            cursor = max(cursor, hi)
        if cursor < leave:
            presence.append((cursor, leave))
        desk = (float(rng.uniform(0.5, 9.5)), float(rng.uniform(0.5, 7.5)))
        model = PhoneModel(_pick(rng, os_mix, os_w), _pick(rng, modes, mode_w))
        phones.append(PhoneSpec(_mac(0x01, i), model, MobilityPlan.stationary(desk, presence=presence)))
    # an always-on device left in the lab
    phones.append(
        PhoneSpec(_mac(0x01, researchers), PhoneModel("Android", "RWifiScrOff"), MobilityPlan.stationary((9.0, 7.0)))
    )
    for j in range(passers_by):
        hour = rng.choice(np.arange(24), p=_daytime_profile())
        start = float(hour * HOUR + rng.uniform(0, HOUR))
        route = [(-40.0, -6.0), (50.0, -6.0)] if rng.random() < 0.5 else [(50.0, -6.0), (-40.0, -6.0)]
        model = PhoneModel(_pick(rng, os_mix, os_w), _pick(rng, ALL_MODES, (0.3, 0.3, 0.2, 0.2)))
        phones.append(PhoneSpec(_mac(0x02, j), model, MobilityPlan.walk(route, float(rng.uniform(1.0, 1.6)), start)))
    return Scenario(
        gateways,
        tuple(phones),
        ChannelModel(),
        duration=24 * HOUR,
        rng_seed=seed,
        regions=(Region("lab", (0.0, 0.0, 10.0, 8.0), (1,)),),
        truth_window=600.0,
        name="lab",
    )


def _daytime_profile() -> np.ndarray:
    # rush hours around 09:00, 12:00 and 18:00
    h = np.arange(24)
    w = 0.05 + sum(np.exp(-0.5 * ((h - c) / 1.0) ** 2) for c in (9, 12, 18))
    w[(h < 6)] *= 0.1
    return w / w.sum()


def city_scenario(seed: int = 11, pedestrians: int = 600, staff: int = 6) -> Scenario:
    """Gateways A and C, 60 m apart along a 240 m street, over one day."""
    rng = np.random.default_rng(seed)
    gateways = (Gateway(1, "A", (0.0, 3.0)), Gateway(3, "C", (60.0, 3.0)))
    os_mix, os_w = ("Android", "iOS", "Windows"), (0.5, 0.45, 0.05)
    phones = []
    profile = _daytime_profile()
    for i in range(pedestrians):
        start = float(rng.choice(24, p=profile) * HOUR + rng.uniform(0, HOUR))
        route = [(-90.0, 0.0), (150.0, 0.0)]
        if rng.random() < 0.5:
            route.reverse()
        if rng.random() < 0.3:
            # turns off the street between the gateways
            route = [route[0], (30.0, 0.0), (30.0, -120.0)]
        model = PhoneModel(_pick(rng, os_mix, os_w), _pick(rng, ALL_MODES, (0.25, 0.35, 0.15, 0.25)))
        speed = float(rng.choice([SPEEDS["slow"], SPEEDS["normal"]], p=[0.7, 0.3]))
        phones.append(PhoneSpec(_mac(0x03, i), model, MobilityPlan.walk(route, speed, start)))
    for k in range(staff):
        near = (float(rng.uniform(-10, 10)), 8.0) if k < staff - 1 else (62.0, 8.0)
        arrive = _minute(rng.uniform(8, 10) * HOUR)
        phones.append(
            PhoneSpec(
                _mac(0x04, k),
                PhoneModel("Android", "RWifiScrOff"),
                MobilityPlan.stationary(near, arrive, arrive + _minute(rng.uniform(2, 9) * HOUR)),
            )
        )
    return Scenario(
        gateways,
        tuple(phones),
        ChannelModel(),
        duration=24 * HOUR,
        rng_seed=seed,
        regions=(Region("A", (-30.0, -30.0, 30.0, 33.0), (1,)), Region("C", (30.0, -30.0, 90.0, 33.0), (3,))),
        name="city",
    )


def classroom_scenario(
    seed: int = 3,
    rooms: int = 4,
    sessions: int = 2,
    students: tuple[int, int] = (4, 8),
    duration: float = 6 * HOUR,
    shadowing_sigma: float = 0.0,
    os: str = "Android",
    mode: str = "NRWifiScrOn",
) -> Scenario:
    """Adjacent 12 m x 10 m rooms with two gateways each.

    Students sit at least 1.5 m from the walls, which keeps each of them
    strictly closest to a gateway of their own room. Arrivals and departures
    fall on whole minutes.
    """
    rng = np.random.default_rng(seed)
    width, depth = 12.0, 10.0
    gateways, regions, phones = [], [], []
    for r in range(rooms):
        x0 = r * width
        a, b = 2 * r + 1, 2 * r + 2
        gateways += [Gateway(a, f"room{r + 1}-a", (x0 + 3.0, 5.0), r + 1), Gateway(b, f"room{r + 1}-b", (x0 + 9.0, 5.0), r + 1)]
        regions.append(Region(f"room{r + 1}", (x0, 0.0, x0 + width, depth), (a, b)))
        slot = duration / sessions
        for s in range(sessions):
            begin = s * slot + _minute(rng.uniform(0.1, 0.3) * slot)
            end = s * slot + _minute(rng.uniform(0.75, 0.95) * slot)
            for _ in range(int(rng.integers(students[0], students[1] + 1))):
                arrive = _minute(begin + rng.uniform(-10, 10) * MINUTE)
                leave = _minute(end + rng.uniform(-10, 5) * MINUTE)
                seat = (x0 + float(rng.uniform(1.5, width - 1.5)), float(rng.uniform(1.5, depth - 1.5)))
                phones.append(
                    PhoneSpec(_mac(0x05, len(phones)), PhoneModel(os, mode), MobilityPlan.stationary(seat, arrive, leave))
                )
    return Scenario(
        tuple(gateways),
        tuple(phones),
        ChannelModel(shadowing_sigma=shadowing_sigma, coverage_radius=10.0),
        duration=duration,
        rng_seed=seed,
        regions=tuple(regions),
        truth_window=600.0,
        name="classroom",
    )


def walkthrough_scenario(
    mode,
    speed: float,
    gn_count: int,
    seed: int = 0,
    phones: Sequence[str] = WALKTHROUGH_PHONES,
    spacing: float = 40.0,
    coverage_radius: float = 30.0,
) -> Scenario:
    """One person carrying several phones walks past ``gn_count`` gateways.

    The route is the same for every gateway count: it starts 20 m before the
    first gateway's coverage and ends 20 m after the fourth's, so adding
    gateways only adds coverage. Phone ``i`` draws from random stream ``i``,
    so cells run with the same seed see the same emission times.
    """
    mode = Mode.parse(mode)
    if not 1 <= gn_count <= 4:
        raise ValueError("gn_count must be between 1 and 4")
    gateways = tuple(Gateway(k + 1, position=(k * spacing, 0.0)) for k in range(gn_count))
    x0, x1 = -coverage_radius - 20.0, 3 * spacing + coverage_radius + 20.0
    plan = MobilityPlan.walk([(x0, 0.0), (x1, 0.0)], speed, 0.0)
    specs = tuple(PhoneSpec(_mac(0x06, i), PhoneModel(os_name, mode), plan, stream=i) for i, os_name in enumerate(phones))
    duration = (x1 - x0) / speed + 1.0
    return Scenario(
        gateways, specs, ChannelModel(coverage_radius=coverage_radius), duration=duration, rng_seed=seed, name="speed_sweep"
    )


def flow_gateways(locations: dict[int, tuple[float, float]] = FLOW_LOCATIONS) -> tuple[Gateway, ...]:
    """Two gateways 1 m apart at every location; ids ``2L-1`` and ``2L``."""
    out = []
    for loc, (x, y) in sorted(locations.items()):
        out.append(Gateway(2 * loc - 1, f"L{loc}a", (x - 0.5, y), loc))
        out.append(Gateway(2 * loc, f"L{loc}b", (x + 0.5, y), loc))
    return tuple(out)


def flow_scenario(
    phones: Sequence[tuple[str, str, int]],
    speed: float | str = "normal",
    seed: int = 0,
    targets: Sequence[Sequence[int]] = FLOW_TARGETS,
    stagger: float = 0.0,
    shadowing_sigma: float = 4.0,
    common_stream: bool = True,
) -> Scenario:
    """Phones walking target routes through the seven-location deployment.

    ``phones`` lists ``(os, mode, target_index)``. With ``common_stream``
    all phones share one random stream (common random numbers), so phones
    with equal emission parameters probe at the same instants.
    """
    if isinstance(speed, str):
        speed = SPEEDS[speed]
    specs = []
    longest = 0.0
    for i, (os_name, mode, target) in enumerate(phones):
        route = [FLOW_LOCATIONS[loc] for loc in targets[target]]
        start = i * stagger
        plan = MobilityPlan.walk(route, speed, start)
        times, _ = plan.timeline(np.inf)
        longest = max(longest, float(times[-1]))
        specs.append(PhoneSpec(_mac(0x07, i), PhoneModel(os_name, mode), plan, stream=0 if common_stream else None))
    return Scenario(
        flow_gateways(),
        tuple(specs),
        ChannelModel(shadowing_sigma=shadowing_sigma),
        duration=longest + 1.0,
        rng_seed=seed,
        name="flow_tracking",
    )


def default_flow_scenario(seed: int = 5) -> Scenario:
    """Five dense-probing Android phones; three walk the first route, two the second."""
    phones = [("Android", "NRWifiScrOn", t) for t in (0, 0, 0, 1, 1)]
    return flow_scenario(phones, "normal", seed, stagger=30.0, common_stream=False)


CANONICAL = {
    "lab": lab_scenario,
    "city": city_scenario,
    "classroom": classroom_scenario,
    "speed_sweep": lambda seed=1: walkthrough_scenario("NRWifiScrOn", SPEEDS["normal"], 4, seed),
    "flow_tracking": default_flow_scenario,
}


def canonical(name: str, seed: Optional[int] = None) -> Scenario:
    if name not in CANONICAL:
        raise KeyError(f"unknown scenario {name!r}; choose from {', '.join(CANONICAL)}")
    return CANONICAL[name]() if seed is None else CANONICAL[name](seed=seed)


def export_canonical(directory) -> list:
    """Write every canonical scenario as ``<name>.json`` into ``directory``."""
    from pathlib import Path

    from .engine import save_scenario

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in CANONICAL:
        path = out / f"{name}.json"
        save_scenario(canonical(name), path)
        paths.append(path)
    return paths
