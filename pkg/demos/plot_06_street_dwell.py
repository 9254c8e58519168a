"""
Dwell time on a street
======================

Two gateways, A and C, watch a street for a day. Most people walk past in
under a minute; shop staff stay for hours. Dwell time per phone is the total
span of its contact records at a gateway.
"""

from senseflow import CollectionConfig
from senseflow.experiments import group_by_gateway, replay
from senseflow.server import dwell_durations
from senseflow.sim import simulate
from senseflow.sim.scenarios import canonical

scenario = canonical("city")
sim = simulate(scenario)
store, _ = replay(group_by_gateway(sim.events()), CollectionConfig(600, 300), [1, 3], scenario.start, scenario.end)

# A single sighting gives a zero-length record; the floor counts it as 30 s.
report = dwell_durations(store, floor=30.0)
labels = {g.id: g.label for g in scenario.gateways}
for gn, counts in sorted(report.histogram.items()):
    print(f"gateway {labels[gn]}: {int(counts.sum())} phones")
    edges = list(report.edges) + [None]
    for lo, hi, n in zip(edges, edges[1:], counts):
        span = f"{int(lo) // 60:3d}-{int(hi) // 60:3d} min" if hi is not None else f"{int(lo) // 60:3d}+     min"
        print(f"  {span}  {int(n)}")
