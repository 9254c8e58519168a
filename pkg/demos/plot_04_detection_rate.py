"""
Detection rate while walking past gateways
==========================================

One person carries five phones (two iOS, two Android, one Windows) past a
line of gateways. A phone counts as detected when any gateway hears at least
one of its probe requests. Faster walking shortens the time in coverage;
more gateways lengthen it. Phones that probe rarely suffer most.
"""

from senseflow.experiments import detection_rate_experiment
from senseflow.sim import ALL_MODES, SPEEDS

speeds = list(SPEEDS.values())
cells = detection_rate_experiment(ALL_MODES, speeds, (1, 2, 3, 4), replications=30, seed=0)
table = {(c.mode, c.speed, c.gn_count): c for c in cells}

for mode in ALL_MODES:
    print(f"\n{mode.name}: mean detection rate (rows: m/s, columns: gateways)")
    print("        " + "".join(f"{n:>8d}" for n in (1, 2, 3, 4)))
    for v in speeds:
        print(f"{v:8.2f}" + "".join(f"{table[(mode.name, v, n)].mean_rate:8.2f}" for n in (1, 2, 3, 4)))

# Per operating system, for the fastest walk past a single gateway.
for mode in ALL_MODES:
    c = table[(mode.name, SPEEDS["run"], 1)]
    print(mode.name, {k: round(v, 2) for k, v in c.rate_by_os.items()})
