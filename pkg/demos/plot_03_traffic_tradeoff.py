"""
Upload volume against collection settings
=========================================

A simulated day in a small lab (researchers at their desks, passers-by in
the corridor, one device that never leaves) is collected under a grid of
settings. Longer upload periods and longer merge gaps both shrink the data
a gateway sends.
"""

import numpy as np

from senseflow.pipeline import sweep_traffic

t_datasets = [600, 1800, 3600, 7200]
t_intervals = [300, 600, 1200, 1800]
rows = sweep_traffic("lab", t_datasets, t_intervals)
grid = np.array([r["bytes"] for r in rows]).reshape(len(t_datasets), len(t_intervals))

# Rows: t_dataset in minutes. Columns: t_interval in minutes. Cells: KB/day.
print("t_dataset \\ t_interval" + "".join(f"{t // 60:>9d}" for t in t_intervals))
for t, line in zip(t_datasets, grid):
    print(f"{t // 60:>22d}" + "".join(f"{v / 1024:9.1f}" for v in line))
print("row totals:   ", grid.sum(axis=1).tolist())
print("column totals:", grid.sum(axis=0).tolist())
