"""
Recognising walking trajectories
================================

Observed trajectories are compared with target routes through the longest
common subsequence. A worked example first, then simulated walks through a
seven-location deployment with two gateways per location.
"""

from senseflow.experiments import flow_tracking_experiment
from senseflow.trajectory import lcs, recognize_trajectory

j1, j2 = (7, 1, 2, 6, 4, 5, 8), (7, 4, 6, 2, 8)
x1, x2 = (7, 1, 6, 5, 8), (7, 3, 8)
print("LCS(J1, X1) =", lcs(j1, x1), " LCS(J2, X1) =", lcs(j2, x1))
print("X1 recognised as target", recognize_trajectory(x1, [j1, j2]))
print("X2 recognised as target", recognize_trajectory(x2, [j1, j2]), "(None: ambiguous)")

# Each phone type walks both built-in routes, ten times, at normal speed.
phones = [("Android", "NRWifiScrOn"), ("iOS", "NRWifiScrOn"), ("Windows", "NRWifiScrOn"),
          ("Android", "RWifiScrOn"), ("iOS", "RWifiScrOn"), ("Windows", "RWifiScrOn"),
          ("Windows", "NRWifiScrOff")]
summary = flow_tracking_experiment(phones, replications=10, seed=0)

print("\nmean tracking accuracy")
for row in summary["delta"]:
    print(f"  {row['os']:8s} {row['mode']:13s} {row['mean_delta']:.3f}")
print("\nrecognition rate per route")
for row in summary["recognition"]:
    print(f"  {str(row['target']):24s} {row['os']:8s} {row['mode']:13s} {row['rate']:.2f}")
