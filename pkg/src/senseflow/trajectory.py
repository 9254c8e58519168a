"""Gateway-id trajectories and longest-common-subsequence matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union


@dataclass(frozen=True)
class Trajectory:
    """An ordered sequence of gateway (or location) ids.

    Consecutive repeats are collapsed on construction. Observed trajectories
    also carry the window start of each step.
    """

    steps: tuple[int, ...] = ()
    times: Optional[tuple[float, ...]] = None

    def __post_init__(self) -> None:
        steps = tuple(int(s) for s in self.steps)
        times = None if self.times is None else tuple(float(t) for t in self.times)
        if times is not None and len(times) != len(steps):
            raise ValueError("times must align with steps")
        keep = [i for i in range(len(steps)) if i == 0 or steps[i] != steps[i - 1]]
        if len(keep) != len(steps):
            steps = tuple(steps[i] for i in keep)
            if times is not None:
                times = tuple(times[i] for i in keep)
        if times is not None and any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("observed steps must be time-ordered")
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "times", times)

    def __len__(self) -> int:
        return len(self.steps)

    def __iter__(self):
        return iter(self.steps)

    def __getitem__(self, i):
        return self.steps[i]

    def map(self, mapping) -> "Trajectory":
        """Relabel steps (e.g. gateway id -> location id); repeats collapse again."""
        return Trajectory(tuple(mapping.get(s, s) for s in self.steps), self.times)


TrajectoryLike = Union[Trajectory, Sequence[int]]


def _steps(x: TrajectoryLike) -> tuple[int, ...]:
    return x.steps if isinstance(x, Trajectory) else tuple(int(s) for s in x)


def _suffix_table(a: Sequence[int], b: Sequence[int]) -> list[list[int]]:
    # table[i][j] = LCS length of a[i:] and b[j:]
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        ai = a[i]
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if ai == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = max(below[j], row[j + 1])
    return table


def lcs_length(a: TrajectoryLike, b: TrajectoryLike) -> int:
    a, b = _steps(a), _steps(b)
    if not a or not b:
        return 0
    return _suffix_table(a, b)[0][0]


def lcs(a: TrajectoryLike, b: TrajectoryLike) -> tuple[int, ...]:
    """Longest common subsequence of two trajectories.

    Among several maximal subsequences, the one using the earliest positions
    of ``a`` is returned. The result is a plain tuple: an LCS may legitimately
    repeat an id back to back, which a :class:`Trajectory` would collapse.
    """
    a, b = _steps(a), _steps(b)
    if not a or not b:
        return ()
    table = _suffix_table(a, b)
    out = []
    i = j = 0
    remaining = table[0][0]
    while remaining:
        found = False
        for ii in range(i, len(a)):
            if table[ii][j] < remaining:
                break
            for jj in range(j, len(b)):
                if a[ii] == b[jj] and table[ii + 1][jj + 1] == remaining - 1:
                    out.append(a[ii])
                    i, j = ii + 1, jj + 1
                    remaining -= 1
                    found = True
                    break
            if found:
                break
    return tuple(out)


def matches_trajectory(x: TrajectoryLike, j: TrajectoryLike) -> bool:
    """True iff the targeting trajectory ``j`` equals LCS(x, j)."""
    js = _steps(j)
    if not js:
        raise ValueError("targeting trajectory must be non-empty")
    return lcs_length(x, js) == len(js)


def recognize_trajectory(x: TrajectoryLike, candidates: Sequence[TrajectoryLike]) -> Optional[int]:
    """Index of the candidate sharing the longest LCS with ``x``.

    Returns ``None`` when the best LCS length is shared by several
    candidates or is zero: the trajectory cannot be told apart.
    """
    if not candidates:
        raise ValueError("at least one candidate trajectory is required")
    lengths = [lcs_length(x, c) for c in candidates]
    best = max(lengths)
    if best == 0 or lengths.count(best) > 1:
        return None
    return lengths.index(best)


def flow_counts(trajectories: Iterable[TrajectoryLike], targets: Sequence[TrajectoryLike]) -> list[dict]:
    """Per-target number of matching trajectories and of ambiguous recognitions."""
    targets = [_steps(t) for t in targets]
    rows = [{"target": list(t), "matches": 0, "recognized": 0, "ambiguous": 0} for t in targets]
    for x in trajectories:
        lengths = [lcs_length(x, t) for t in targets]
        for row, t, n in zip(rows, targets, lengths):
            if n == len(t):
                row["matches"] += 1
        best = max(lengths) if lengths else 0
        winners = [k for k, n in enumerate(lengths) if n == best]
        if best == 0:
            continue
        if len(winners) == 1:
            rows[winners[0]]["recognized"] += 1
        else:
            for k in winners:
                rows[k]["ambiguous"] += 1
    return rows
