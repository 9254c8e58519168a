"""Detection error and tracking accuracy."""

from __future__ import annotations

from .trajectory import TrajectoryLike, _steps, lcs_length


class ZeroTruthError(ValueError):
    pass


def detection_error(detected: int, truth: int) -> float:
    """Signed relative counting error ``(detected - truth) / truth``.

    Positive values are overcounts, negative values undercounts.
    """
    if truth <= 0:
        raise ZeroTruthError("detection error needs a positive ground-truth count")
    return (detected - truth) / truth


def tracking_accuracy(observed: TrajectoryLike, planted: TrajectoryLike) -> float:
    """Fraction of the planted locations detected in order, in [0, 1]."""
    planted = _steps(planted)
    if not planted:
        raise ValueError("planted trajectory must be non-empty")
    return lcs_length(observed, planted) / len(planted)
