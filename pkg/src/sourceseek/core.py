"""Shared domain types: planar locations, measurements, Gaussian beliefs, mission clock.

All types are immutable values except :class:`MissionClock`, which advances
monotonically. Signal values are unit-free reals, documented as SNR in dB.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class Location:
    """A 2-D point in meters."""

    x: float
    y: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"location coordinates must be finite, got ({self.x}, {self.y})")


def euclidean_distance(a: Location, b: Location) -> float:
    """Straight-line distance between two locations, in meters."""
    return math.hypot(a.x - b.x, a.y - b.y)


@dataclass(frozen=True)
class Measurement:
    """One signal reading (SNR, dB) taken at a location."""

    location: Location
    value: float
    time_index: int

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise ValueError(f"measurement value must be finite, got {self.value}")
        if self.time_index < 0:
            raise ValueError(f"time_index must be non-negative, got {self.time_index}")


@dataclass(frozen=True)
class GaussianBelief:
    """Mean/variance pair returned by every inference path."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise ValueError(f"belief must be finite, got N({self.mean}, {self.variance})")
        if self.variance <= 0.0:
            raise ValueError(f"belief variance must be positive, got {self.variance}")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class MissionClock:
    """Elapsed mission time against a fixed budget, both in seconds."""

    budget_T: float
    t: float = 0.0

    def __post_init__(self) -> None:
        if not math.isfinite(self.budget_T) or self.budget_T <= 0.0:
            raise ValueError(f"budget_T must be positive and finite, got {self.budget_T}")
        if self.t < 0.0 or self.t > self.budget_T:
            raise ValueError(f"t must lie in [0, budget_T], got {self.t}")

    @property
    def remaining(self) -> float:
        return self.budget_T - self.t

    def advance(self, seconds: float) -> None:
        if seconds < 0.0:
            raise ValueError(f"cannot advance clock by {seconds} s")
        if self.t + seconds > self.budget_T + 1e-9:
            raise ValueError(
                f"advance by {seconds} s would exceed budget ({self.t} + {seconds} > {self.budget_T})"
            )
        self.t = min(self.t + seconds, self.budget_T)
