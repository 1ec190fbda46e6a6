"""Mission-weighted operability metrics.

The instantaneous value is the weighted fraction of demanded load service
actually delivered. The mission-period value is the ratio of the two
time-integrals (weighted service over weighted demand), approximated by
left-rectangle sums on the control grid. Numerator and denominator are
integrated separately and divided once, so a time-varying demand profile is
handled correctly.
"""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

from .model import DemandPoint, LoadState, MissionWeightSet


class IncompleteSeriesError(Exception):
    """The sample series does not cover the mission window at the tick spacing."""


@dataclass(frozen=True)
class OperabilitySample:
    time_s: float
    value: float
    vacuous: bool = False  # true when nothing was demanded at this instant


@dataclass(frozen=True)
class MissionWindow:
    t_start_s: float
    t_end_s: float
    tick_s: float = 0.1

    def __post_init__(self) -> None:
        if self.t_end_s <= self.t_start_s:
            raise ValueError("mission window must end after it starts")
        if self.tick_s <= 0:
            raise ValueError("tick must be positive")
        span = self.t_end_s - self.t_start_s
        ticks = span / self.tick_s
        if abs(ticks - round(ticks)) > 1e-6:
            raise ValueError(f"window span {span} is not a multiple of tick {self.tick_s}")

    @property
    def n_ticks(self) -> int:
        return round((self.t_end_s - self.t_start_s) / self.tick_s)


def weighted_service_sums(
    weights: MissionWeightSet,
    states: Sequence[LoadState],
    demands: Sequence[DemandPoint],
) -> tuple[float, float]:
    """Weighted served and demanded totals (numerator, denominator).

    Loads with zero demand status contribute to neither sum.
    """
    status = {s.load_id: s.status for s in states}
    num = 0.0
    den = 0.0
    for d in demands:
        if d.demand_status == 0.0:
            continue
        w = weights.weights.get(d.load_id)
        if w is None:
            raise KeyError(f"no weight for load {d.load_id} in mission {weights.mission_id}")
        num += w * status.get(d.load_id, 0.0)
        den += w * d.demand_status
    return num, den


def instantaneous_operability(
    weights: MissionWeightSet,
    states: Sequence[LoadState],
    demands: Sequence[DemandPoint],
) -> OperabilitySample:
    """Weighted operability right now; 1.0 (flagged vacuous) when nothing is demanded."""
    num, den = weighted_service_sums(weights, states, demands)
    if den <= 0.0:
        return OperabilitySample(math.nan, 1.0, vacuous=True)
    return OperabilitySample(math.nan, num / den)


def integral_operability(
    samples: Iterable[tuple[float, float, float]],
    window: MissionWindow,
) -> float:
    """Mission-period operability from (time, numerator, denominator) ticks.

    Each sample must sit on the window grid; a missing tick raises
    :class:`IncompleteSeriesError`. Ticks with zero denominator contribute
    nothing to either integral.
    """
    tick = window.tick_s
    expected = window.n_ticks
    covered = [False] * expected
    num_total = 0.0
    den_total = 0.0
    for t, num, den in samples:
        k = (t - window.t_start_s) / tick
        idx = round(k) - 1
        if abs(k - round(k)) > 1e-6 * max(1.0, abs(k)):
            raise IncompleteSeriesError(f"sample at t={t} is off the {tick} s grid")
        if idx < 0 or idx >= expected:
            continue  # outside the window
        if covered[idx]:
            raise IncompleteSeriesError(f"duplicate sample at t={t}")
        covered[idx] = True
        if den > 0.0:
            num_total += num * tick
            den_total += den * tick
    if not all(covered):
        first = covered.index(False)
        t_missing = window.t_start_s + (first + 1) * tick
        raise IncompleteSeriesError(f"no sample for tick ending at t={t_missing}")
    if den_total <= 0.0:
        return 1.0  # nothing demanded over the whole window
    return num_total / den_total
