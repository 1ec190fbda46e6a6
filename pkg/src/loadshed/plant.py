"""Discrete-time plant: demand playback, actuator lag, generation events.

The plant owns the physical truth of a run. Each tick it advances the clock,
fires any due events, samples the demand profiles, moves every load's
measured power one first-order-lag step toward its target (the commanded
status capped by demand), and emits a telemetry snapshot.
"""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .model import (
    DemandPoint,
    GenerationModule,
    LoadSpec,
    ShedCommand,
    SystemSnapshot,
    ZoneLimit,
    online_capacity,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LoadProfile:
    """Piecewise-constant demand schedule: (time, demand status) breakpoints."""

    breakpoints: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        times = [t for t, _ in self.breakpoints]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("profile breakpoints must be strictly ascending in time")


def sample_profile(profile: LoadProfile, t: float) -> float:
    """Demand status at time ``t``: latest breakpoint at or before ``t``, else 0."""
    times = [bp[0] for bp in profile.breakpoints]
    k = bisect_right(times, t)
    if k == 0:
        return 0.0
    return profile.breakpoints[k - 1][1]


@dataclass(frozen=True)
class GeneratorTrip:
    time_s: float
    module_id: int


@dataclass(frozen=True)
class GeneratorRestore:
    time_s: float
    module_id: int


@dataclass(frozen=True)
class LoadFailure:
    time_s: float
    load_id: int


@dataclass(frozen=True)
class ZoneLimitChange:
    time_s: float
    zone: str
    limit_w: float


PlantEvent = GeneratorTrip | GeneratorRestore | LoadFailure | ZoneLimitChange


class Plant:
    """Single-owner plant state machine; snapshots are immutable copies."""

    def __init__(
        self,
        fleet: Sequence[LoadSpec],
        generation: Sequence[GenerationModule],
        profiles: Mapping[int, LoadProfile],
        events: Iterable[PlantEvent] = (),
        zones: Sequence[ZoneLimit] = (),
        tau_s: float = 0.2,
        loss_fraction: float = 0.02,
        mission_id: int = 1,
        t_start_s: float = 0.0,
    ):
        if tau_s < 0:
            raise ValueError("actuator time constant must be >= 0")
        self.fleet = tuple(fleet)
        self._by_id = {spec.id: spec for spec in self.fleet}
        self.tau_s = tau_s
        self.loss_fraction = loss_fraction
        self.mission_id = mission_id
        self.clock_s = t_start_s
        # clock is derived as base + ticks*dt, not accumulated, so a 600 s run
        # of 0.1 s ticks lands exactly on the grid that events are keyed to
        self._base_t = t_start_s
        self._base_ticks = 0
        self._dt: float | None = None
        self._online = {m.id: m.online for m in generation}
        self._modules = tuple(generation)
        self._profiles = dict(profiles)
        self._events = sorted(events, key=lambda e: e.time_s)
        self._next_event = 0
        self.zone_limits = {zl.zone: zl.limit_w for zl in zones}
        self.forced_off: set[int] = set()
        self.commanded = {spec.id: 1.0 for spec in self.fleet}
        # start in steady state: measured power equals the initial target
        self.measured_w = {
            spec.id: self._target_w(spec, self._demand(spec.id, t_start_s))
            for spec in self.fleet
        }

    def _demand(self, load_id: int, t: float) -> float:
        if load_id in self.forced_off:
            return 0.0
        profile = self._profiles.get(load_id)
        return sample_profile(profile, t) if profile is not None else 0.0

    def _target_w(self, spec: LoadSpec, demand: float) -> float:
        return min(self.commanded[spec.id], demand) * spec.rated_power_w

    def apply_commands(self, commands: Iterable[ShedCommand]) -> None:
        """Update commanded statuses; unknown load ids are logged and skipped."""
        for cmd in commands:
            if cmd.load_id not in self._by_id:
                log.warning("ignoring command for unknown load %d", cmd.load_id)
                continue
            self.commanded[cmd.load_id] = cmd.status

    def _boundary_slack(self) -> float:
        # a nanosecond of relative slack: grid times and event times are both
        # rounded floats, and anything within rounding of the boundary
        # belongs to the tick that ends there
        return 1e-9 * (1.0 + abs(self.clock_s))

    def _fire_due_events(self) -> None:
        due = self.clock_s + self._boundary_slack()
        while self._next_event < len(self._events) and (
            self._events[self._next_event].time_s <= due
        ):
            ev = self._events[self._next_event]
            self._next_event += 1
            if isinstance(ev, GeneratorTrip):
                self._online[ev.module_id] = False
            elif isinstance(ev, GeneratorRestore):
                self._online[ev.module_id] = True
            elif isinstance(ev, LoadFailure):
                self.forced_off.add(ev.load_id)
            elif isinstance(ev, ZoneLimitChange):
                self.zone_limits[ev.zone] = ev.limit_w

    def tick(self, dt: float) -> SystemSnapshot:
        """Advance the plant by ``dt`` seconds and return the new telemetry."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        if dt != self._dt:
            self._base_t = self.clock_s
            self._base_ticks = 0
            self._dt = dt
        self._base_ticks += 1
        self.clock_s = self._base_t + self._base_ticks * dt
        self._fire_due_events()
        alpha = 1.0 if self.tau_s == 0.0 else 1.0 - math.exp(-dt / self.tau_s)
        sample_t = self.clock_s + self._boundary_slack()
        demands = []
        measured = []
        for spec in self.fleet:
            d = self._demand(spec.id, sample_t)
            target = self._target_w(spec, d)
            p = self.measured_w[spec.id]
            p += (target - p) * alpha
            self.measured_w[spec.id] = p
            demands.append(DemandPoint(spec.id, d))
            measured.append(p)
        capacity = online_capacity(
            GenerationModule(m.id, m.name, m.rated_power_w, self._online[m.id])
            for m in self._modules
        )
        total = sum(measured)
        loss = self.loss_fraction * total
        if capacity > 0:
            loading = (total + loss) / capacity
        else:
            loading = 0.0 if total + loss <= 0 else math.inf
        return SystemSnapshot(
            time_s=self.clock_s,
            mission_id=self.mission_id,
            demands=tuple(demands),
            measured_w=tuple(measured),
            total_capacity_w=capacity,
            total_loss_w=loss,
            loading_pu=loading,
        )
