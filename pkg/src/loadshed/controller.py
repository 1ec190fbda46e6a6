"""Shedding controllers: the staged baseline and the mission-weighted optimizer.

Controllers are driven one telemetry snapshot at a time and reply with the
commands whose statuses changed. The advanced controller consults a mission
database (weight schedule plus scheduled constraint updates) and solves the
shedding optimization within its per-tick deadline.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

from .baseline import BaselineState, baseline_reset, baseline_step
from .model import (
    LoadSpec,
    MissionWeightSet,
    ShedCommand,
    SystemSnapshot,
    ZoneLimit,
)
from .optimizer import ShedPlan, build_instance, solve

log = logging.getLogger(__name__)

ALGORITHMS = ("baseline", "advanced")


@dataclass(frozen=True)
class ControllerConfig:
    algorithm: str = "advanced"
    period_s: float = 0.1
    solve_deadline_s: float = 0.05
    stale_limit: int = 5  # ticks of telemetry age before the failsafe engages

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if not 0 < self.solve_deadline_s < self.period_s:
            raise ValueError("solve deadline must lie strictly inside the control period")
        if self.stale_limit < 1:
            raise ValueError("stale limit must be at least one tick")


@dataclass(frozen=True)
class ZoneSchedule:
    time_s: float
    zone: str
    limit_w: float


@dataclass(frozen=True)
class ForcedOffSchedule:
    time_s: float
    load_id: int


class MissionDatabase:
    """Dynamic mission data: weight sets over time plus constraint updates.

    Mirrors the controller-side "dynamic database": telemetry never carries
    zone limits or failed-load sets, so scheduled constraint changes are, by
    configuration, known to the controller as well as to the plant.
    """

    def __init__(
        self,
        weight_sets: Sequence[MissionWeightSet],
        zones: Sequence[ZoneLimit] = (),
        zone_updates: Sequence[ZoneSchedule] = (),
        forced_off_updates: Sequence[ForcedOffSchedule] = (),
    ):
        self._weight_sets = tuple(weight_sets)
        self._zones = {zl.zone: zl for zl in zones}
        self._zone_updates = sorted(zone_updates, key=lambda u: u.time_s)
        self._forced_updates = sorted(forced_off_updates, key=lambda u: u.time_s)

    def weights_at(self, mission_id: int, time_s: float) -> MissionWeightSet | None:
        candidates = [
            ws
            for ws in self._weight_sets
            if ws.mission_id == mission_id and ws.valid_from_s <= time_s
        ]
        if not candidates:
            return None
        return max(candidates, key=lambda ws: ws.valid_from_s)

    def zones_at(self, time_s: float) -> tuple[ZoneLimit, ...]:
        zones = dict(self._zones)
        for upd in self._zone_updates:
            if upd.time_s > time_s:
                break
            current = zones.get(upd.zone)
            members = current.members if current is not None else ()
            zones[upd.zone] = ZoneLimit(upd.zone, upd.limit_w, members)
        return tuple(zones.values())

    def forced_off_at(self, time_s: float) -> frozenset[int]:
        return frozenset(u.load_id for u in self._forced_updates if u.time_s <= time_s)


class AdvancedController:
    """Per-tick re-solve of the mission-weighted shedding optimization."""

    def __init__(self, fleet: Sequence[LoadSpec], database: MissionDatabase,
                 config: ControllerConfig):
        self.fleet = tuple(fleet)
        self.database = database
        self.config = config
        self.intent: dict[int, float] = {spec.id: 1.0 for spec in self.fleet}
        self.last_plan: ShedPlan | None = None

    @property
    def last_solve_time_s(self) -> float:
        return self.last_plan.solve_time_s if self.last_plan is not None else 0.0

    def on_telemetry(self, snapshot: SystemSnapshot) -> tuple[ShedCommand, ...]:
        weights = self.database.weights_at(snapshot.mission_id, snapshot.time_s)
        if weights is None:
            log.warning(
                "no weights for mission %d at t=%.1f s; holding last commands",
                snapshot.mission_id, snapshot.time_s,
            )
            return ()
        instance = build_instance(
            snapshot,
            weights,
            self.fleet,
            zones=self.database.zones_at(snapshot.time_s),
            forced_off=self.database.forced_off_at(snapshot.time_s),
        )
        plan = solve(instance, self.config.solve_deadline_s)
        self.last_plan = plan
        commands = []
        for spec in self.fleet:
            status = plan.statuses[spec.id]
            if status != self.intent[spec.id]:
                self.intent[spec.id] = status
                commands.append(ShedCommand(spec.id, status))
        return tuple(commands)


class BaselineController:
    """Wrapper giving the staged baseline the same driving surface."""

    def __init__(self, fleet: Sequence[LoadSpec], config: ControllerConfig):
        self.fleet = tuple(fleet)
        self.config = config
        self.state: BaselineState = baseline_reset()
        self.intent: dict[int, float] = {spec.id: 1.0 for spec in self.fleet}

    @property
    def last_solve_time_s(self) -> float:
        return 0.0  # rule evaluation, no optimization solve

    def on_telemetry(self, snapshot: SystemSnapshot) -> tuple[ShedCommand, ...]:
        self.state, commands = baseline_step(self.state, snapshot, self.fleet,
                                             self.config.period_s)
        for cmd in commands:
            self.intent[cmd.load_id] = cmd.status
        return commands


Controller = AdvancedController | BaselineController


def make_controller(
    fleet: Sequence[LoadSpec],
    config: ControllerConfig,
    database: MissionDatabase | None = None,
) -> Controller:
    if config.algorithm == "baseline":
        return BaselineController(fleet, config)
    if database is None:
        raise ValueError("the advanced controller needs a mission database")
    return AdvancedController(fleet, database, config)
