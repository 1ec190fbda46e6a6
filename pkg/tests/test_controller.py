import logging

import pytest

from loadshed.controller import (
    AdvancedController,
    BaselineController,
    ControllerConfig,
    ForcedOffSchedule,
    MissionDatabase,
    ZoneSchedule,
    make_controller,
)
from loadshed.model import DemandPoint, MissionWeightSet, SystemSnapshot, ZoneLimit
from loadshed.scenario import default_fleet, default_weights

MW = 1e6
FLEET = default_fleet()
WEIGHTS = default_weights(FLEET)


def snapshot(demands, capacity_w, t=0.0, mission_id=1, loss_fraction=0.02):
    dps = tuple(DemandPoint(s.id, d) for s, d in zip(FLEET, demands))
    measured = tuple(d * s.rated_power_w for s, d in zip(FLEET, demands))
    loss = loss_fraction * sum(measured)
    loading = (sum(measured) + loss) / capacity_w
    return SystemSnapshot(t, mission_id, dps, measured, capacity_w, loss, loading)


def full_demand():
    return [1.0 if s.variability.kind == "binary" else 0.64 for s in FLEET]


class TestControllerConfig:
    def test_defaults_are_valid(self):
        cfg = ControllerConfig()
        assert cfg.period_s == 0.1 and cfg.solve_deadline_s == 0.05

    def test_deadline_must_fit_period(self):
        with pytest.raises(ValueError):
            ControllerConfig(solve_deadline_s=0.2)

    def test_stale_limit_minimum(self):
        with pytest.raises(ValueError):
            ControllerConfig(stale_limit=0)

    def test_unknown_algorithm(self):
        with pytest.raises(ValueError):
            ControllerConfig(algorithm="psychic")


class TestAdvancedController:
    def make(self):
        db = MissionDatabase([WEIGHTS])
        return AdvancedController(FLEET, db, ControllerConfig())

    def test_ample_capacity_restores_every_demand(self):
        ctrl = self.make()
        commands = ctrl.on_telemetry(snapshot(full_demand(), 96 * MW))
        # every load tracks its demand status exactly
        for s, d in zip(FLEET, full_demand()):
            assert ctrl.intent[s.id] == d
        # first tick emits commands only for loads below full permission
        assert {c.load_id for c in commands} == {s.id for s in FLEET
                                                 if s.variability.kind == "continuous"}

    def test_trip_throttles_pmm_only(self):
        ctrl = self.make()
        commands = ctrl.on_telemetry(snapshot(full_demand(), 60 * MW, t=310.0))
        pmm_ids = {s.id for s in FLEET if s.group.value == "PMM"}
        assert commands, "shortfall must produce commands"
        for s in FLEET:
            if s.id in pmm_ids:
                continue
            assert ctrl.intent[s.id] == 1.0, f"non-PMM load {s.id} was curtailed"
        pmm_total = sum(ctrl.intent[i] * 18 * MW for i in pmm_ids)
        assert pmm_total < 0.64 * 4 * 18 * MW

    def test_no_commands_when_nothing_changes(self):
        ctrl = self.make()
        snap = snapshot(full_demand(), 96 * MW)
        ctrl.on_telemetry(snap)
        assert ctrl.on_telemetry(snap) == ()

    def test_unknown_mission_holds(self, caplog):
        ctrl = self.make()
        snap = snapshot(full_demand(), 60 * MW, mission_id=9)
        with caplog.at_level(logging.WARNING):
            assert ctrl.on_telemetry(snap) == ()
        assert any("mission 9" in rec.message for rec in caplog.records)

    def test_never_commands_above_demand(self):
        ctrl = self.make()
        demands = [0.0 if k % 3 == 0 else d for k, d in enumerate(full_demand())]
        ctrl.on_telemetry(snapshot(demands, 96 * MW))
        for s, d in zip(FLEET, demands):
            assert ctrl.intent[s.id] <= d

    def test_solve_time_tracked(self):
        ctrl = self.make()
        ctrl.on_telemetry(snapshot(full_demand(), 60 * MW))
        assert ctrl.last_solve_time_s > 0.0


class TestBaselineControllerWrapper:
    def test_no_overload_no_commands(self):
        ctrl = BaselineController(FLEET, ControllerConfig(algorithm="baseline"))
        demands = full_demand()
        snap = snapshot(demands, 96 * MW)
        assert snap.loading_pu < 1.0
        assert ctrl.on_telemetry(snap) == ()

    def test_sheds_track_intent(self):
        ctrl = BaselineController(FLEET, ControllerConfig(algorithm="baseline"))
        overload = snapshot(full_demand(), 60 * MW)
        assert overload.loading_pu > 1.0
        sheds = []
        for k in range(10):
            sheds += list(ctrl.on_telemetry(overload))
        assert sheds, "sustained overload must shed"
        for cmd in sheds:
            assert ctrl.intent[cmd.load_id] == 0.0


class TestMissionDatabase:
    def test_weight_schedule_selects_latest_valid(self):
        early = MissionWeightSet(1, {1: 1.0}, valid_from_s=0.0)
        late = MissionWeightSet(1, {1: 2.0}, valid_from_s=100.0)
        other = MissionWeightSet(2, {1: 9.0}, valid_from_s=0.0)
        db = MissionDatabase([early, late, other])
        assert db.weights_at(1, 50.0) is early
        assert db.weights_at(1, 100.0) is late
        assert db.weights_at(2, 500.0) is other
        assert db.weights_at(3, 0.0) is None

    def test_zone_updates_apply_in_time_order(self):
        base = ZoneLimit("Z1", 10 * MW, (1, 2))
        db = MissionDatabase([WEIGHTS], zones=[base],
                             zone_updates=[ZoneSchedule(50.0, "Z1", 4 * MW)])
        assert db.zones_at(10.0) == (base,)
        updated = db.zones_at(50.0)
        assert updated[0].limit_w == 4 * MW and updated[0].members == (1, 2)

    def test_forced_off_accumulates(self):
        db = MissionDatabase([WEIGHTS], forced_off_updates=[
            ForcedOffSchedule(10.0, 3), ForcedOffSchedule(20.0, 4)])
        assert db.forced_off_at(5.0) == frozenset()
        assert db.forced_off_at(10.0) == {3}
        assert db.forced_off_at(25.0) == {3, 4}


def test_make_controller_dispatch():
    db = MissionDatabase([WEIGHTS])
    assert isinstance(make_controller(FLEET, ControllerConfig(algorithm="baseline")),
                      BaselineController)
    assert isinstance(make_controller(FLEET, ControllerConfig(), db), AdvancedController)
    with pytest.raises(ValueError):
        make_controller(FLEET, ControllerConfig())
