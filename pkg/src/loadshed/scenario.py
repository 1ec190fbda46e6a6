"""Scenario configuration: fleet, generation, profiles, events, run window.

Scenarios serialize to JSON (SI units throughout). ``default_scenario``
builds the bundled 600 s generation-contingency study: demand ramps to about
85 MW, the 36 MW main generator module MPGM2 trips at t=310 s leaving 60 MW
of capacity, demand stays above 60 MW until it falls away at t=395 s.
"""

from __future__ import annotations

import json
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from pathlib import Path

from .controller import ControllerConfig
from .link import ImpairmentConfig
from .metrics import MissionWindow
from .model import (
    GenerationModule,
    LoadGroup,
    LoadSpec,
    MissionWeightSet,
    ValidationIssue,
    ValidationReport,
    Variability,
    ZoneLimit,
    fleet_by_id,
    validate_fleet,
)
from .plant import (
    GeneratorRestore,
    GeneratorTrip,
    LoadFailure,
    LoadProfile,
    PlantEvent,
    ZoneLimitChange,
    sample_profile,
)

DEFAULT_MISSION_ID = 1

# Table-derived default weights per load group.
DEFAULT_GROUP_WEIGHTS = {
    LoadGroup.ACLC_VITAL: 5.0,
    LoadGroup.ACLC_NONVITAL: 2.5,
    LoadGroup.MW_CLASS: 8.0,
    LoadGroup.IPNC: 5.0,
    LoadGroup.PMM: 5.0,
}

MW = 1e6


@dataclass(frozen=True)
class PlantConfig:
    tau_s: float = 0.2
    loss_fraction: float = 0.02


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    window: MissionWindow
    fleet: tuple[LoadSpec, ...]
    generation: tuple[GenerationModule, ...]
    zones: tuple[ZoneLimit, ...]
    weight_sets: tuple[MissionWeightSet, ...]
    profiles: Mapping[int, LoadProfile]
    events: tuple[PlantEvent, ...]
    plant: PlantConfig = PlantConfig()
    impairment: ImpairmentConfig = ImpairmentConfig()
    controller: ControllerConfig = ControllerConfig()
    mission_id: int = DEFAULT_MISSION_ID


def validate_scenario(sc: ScenarioConfig) -> ValidationReport:
    """Fleet validation plus scenario-level consistency checks."""
    issues: list[ValidationIssue] = []
    weights = next(
        (ws for ws in sc.weight_sets if ws.mission_id == sc.mission_id), None
    )
    issues.extend(validate_fleet(sc.fleet, sc.zones, weights))
    if weights is None:
        issues.append(
            ValidationIssue(
                "missing-weights", f"mission {sc.mission_id}", "no weight set declared"
            )
        )
    by_id = fleet_by_id(sc.fleet)
    for lid, profile in sc.profiles.items():
        subject = f"profile for load {lid}"
        spec = by_id.get(lid)
        if spec is None:
            issues.append(ValidationIssue("profile-unknown-load", subject, "load not in fleet"))
            continue
        times = [t for t, _ in profile.breakpoints]
        for t, status in profile.breakpoints:
            if not spec.variability.contains(status):
                issues.append(
                    ValidationIssue(
                        "profile-domain", subject,
                        f"status {status} at t={t} outside the load's domain",
                    )
                )
        if times and (times[0] < sc.window.t_start_s or times[-1] > sc.window.t_end_s):
            issues.append(
                ValidationIssue("profile-window", subject, "breakpoints fall outside the window")
            )
    for spec in sc.fleet:
        if spec.id not in sc.profiles:
            issues.append(
                ValidationIssue(
                    "missing-profile", f"load {spec.id}", "no demand profile declared"
                )
            )
    module_ids = {m.id for m in sc.generation}
    for ev in sc.events:
        subject = f"event at t={ev.time_s}"
        if not sc.window.t_start_s <= ev.time_s <= sc.window.t_end_s:
            issues.append(ValidationIssue("event-window", subject, "outside the run window"))
        if isinstance(ev, (GeneratorTrip, GeneratorRestore)) and ev.module_id not in module_ids:
            issues.append(
                ValidationIssue("event-module", subject, f"unknown module {ev.module_id}")
            )
        if isinstance(ev, LoadFailure) and ev.load_id not in by_id:
            issues.append(ValidationIssue("event-load", subject, f"unknown load {ev.load_id}"))
    return ValidationReport(tuple(issues))


# ---------------------------------------------------------------------------
# bundled scenario


def _ramp(t0: float, v0: float, t1: float, v1: float, step_s: float) -> list[tuple[float, float]]:
    """Piecewise-constant staircase from (t0, v0) to (t1, v1)."""
    n = round((t1 - t0) / step_s)
    return [(t0 + k * step_s, v0 + (v1 - v0) * k / n) for k in range(n + 1)]


def default_fleet() -> tuple[LoadSpec, ...]:
    """42 loads: 16+12 ACLC, 4 MW-class, 6 IPNC, 4 PMM (continuous)."""
    fleet: list[LoadSpec] = []

    def add(name: str, group: LoadGroup, rated_w: float, variability: Variability) -> None:
        fleet.append(LoadSpec(len(fleet) + 1, name, group, rated_w, variability))

    for k in range(16):
        add(f"ACLC-V-{k + 1:02d}", LoadGroup.ACLC_VITAL, 1.0 * MW, Variability.binary())
    for k in range(12):
        add(f"ACLC-NV-{k + 1:02d}", LoadGroup.ACLC_NONVITAL, 1.0 * MW, Variability.binary())
    for k in range(4):
        add(f"MW-{k + 1:02d}", LoadGroup.MW_CLASS, 2.0 * MW, Variability.binary())
    for k in range(6):
        add(f"IPNC-{k + 1:02d}", LoadGroup.IPNC, 0.5 * MW, Variability.binary())
    for k in range(4):
        add(f"PMM-{k + 1:02d}", LoadGroup.PMM, 18.0 * MW, Variability.continuous())
    return tuple(fleet)


def default_generation() -> tuple[GenerationModule, ...]:
    return (
        GenerationModule(1, "MPGM1", 36.0 * MW),
        GenerationModule(2, "MPGM2", 36.0 * MW),
        GenerationModule(3, "APGM1", 12.0 * MW),
        GenerationModule(4, "APGM2", 12.0 * MW),
    )


def default_weights(fleet: Sequence[LoadSpec]) -> MissionWeightSet:
    return MissionWeightSet(
        mission_id=DEFAULT_MISSION_ID,
        weights={spec.id: DEFAULT_GROUP_WEIGHTS[spec.group] for spec in fleet},
        valid_from_s=0.0,
    )


def default_scenario() -> ScenarioConfig:
    """The bundled MPGM2-trip study on the 42-load notional fleet."""
    fleet = default_fleet()
    profiles: dict[int, LoadProfile] = {}
    by_group: dict[LoadGroup, list[LoadSpec]] = {}
    for spec in fleet:
        by_group.setdefault(spec.group, []).append(spec)

    for spec in by_group[LoadGroup.ACLC_VITAL]:
        profiles[spec.id] = LoadProfile(((0.0, 1.0),))
    for spec in by_group[LoadGroup.IPNC]:
        profiles[spec.id] = LoadProfile(((0.0, 1.0),))
    # ship-service non-vital loads come online in a stagger through t=130 s
    for k, spec in enumerate(by_group[LoadGroup.ACLC_NONVITAL]):
        profiles[spec.id] = LoadProfile(((0.0, 0.0), (20.0 + 10.0 * k, 1.0)))
    # MW-class pulses before the trip, then a sustained block through t=450 s
    mw_pulses = [(140.0, 180.0), (160.0, 210.0), (220.0, 270.0), (230.0, 280.0)]
    for (on, off), spec in zip(mw_pulses, by_group[LoadGroup.MW_CLASS]):
        profiles[spec.id] = LoadProfile(
            ((0.0, 0.0), (on, 1.0), (off, 0.0), (295.0, 1.0), (450.0, 0.0))
        )
    # propulsion ramps up to 0.64, eases off after the trip, drops away at 395 s
    for spec in by_group[LoadGroup.PMM]:
        points = [(0.0, 0.2)]
        points += _ramp(30.0, 0.2, 300.0, 0.64, 10.0)[1:]
        points += _ramp(330.0, 0.64, 394.0, 0.32, 2.0)[1:]
        points.append((395.0, 0.14))
        profiles[spec.id] = LoadProfile(tuple(points))

    return ScenarioConfig(
        name="mpgm2-trip",
        window=MissionWindow(0.0, 600.0, 0.1),
        fleet=fleet,
        generation=default_generation(),
        zones=(),
        weight_sets=(default_weights(fleet),),
        profiles=profiles,
        events=(GeneratorTrip(310.0, 2),),
        plant=PlantConfig(tau_s=0.2, loss_fraction=0.02),
        impairment=ImpairmentConfig(),
        controller=ControllerConfig(algorithm="advanced"),
    )


def total_demand_w(sc: ScenarioConfig, t: float) -> float:
    """Fleet-wide demanded power at time ``t`` (diagnostic helper)."""
    return sum(
        sample_profile(sc.profiles[spec.id], t) * spec.rated_power_w for spec in sc.fleet
    )


# ---------------------------------------------------------------------------
# JSON serialization


def _variability_to_json(v: Variability):
    if v.kind == "stepped":
        return {"stepped": list(v.levels)}
    return v.kind


def _variability_from_json(raw) -> Variability:
    if isinstance(raw, str):
        return Variability(raw)
    return Variability.stepped(raw["stepped"])


def _event_to_json(ev: PlantEvent) -> dict:
    if isinstance(ev, GeneratorTrip):
        return {"time_s": ev.time_s, "kind": "generator_trip", "module": ev.module_id}
    if isinstance(ev, GeneratorRestore):
        return {"time_s": ev.time_s, "kind": "generator_restore", "module": ev.module_id}
    if isinstance(ev, LoadFailure):
        return {"time_s": ev.time_s, "kind": "load_failure", "load": ev.load_id}
    return {"time_s": ev.time_s, "kind": "zone_limit_change", "zone": ev.zone,
            "limit_w": ev.limit_w}


def _event_from_json(raw: dict) -> PlantEvent:
    kind = raw["kind"]
    if kind == "generator_trip":
        return GeneratorTrip(raw["time_s"], raw["module"])
    if kind == "generator_restore":
        return GeneratorRestore(raw["time_s"], raw["module"])
    if kind == "load_failure":
        return LoadFailure(raw["time_s"], raw["load"])
    if kind == "zone_limit_change":
        return ZoneLimitChange(raw["time_s"], raw["zone"], raw["limit_w"])
    raise ValueError(f"unknown event kind {kind!r}")


def scenario_to_json(sc: ScenarioConfig) -> dict:
    return {
        "format": "loadshed-scenario-1",
        "name": sc.name,
        "mission_id": sc.mission_id,
        "window": {
            "t_start_s": sc.window.t_start_s,
            "t_end_s": sc.window.t_end_s,
            "tick_s": sc.window.tick_s,
        },
        "fleet": [
            {
                "id": s.id,
                "name": s.name,
                "group": s.group.value,
                "rated_power_w": s.rated_power_w,
                "variability": _variability_to_json(s.variability),
                "zone": s.zone,
            }
            for s in sc.fleet
        ],
        "generation": [
            {"id": m.id, "name": m.name, "rated_power_w": m.rated_power_w, "online": m.online}
            for m in sc.generation
        ],
        "zones": [
            {"zone": z.zone, "limit_w": z.limit_w, "members": list(z.members)}
            for z in sc.zones
        ],
        "weights": [
            {
                "mission_id": ws.mission_id,
                "valid_from_s": ws.valid_from_s,
                "weights": {str(lid): w for lid, w in ws.weights.items()},
            }
            for ws in sc.weight_sets
        ],
        "profiles": {
            str(lid): [[t, v] for t, v in profile.breakpoints]
            for lid, profile in sc.profiles.items()
        },
        "events": [_event_to_json(ev) for ev in sc.events],
        "plant": {"tau_s": sc.plant.tau_s, "loss_fraction": sc.plant.loss_fraction},
        "impairment": {
            "loss_probability": sc.impairment.loss_probability,
            "latency_ms": sc.impairment.latency_ms,
            "jitter_ms": sc.impairment.jitter_ms,
            "seed": sc.impairment.seed,
        },
        "controller": {
            "algorithm": sc.controller.algorithm,
            "period_s": sc.controller.period_s,
            "solve_deadline_s": sc.controller.solve_deadline_s,
            "stale_limit": sc.controller.stale_limit,
        },
    }


class ScenarioFormatError(Exception):
    pass


def scenario_from_json(raw: dict) -> ScenarioConfig:
    if raw.get("format") != "loadshed-scenario-1":
        raise ScenarioFormatError(f"unsupported scenario format {raw.get('format')!r}")
    window = MissionWindow(
        raw["window"]["t_start_s"], raw["window"]["t_end_s"], raw["window"]["tick_s"]
    )
    fleet = tuple(
        LoadSpec(
            id=item["id"],
            name=item["name"],
            group=LoadGroup(item["group"]),
            rated_power_w=item["rated_power_w"],
            variability=_variability_from_json(item["variability"]),
            zone=item.get("zone"),
        )
        for item in raw["fleet"]
    )
    generation = tuple(
        GenerationModule(m["id"], m["name"], m["rated_power_w"], m.get("online", True))
        for m in raw["generation"]
    )
    zones = tuple(
        ZoneLimit(z["zone"], z["limit_w"], tuple(z["members"])) for z in raw.get("zones", [])
    )
    weight_sets = tuple(
        MissionWeightSet(
            mission_id=w["mission_id"],
            weights={int(lid): val for lid, val in w["weights"].items()},
            valid_from_s=w.get("valid_from_s", 0.0),
        )
        for w in raw["weights"]
    )
    profiles = {
        int(lid): LoadProfile(tuple((t, v) for t, v in points))
        for lid, points in raw["profiles"].items()
    }
    events = tuple(_event_from_json(ev) for ev in raw.get("events", []))
    plant_raw = raw.get("plant", {})
    impair_raw = raw.get("impairment", {})
    ctrl_raw = raw.get("controller", {})
    return ScenarioConfig(
        name=raw.get("name", "scenario"),
        window=window,
        fleet=fleet,
        generation=generation,
        zones=zones,
        weight_sets=weight_sets,
        profiles=profiles,
        events=events,
        plant=PlantConfig(
            tau_s=plant_raw.get("tau_s", 0.2),
            loss_fraction=plant_raw.get("loss_fraction", 0.02),
        ),
        impairment=ImpairmentConfig(
            loss_probability=impair_raw.get("loss_probability", 0.0),
            latency_ms=impair_raw.get("latency_ms", 0.0),
            jitter_ms=impair_raw.get("jitter_ms", 0.0),
            seed=impair_raw.get("seed", 0),
        ),
        controller=ControllerConfig(
            algorithm=ctrl_raw.get("algorithm", "advanced"),
            period_s=ctrl_raw.get("period_s", 0.1),
            solve_deadline_s=ctrl_raw.get("solve_deadline_s", 0.05),
            stale_limit=ctrl_raw.get("stale_limit", 5),
        ),
        mission_id=raw.get("mission_id", DEFAULT_MISSION_ID),
    )


def load_scenario(path: str | Path) -> ScenarioConfig:
    with Path(path).open() as fh:
        return scenario_from_json(json.load(fh))


def save_scenario(sc: ScenarioConfig, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        json.dump(scenario_to_json(sc), fh, indent=2)
        fh.write("\n")
