"""Core domain model: loads, generation modules, mission weights, snapshots.

Everything here is an immutable value type, safe to copy between the plant,
the link layer, and the controllers. Validation is report-style: a bad fleet
never raises, it produces a :class:`ValidationReport` listing every problem.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

STATUS_TOL = 1e-9


class Category(Enum):
    """Shedding priority category used by the staged baseline controller."""

    NON_VITAL = "non_vital"
    SEMI_VITAL = "semi_vital"
    VITAL = "vital"


class LoadGroup(Enum):
    ACLC_VITAL = "ACLC_Vital"
    ACLC_NONVITAL = "ACLC_NonVital"
    MW_CLASS = "MWClass"
    IPNC = "IPNC"
    PMM = "PMM"

    @property
    def category(self) -> Category:
        return _GROUP_CATEGORY[self]


# Total mapping: every group has exactly one baseline category.
_GROUP_CATEGORY = {
    LoadGroup.ACLC_VITAL: Category.VITAL,
    LoadGroup.ACLC_NONVITAL: Category.NON_VITAL,
    LoadGroup.MW_CLASS: Category.VITAL,
    LoadGroup.IPNC: Category.SEMI_VITAL,
    LoadGroup.PMM: Category.VITAL,
}


@dataclass(frozen=True)
class Variability:
    """Feasible operating statuses of a load.

    ``binary`` loads run at 0 or 1, ``stepped`` loads at 0 or one of their
    levels, ``continuous`` loads anywhere in [0, 1].
    """

    kind: str  # "binary" | "stepped" | "continuous"
    levels: tuple[float, ...] = ()

    @staticmethod
    def binary() -> "Variability":
        return Variability("binary")

    @staticmethod
    def continuous() -> "Variability":
        return Variability("continuous")

    @staticmethod
    def stepped(levels: Sequence[float]) -> "Variability":
        return Variability("stepped", tuple(float(x) for x in levels))

    def contains(self, status: float, tol: float = STATUS_TOL) -> bool:
        if self.kind == "continuous":
            return -tol <= status <= 1.0 + tol
        if self.kind == "binary":
            return abs(status) <= tol or abs(status - 1.0) <= tol
        if abs(status) <= tol:
            return True
        return any(abs(status - lvl) <= tol for lvl in self.levels)

    def discrete_statuses(self, cap: float = 1.0) -> tuple[float, ...] | None:
        """Statuses available up to ``cap``, or None for a continuous load."""
        if self.kind == "continuous":
            return None
        if self.kind == "binary":
            feasible = [s for s in (0.0, 1.0) if s <= cap + STATUS_TOL]
        else:
            feasible = [0.0] + [lvl for lvl in self.levels if lvl <= cap + STATUS_TOL]
        return tuple(feasible)


@dataclass(frozen=True)
class LoadSpec:
    """One shedable load: identity, rating, group and status domain."""

    id: int
    name: str
    group: LoadGroup
    rated_power_w: float
    variability: Variability
    zone: str | None = None


@dataclass(frozen=True)
class LoadState:
    load_id: int
    status: float  # fraction of rated power, within the load's domain


@dataclass(frozen=True)
class DemandPoint:
    load_id: int
    demand_status: float  # maximum operation status demanded right now


@dataclass(frozen=True)
class MissionWeightSet:
    """Per-load importance weights for one mission, active from ``valid_from_s``."""

    mission_id: int
    weights: Mapping[int, float]
    valid_from_s: float = 0.0


@dataclass(frozen=True)
class GenerationModule:
    id: int
    name: str
    rated_power_w: float
    online: bool = True


@dataclass(frozen=True)
class ZoneLimit:
    """Maximum power deliverable into one damage-control zone."""

    zone: str
    limit_w: float
    members: tuple[int, ...]


@dataclass(frozen=True)
class SystemSnapshot:
    """Plant telemetry for one control tick.

    ``demands`` and ``measured_w`` are aligned, one entry per fleet load in
    declaration order.
    """

    time_s: float
    mission_id: int
    demands: tuple[DemandPoint, ...]
    measured_w: tuple[float, ...]
    total_capacity_w: float
    total_loss_w: float
    loading_pu: float

    def demand_by_id(self) -> dict[int, float]:
        return {d.load_id: d.demand_status for d in self.demands}

    def measured_by_id(self) -> dict[int, float]:
        return {d.load_id: p for d, p in zip(self.demands, self.measured_w)}


@dataclass(frozen=True)
class ShedCommand:
    """Controller order: set one load to ``status``."""

    load_id: int
    status: float


@dataclass(frozen=True)
class ValidationIssue:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.subject}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    issues: tuple[ValidationIssue, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.issues

    def __iter__(self):
        return iter(self.issues)

    def __str__(self) -> str:
        if self.ok:
            return "configuration ok"
        return "\n".join(str(i) for i in self.issues)


def validate_fleet(
    fleet: Sequence[LoadSpec],
    zones: Sequence[ZoneLimit] = (),
    weights: MissionWeightSet | None = None,
) -> ValidationReport:
    """Check every fleet/zone/weight invariant; collects issues, never raises."""
    issues: list[ValidationIssue] = []

    def bad(code: str, subject: str, message: str) -> None:
        issues.append(ValidationIssue(code, subject, message))

    seen: set[int] = set()
    for spec in fleet:
        subject = f"load {spec.id}"
        if spec.id in seen:
            bad("duplicate-id", subject, "id appears more than once in the fleet")
        seen.add(spec.id)
        if not spec.rated_power_w > 0:
            bad("rated-power", subject, f"rated power must be > 0 W, got {spec.rated_power_w}")
        if spec.variability.kind == "stepped":
            levels = spec.variability.levels
            if not levels:
                bad("stepped-levels", subject, "stepped load declares no levels")
            else:
                if any(b <= a for a, b in zip(levels, levels[1:])):
                    bad("stepped-levels", subject, f"levels not strictly ascending: {list(levels)}")
                if any(not (0.0 < lvl <= 1.0) for lvl in levels):
                    bad("stepped-levels", subject, f"levels must lie in (0, 1]: {list(levels)}")
                if abs(levels[-1] - 1.0) > STATUS_TOL:
                    bad("stepped-levels", subject, f"last level must be 1.0, got {levels[-1]}")
        elif spec.variability.kind not in ("binary", "continuous"):
            bad("variability", subject, f"unknown variability kind {spec.variability.kind!r}")

    by_id = {spec.id: spec for spec in fleet}

    seen_zones: set[str] = set()
    for zl in zones:
        subject = f"zone {zl.zone}"
        if zl.zone in seen_zones:
            bad("duplicate-zone", subject, "zone limit declared more than once")
        seen_zones.add(zl.zone)
        if zl.limit_w < 0:
            bad("zone-limit", subject, f"limit must be >= 0 W, got {zl.limit_w}")
        if not zl.members:
            bad("zone-members", subject, "member set is empty")
        for lid in zl.members:
            spec = by_id.get(lid)
            if spec is None:
                bad("zone-members", subject, f"member load {lid} is not in the fleet")
            elif spec.zone != zl.zone:
                bad("zone-members", subject, f"member load {lid} declares zone {spec.zone!r}")

    if weights is not None:
        subject = f"mission {weights.mission_id}"
        for spec in fleet:
            if spec.id not in weights.weights:
                bad("missing-weight", subject, f"load {spec.id} has no weight")
        for lid, w in weights.weights.items():
            if w < 0:
                bad("negative-weight", subject, f"load {lid} weight {w} is negative")
        if weights.weights and not any(w > 0 for w in weights.weights.values()):
            bad("all-zero-weights", subject, "at least one weight must be positive")

    return ValidationReport(tuple(issues))


def required_power(spec: LoadSpec, demand: DemandPoint) -> float:
    """Power needed to serve ``demand`` in full: demand status times rating."""
    if spec.id != demand.load_id:
        raise ValueError(f"demand point for load {demand.load_id} applied to load {spec.id}")
    return demand.demand_status * spec.rated_power_w


def online_capacity(modules: Iterable[GenerationModule]) -> float:
    """Total rated power of the modules currently online."""
    return sum(m.rated_power_w for m in modules if m.online)


def fleet_by_id(fleet: Sequence[LoadSpec]) -> dict[int, LoadSpec]:
    return {spec.id: spec for spec in fleet}
