"""Mission-weighted load shedding optimizer.

``solve`` maximizes total weighted operating status subject to the capacity
budget, per-zone line-flow limits and forced-off loads, by branch and bound
over the discrete loads with a linear-relaxation upper bound and a greedy
density fill of the continuous loads at each leaf. Zone limits are disjoint
per load (each load sits in at most one zone), so the constraint family is
laminar and the greedy fill solves the continuous subproblem exactly.

``brute_force_solve`` is the verification oracle: it enumerates every
discrete assignment outright (vectorized, in blocks) and fills the
continuous loads per combination. It shares no search code with ``solve``.

Ties are broken deterministically: higher objective, then higher served
power, then lexicographically by ascending load id preferring the higher
status. Objectives and served power are compared via exactly rounded sums
(``math.fsum``) so both solvers rank candidate plans identically.
"""

from __future__ import annotations

import math
import time
from collections.abc import Sequence, Set
from dataclasses import dataclass

import numpy as np

from .model import (
    LoadSpec,
    MissionWeightSet,
    SystemSnapshot,
    Variability,
    ZoneLimit,
)

OBJ_REL_TOL = 1e-9  # tie window for objective comparisons
FEASIBILITY_TOL_W = 1e-6  # allowed constraint slack when auditing plans
_BLOCK = 1 << 16
MAX_BRUTE_COMBOS = 1 << 24
MAX_BRUTE_CONTINUOUS = 4


class ConfigurationError(Exception):
    """The instance cannot be built from the given fleet/weights/snapshot."""


class InstanceTooLargeError(Exception):
    """The instance exceeds what brute-force enumeration will attempt."""


@dataclass(frozen=True)
class InstanceEntry:
    """One load as seen by the optimizer at a single tick."""

    load_id: int
    weight: float
    rated_power_w: float
    demand_status: float
    variability: Variability
    forced_off: bool = False
    zone: str | None = None

    @property
    def required_power_w(self) -> float:
        return self.demand_status * self.rated_power_w

    @property
    def status_cap(self) -> float:
        if self.forced_off:
            return 0.0
        return min(max(self.demand_status, 0.0), 1.0)


@dataclass(frozen=True)
class ShedInstance:
    entries: tuple[InstanceEntry, ...]
    capacity_budget_w: float
    zone_limits: tuple[ZoneLimit, ...] = ()


@dataclass(frozen=True)
class ShedPlan:
    statuses: dict[int, float]
    objective: float
    served_power_w: float
    solve_time_s: float
    optimal: bool


def build_instance(
    snapshot: SystemSnapshot,
    weights: MissionWeightSet,
    fleet: Sequence[LoadSpec],
    zones: Sequence[ZoneLimit] = (),
    forced_off: Set[int] = frozenset(),
) -> ShedInstance:
    """Assemble the per-tick optimization problem from telemetry and config."""
    demand = snapshot.demand_by_id()
    entries = []
    for spec in fleet:
        if spec.id not in weights.weights:
            raise ConfigurationError(
                f"mission {weights.mission_id} has no weight for load {spec.id}"
            )
        if spec.id not in demand:
            raise ConfigurationError(f"snapshot carries no demand for load {spec.id}")
        entries.append(
            InstanceEntry(
                load_id=spec.id,
                weight=weights.weights[spec.id],
                rated_power_w=spec.rated_power_w,
                demand_status=min(max(demand[spec.id], 0.0), 1.0),
                variability=spec.variability,
                forced_off=spec.id in forced_off,
                zone=spec.zone,
            )
        )
    budget = max(0.0, snapshot.total_capacity_w - snapshot.total_loss_w)
    return ShedInstance(tuple(entries), budget, tuple(zones))


# ---------------------------------------------------------------------------
# shared preparation and plan bookkeeping


class _Prepared:
    """Index structures shared by both solvers (data only, no search logic)."""

    def __init__(self, instance: ShedInstance):
        entries = instance.entries
        self.entries = entries
        self.n = len(entries)
        # canonical evaluation order: ascending load id
        self.canonical = sorted(range(self.n), key=lambda i: entries[i].load_id)
        self.zone_names = [zl.zone for zl in instance.zone_limits]
        self.zone_limits = [max(0.0, zl.limit_w) for zl in instance.zone_limits]
        zone_index = {name: zi for zi, name in enumerate(self.zone_names)}
        zone_members = [set(zl.members) for zl in instance.zone_limits]
        self.zone_of = []
        for e in entries:
            zi = zone_index.get(e.zone, -1) if e.zone is not None else -1
            if zi >= 0 and e.load_id not in zone_members[zi]:
                zi = -1  # declared zone has a limit but this load is not a member
            self.zone_of.append(zi)

        def density_key(i: int) -> tuple[float, int]:
            e = entries[i]
            return (-e.weight / e.rated_power_w, e.load_id)

        self.branch: list[int] = []  # entry indices with a real discrete choice
        self.choices: dict[int, tuple[float, ...]] = {}
        self.cont: list[int] = []  # continuous entries with room to move
        for i, e in enumerate(entries):
            cap = e.status_cap
            disc = e.variability.discrete_statuses(cap)
            if disc is None:
                if cap > 0.0:
                    self.cont.append(i)
                continue
            if len(disc) > 1:
                self.branch.append(i)
                self.choices[i] = disc
        self.branch.sort(key=density_key)
        self.cont.sort(key=density_key)

        # relaxation items in density order: every branchable and continuous
        # load, capped at the highest status it could take
        relax = []
        for pos, i in enumerate(self.branch):
            e = entries[i]
            relax.append((i, pos, max(self.choices[i]) * e.rated_power_w))
        for i in self.cont:
            e = entries[i]
            relax.append((i, -1, e.status_cap * e.rated_power_w))
        relax.sort(key=lambda item: density_key(item[0]))
        self.relax = [
            (pos, max_power, entries[i].weight / entries[i].rated_power_w, self.zone_of[i])
            for i, pos, max_power in relax
        ]

    def plan_key(self, statuses: Sequence[float]) -> tuple[float, float, tuple[float, ...]]:
        """Total-order key: (objective, served power, lexicographic statuses)."""
        obj = math.fsum(self.entries[i].weight * statuses[i] for i in self.canonical)
        served = math.fsum(self.entries[i].rated_power_w * statuses[i] for i in self.canonical)
        lex = tuple(statuses[i] for i in self.canonical)
        return (obj, served, lex)

    def to_plan(self, statuses: Sequence[float], solve_time_s: float, optimal: bool) -> ShedPlan:
        obj, served, _ = self.plan_key(statuses)
        by_id = {self.entries[i].load_id: statuses[i] for i in range(self.n)}
        return ShedPlan(by_id, obj, served, solve_time_s, optimal)


def _tie_tol(ref: float) -> float:
    return OBJ_REL_TOL * (1.0 + abs(ref))


# ---------------------------------------------------------------------------
# exact branch-and-bound solver


class _DeadlineExpired(Exception):
    pass


def solve(instance: ShedInstance, deadline_s: float | None = 0.05) -> ShedPlan:
    """Maximize weighted status; exact unless the deadline expires first.

    On expiry the best feasible incumbent found so far is returned with
    ``optimal=False``. The all-zero plan is always feasible, so a plan is
    always returned.
    """
    t0 = time.perf_counter()
    prep = _Prepared(instance)
    entries = prep.entries
    budget = instance.capacity_budget_w

    statuses = [0.0] * prep.n
    best_statuses = list(statuses)
    best_key = prep.plan_key(statuses)
    deadline = None if deadline_s is None else t0 + deadline_s
    nodes = 0
    n_branch = len(prep.branch)
    zone_rem = list(prep.zone_limits)

    def relax_bound(level: int, rem: float, obj_acc: float) -> float:
        bound = obj_acc
        if prep.zone_names:
            zrem = list(zone_rem)
            for pos, max_power, density, zi in prep.relax:
                if 0 <= pos < level:
                    continue
                room = rem if zi < 0 else min(rem, zrem[zi])
                take = max_power if max_power <= room else room
                if take <= 0.0:
                    continue
                bound += take * density
                rem -= take
                if zi >= 0:
                    zrem[zi] -= take
                if rem <= 0.0:
                    break
        else:
            for pos, max_power, density, _ in prep.relax:
                if 0 <= pos < level:
                    continue
                take = max_power if max_power <= rem else rem
                bound += take * density
                rem -= take
                if rem <= 0.0:
                    break
        return bound

    def fill_continuous(rem: float) -> list[tuple[int, float]]:
        filled = []
        for i in prep.cont:
            e = entries[i]
            zi = prep.zone_of[i]
            room = rem if zi < 0 else min(rem, zone_rem[zi])
            take = min(e.status_cap * e.rated_power_w, max(room, 0.0))
            if take > 0.0:
                filled.append((i, take))
                rem -= take
                if zi >= 0:
                    zone_rem[zi] -= take
        return filled

    def leaf(rem: float) -> None:
        nonlocal best_key, best_statuses
        filled = fill_continuous(rem)
        for i, take in filled:
            statuses[i] = take / entries[i].rated_power_w
        key = prep.plan_key(statuses)
        if key > best_key:
            best_key = key
            best_statuses = list(statuses)
        for i, take in filled:
            statuses[i] = 0.0
            zi = prep.zone_of[i]
            if zi >= 0:
                zone_rem[zi] += take

    def recurse(level: int, rem: float, obj_acc: float) -> None:
        nonlocal nodes
        nodes += 1
        if deadline is not None and nodes % 128 == 0 and time.perf_counter() > deadline:
            raise _DeadlineExpired
        if relax_bound(level, rem, obj_acc) < best_key[0] - _tie_tol(best_key[0]):
            return
        if level == n_branch:
            leaf(rem)
            return
        i = prep.branch[level]
        e = entries[i]
        zi = prep.zone_of[i]
        for status in reversed(prep.choices[i]):  # highest status first
            power = status * e.rated_power_w
            if power > rem:
                continue
            if zi >= 0 and power > zone_rem[zi]:
                continue
            statuses[i] = status
            if zi >= 0:
                zone_rem[zi] -= power
            recurse(level + 1, rem - power, obj_acc + e.weight * status)
            if zi >= 0:
                zone_rem[zi] += power
            statuses[i] = 0.0

    optimal = True
    try:
        recurse(0, budget, 0.0)
    except _DeadlineExpired:
        optimal = False
    return prep.to_plan(best_statuses, time.perf_counter() - t0, optimal)


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_solve(instance: ShedInstance) -> ShedPlan:
    """Exhaustively enumerate all discrete assignments (vectorized in blocks).

    Continuous loads are filled per combination in weight-density order,
    which is exact because each load belongs to at most one zone. Raises
    :class:`InstanceTooLargeError` beyond 2**24 combinations or more than
    4 continuous loads.
    """
    t0 = time.perf_counter()
    prep = _Prepared(instance)
    entries = prep.entries
    if len(prep.cont) > MAX_BRUTE_CONTINUOUS:
        raise InstanceTooLargeError(f"{len(prep.cont)} continuous loads exceed the oracle limit")
    cards = [len(prep.choices[i]) for i in prep.branch]
    total = 1
    for c in cards:
        total *= c
        if total > MAX_BRUTE_COMBOS:
            raise InstanceTooLargeError(f"more than {MAX_BRUTE_COMBOS} discrete combinations")

    budget = instance.capacity_budget_w
    n_zones = len(prep.zone_limits)
    choice_arrays = [np.asarray(prep.choices[i], dtype=np.float64) for i in prep.branch]
    strides = [1] * len(cards)
    for i in range(len(cards) - 2, -1, -1):
        strides[i] = strides[i + 1] * cards[i + 1]

    best_statuses = [0.0] * prep.n
    best_key = prep.plan_key(best_statuses)

    for start in range(0, total, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total), dtype=np.int64)
        m = idx.size
        disc = [choice_arrays[k][(idx // strides[k]) % cards[k]] for k in range(len(cards))]
        power = np.zeros(m)
        obj = np.zeros(m)
        zone_used = [np.zeros(m) for _ in range(n_zones)]
        for k, i in enumerate(prep.branch):
            e = entries[i]
            p = disc[k] * e.rated_power_w
            power += p
            obj += disc[k] * e.weight
            zi = prep.zone_of[i]
            if zi >= 0:
                zone_used[zi] += p
        feasible = power <= budget
        for zi in range(n_zones):
            feasible &= zone_used[zi] <= prep.zone_limits[zi]
        rem = np.maximum(budget - power, 0.0)
        zrem = [np.maximum(prep.zone_limits[zi] - zone_used[zi], 0.0) for zi in range(n_zones)]
        cont_status = []
        for i in prep.cont:
            e = entries[i]
            zi = prep.zone_of[i]
            room = rem if zi < 0 else np.minimum(rem, zrem[zi])
            take = np.minimum(e.status_cap * e.rated_power_w, room)
            rem = rem - take
            if zi >= 0:
                zrem[zi] = zrem[zi] - take
            obj += take * (e.weight / e.rated_power_w)
            cont_status.append(take / e.rated_power_w)
        obj = np.where(feasible, obj, -np.inf)
        block_max = float(obj.max())
        ref = max(block_max, best_key[0])
        candidates = np.nonzero(obj >= ref - _tie_tol(ref))[0]
        for row in candidates:
            statuses = [0.0] * prep.n
            for k, i in enumerate(prep.branch):
                statuses[i] = float(disc[k][row])
            for k, i in enumerate(prep.cont):
                statuses[i] = float(cont_status[k][row])
            key = prep.plan_key(statuses)
            if key > best_key:
                best_key = key
                best_statuses = statuses

    return prep.to_plan(best_statuses, time.perf_counter() - t0, True)


# ---------------------------------------------------------------------------
# plan audit


def plan_violations(
    instance: ShedInstance,
    plan: ShedPlan,
    tol_w: float = FEASIBILITY_TOL_W,
) -> list[str]:
    """Every constraint the plan violates beyond ``tol_w`` watts of slack."""
    problems = []
    served_total = 0.0
    zone_served: dict[str, float] = {zl.zone: 0.0 for zl in instance.zone_limits}
    zone_members = {zl.zone: set(zl.members) for zl in instance.zone_limits}
    for e in instance.entries:
        s = plan.statuses.get(e.load_id, 0.0)
        p = s * e.rated_power_w
        served_total += p
        if e.zone in zone_served and e.load_id in zone_members[e.zone]:
            zone_served[e.zone] += p
        if e.forced_off and abs(s) > 1e-9:
            problems.append(f"load {e.load_id}: forced off but status {s}")
        if s > e.status_cap + 1e-9:
            problems.append(f"load {e.load_id}: status {s} exceeds demand {e.status_cap}")
        if not e.variability.contains(s):
            problems.append(f"load {e.load_id}: status {s} outside its domain")
    if served_total > instance.capacity_budget_w + tol_w:
        problems.append(
            f"capacity: served {served_total} W exceeds budget {instance.capacity_budget_w} W"
        )
    for zl in instance.zone_limits:
        if zone_served[zl.zone] > zl.limit_w + tol_w:
            problems.append(
                f"zone {zl.zone}: served {zone_served[zl.zone]} W exceeds limit {zl.limit_w} W"
            )
    return problems
