"""Stage-based baseline load shedding.

A single timer tracks continuous per-unit overload. Past 250 ms the
controller starts cutting non-vital loads, past 2.5 s semi-vital loads,
past 5.0 s vital loads, one load per control tick, in declaration order
within each category. Loads are cut to zero and never restored within a
run; the timer resets whenever loading drops to 1.0 pu or below.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from collections.abc import Sequence

from .model import Category, LoadSpec, ShedCommand, SystemSnapshot

# Stage opening thresholds, in escalation order (seconds of sustained overload).
STAGE_THRESHOLDS_S: tuple[tuple[Category, float], ...] = (
    (Category.NON_VITAL, 0.25),
    (Category.SEMI_VITAL, 2.5),
    (Category.VITAL, 5.0),
)

# The timer accumulates tick-sized float increments; without slack, 25 ticks of
# 0.1 s sum a hair above 2.5 and would open a stage one tick early. Drift over
# any plausible run is far below a microsecond.
_BOUNDARY_SLACK_S = 1e-6


@dataclass(frozen=True)
class BaselineState:
    overload_timer_s: float = 0.0
    shed: frozenset[int] = frozenset()
    cursors: tuple[int, int, int] = (0, 0, 0)  # next index per stage category


def baseline_reset() -> BaselineState:
    return BaselineState()


def category_order(fleet: Sequence[LoadSpec]) -> dict[Category, list[int]]:
    """Load ids per category, in fleet declaration order."""
    order: dict[Category, list[int]] = {cat: [] for cat, _ in STAGE_THRESHOLDS_S}
    for spec in fleet:
        order[spec.group.category].append(spec.id)
    return order


def baseline_step(
    state: BaselineState,
    snapshot: SystemSnapshot,
    fleet: Sequence[LoadSpec],
    tick_s: float,
) -> tuple[BaselineState, tuple[ShedCommand, ...]]:
    """Advance the overload timer by one tick and shed at most one load."""
    if snapshot.loading_pu <= 1.0:
        if state.overload_timer_s == 0.0:
            return state, ()
        return replace(state, overload_timer_s=0.0), ()

    timer = state.overload_timer_s + tick_s
    order = category_order(fleet)
    cursors = list(state.cursors)
    for stage, (cat, threshold) in enumerate(STAGE_THRESHOLDS_S):
        if timer <= threshold + _BOUNDARY_SLACK_S:
            continue
        ids = order[cat]
        if cursors[stage] >= len(ids):
            continue  # this category is exhausted, try the next open stage
        target = ids[cursors[stage]]
        cursors[stage] += 1
        next_state = BaselineState(
            overload_timer_s=timer,
            shed=state.shed | {target},
            cursors=tuple(cursors),
        )
        return next_state, (ShedCommand(target, 0.0),)

    return replace(state, overload_timer_s=timer), ()
