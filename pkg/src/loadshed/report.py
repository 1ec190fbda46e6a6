"""Run artifacts: summary text, side-by-side comparison, per-group series.

All post-run analysis works from ``run.csv`` (plus the ``timing.csv``
sidecar when present), so comparisons can be made across processes and
machines without the original scenario object.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .metrics import MissionWindow, integral_operability
from .model import LoadGroup
from .records import (
    RunMeta,
    RunRecord,
    group_of,
    rated_of,
    read_run_csv,
    read_timing_csv,
    write_run_csv,
    write_timing_csv,
)

GROUPINGS = ("TOTAL",) + tuple(g.value for g in LoadGroup)


class IncompatibleRunsError(Exception):
    """The two runs do not share a tick grid and fleet."""


def run_window(meta: RunMeta) -> MissionWindow:
    return MissionWindow(meta.t_start_s, meta.t_end_s, meta.tick_s)


def integral_ops(meta: RunMeta, rows: Sequence[RunRecord]) -> tuple[float, float]:
    """Mission-period operability (commanded, measured) for one run."""
    window = run_window(meta)
    cmd = integral_operability(
        ((r.time_s, r.wsum_commanded, r.wsum_demand) for r in rows), window
    )
    meas = integral_operability(
        ((r.time_s, r.wsum_measured, r.wsum_demand) for r in rows), window
    )
    return cmd, meas


def group_power_series(
    meta: RunMeta, rows: Sequence[RunRecord], grouping: str
) -> list[tuple[float, float, float]]:
    """(time, demanded watts, served watts) for one load grouping.

    Served power is the physically measured power; TOTAL covers the fleet.
    """
    if grouping not in GROUPINGS:
        raise ValueError(f"unknown grouping {grouping!r}; choose from {GROUPINGS}")
    groups = group_of(meta)
    rated = rated_of(meta)
    ids = meta.load_ids
    members = [
        i
        for i, lid in enumerate(ids)
        if grouping == "TOTAL" or groups[lid].value == grouping
    ]
    series = []
    for r in rows:
        demand = sum(r.demands[i] * rated[ids[i]] for i in members)
        served = sum(r.measured_w[i] for i in members)
        series.append((r.time_s, demand, served))
    return series


def shed_summary(meta: RunMeta, rows: Sequence[RunRecord]) -> dict[str, dict[str, float]]:
    """Per-group service: demanded/served energy and loads ever cut to zero."""
    groups = group_of(meta)
    rated = rated_of(meta)
    ids = meta.load_ids
    out: dict[str, dict[str, float]] = {}
    for g in LoadGroup:
        members = [i for i, lid in enumerate(ids) if groups[lid] is g]
        if not members:
            continue
        demand_mwh = served_mwh = 0.0
        cut: set[int] = set()
        for r in rows:
            for i in members:
                d = r.demands[i]
                demand_mwh += d * rated[ids[i]]
                served_mwh += min(r.commanded[i], d) * rated[ids[i]]
                if d > 0.0 and r.commanded[i] == 0.0:
                    cut.add(ids[i])
        scale = meta.tick_s / 3.6e9  # watt-ticks to MWh
        out[g.value] = {
            "demand_mwh": demand_mwh * scale,
            "served_mwh": served_mwh * scale,
            "ratio": (served_mwh / demand_mwh) if demand_mwh > 0 else 1.0,
            "loads_cut": len(cut),
        }
    return out


def solve_time_stats(times: Sequence[float]) -> tuple[float, float]:
    """(max, p99) of the per-tick solve times, in seconds."""
    if not times:
        return 0.0, 0.0
    arr = np.asarray(times)
    return float(arr.max()), float(np.percentile(arr, 99))


def summarize(meta: RunMeta, rows: Sequence[RunRecord],
              solve_times: Sequence[float] | None = None) -> str:
    op_cmd, op_meas = integral_ops(meta, rows)
    times = [r.solve_time_s for r in rows] if solve_times is None else list(solve_times)
    t_max, t_p99 = solve_time_stats(times)
    degraded = sum(r.degraded for r in rows)
    lines = [
        f"run: algorithm={meta.algorithm} mode={meta.mode} seed={meta.seed}",
        f"window: [{meta.t_start_s}, {meta.t_end_s}] s at {meta.tick_s} s ticks"
        f" ({len(rows)} rows)",
        f"integral operability (commanded): {op_cmd:.4f}",
        f"integral operability (measured):  {op_meas:.4f}",
        f"solve time: max {t_max * 1e3:.2f} ms, p99 {t_p99 * 1e3:.2f} ms",
        f"degraded ticks: {degraded}",
        "per-group service (commanded basis):",
    ]
    for name, stats in shed_summary(meta, rows).items():
        lines.append(
            f"  {name:13s} served {stats['served_mwh']:8.2f} / "
            f"{stats['demand_mwh']:8.2f} MWh  ratio {stats['ratio']:.4f}  "
            f"loads cut {stats['loads_cut']:.0f}"
        )
    return "\n".join(lines) + "\n"


def write_run_artifacts(result, out_dir: str | Path) -> Path:
    """Write run.csv, timing.csv, summary.txt and per-group series CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_run_csv(out / "run.csv", result.meta, result.rows)
    write_timing_csv(out / "timing.csv", result.rows)
    (out / "summary.txt").write_text(summarize(result.meta, result.rows))
    groups_dir = out / "groups"
    groups_dir.mkdir(exist_ok=True)
    for grouping in GROUPINGS:
        write_group_csv(result.meta, result.rows, grouping, groups_dir)
    return out


class ScenarioValidationError(Exception):
    def __init__(self, report):
        super().__init__(str(report))
        self.report = report


def run_scenario(
    scenario_path: str | Path | None,
    out_dir: str | Path,
    mode: str = "lockstep",
    seed: int | None = None,
    algorithm: str | None = None,
) -> Path:
    """Load a scenario (bundled default when None), run it, write artifacts.

    Raises :class:`ScenarioValidationError` for an invalid scenario and
    ``ValueError`` for an unknown mode.
    """
    from .scenario import default_scenario, load_scenario, validate_scenario
    from .sim import run_lockstep, run_networked

    sc = default_scenario() if scenario_path is None else load_scenario(scenario_path)
    checked = validate_scenario(sc)
    if not checked.ok:
        raise ScenarioValidationError(checked)
    if mode == "lockstep":
        result = run_lockstep(sc, algorithm=algorithm, seed=seed)
    elif mode == "networked":
        result = run_networked(sc, algorithm=algorithm, seed=seed)
    else:
        raise ValueError(f"unknown mode {mode!r}; use 'lockstep' or 'networked'")
    return write_run_artifacts(result, out_dir)


def write_group_csv(meta: RunMeta, rows: Sequence[RunRecord], grouping: str,
                    out_dir: str | Path) -> Path:
    path = Path(out_dir) / f"{grouping}.csv"
    with path.open("w", newline="") as fh:
        fh.write(f"# loadshed-group-csv v1 grouping={grouping} served=measured\n")
        fh.write("time_s,demand_w,served_w\n")
        for t, demand, served in group_power_series(meta, rows, grouping):
            fh.write(f"{t!r},{demand!r},{served!r}\n")
    return path


def emit_plot_data(run_csv: str | Path, grouping: str, out_dir: str | Path) -> Path:
    meta, rows = read_run_csv(run_csv)
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    return write_group_csv(meta, rows, grouping, out_dir)


def compare_runs(run_a_csv: str | Path, run_b_csv: str | Path) -> str:
    """Side-by-side evaluation table for two runs on the same grid and fleet."""
    meta_a, rows_a = read_run_csv(run_a_csv)
    meta_b, rows_b = read_run_csv(run_b_csv)
    if meta_a.fleet != meta_b.fleet:
        raise IncompatibleRunsError("runs describe different fleets")
    if (meta_a.tick_s, meta_a.t_start_s, meta_a.t_end_s) != (
        meta_b.tick_s, meta_b.t_start_s, meta_b.t_end_s,
    ) or len(rows_a) != len(rows_b):
        raise IncompatibleRunsError("runs use different tick grids")

    def metrics_of(path, meta, rows):
        op_cmd, op_meas = integral_ops(meta, rows)
        timing = Path(path).with_name("timing.csv")
        times = read_timing_csv(timing) if timing.exists() else [r.solve_time_s for r in rows]
        t_max, t_p99 = solve_time_stats(times)
        commands = sum(
            1
            for prev, cur in zip(rows, rows[1:])
            for a, b in zip(prev.commanded, cur.commanded)
            if a != b
        )
        return {
            "algorithm": meta.algorithm,
            "op_cmd": op_cmd,
            "op_meas": op_meas,
            "t_max_ms": t_max * 1e3,
            "t_p99_ms": t_p99 * 1e3,
            "commands": commands,
            "degraded": sum(r.degraded for r in rows),
            "sheds": shed_summary(meta, rows),
        }

    a = metrics_of(run_a_csv, meta_a, rows_a)
    b = metrics_of(run_b_csv, meta_b, rows_b)
    w = 28
    lines = [
        f"{'metric':30s} {'run A':>{w}} {'run B':>{w}}",
        f"{'algorithm':30s} {a['algorithm']:>{w}} {b['algorithm']:>{w}}",
        f"{'integral operability (cmd)':30s} {a['op_cmd']:>{w}.4f} {b['op_cmd']:>{w}.4f}",
        f"{'integral operability (meas)':30s} {a['op_meas']:>{w}.4f} {b['op_meas']:>{w}.4f}",
        f"{'solve time p99 (ms)':30s} {a['t_p99_ms']:>{w}.2f} {b['t_p99_ms']:>{w}.2f}",
        f"{'solve time max (ms)':30s} {a['t_max_ms']:>{w}.2f} {b['t_max_ms']:>{w}.2f}",
        f"{'command changes':30s} {a['commands']:>{w}d} {b['commands']:>{w}d}",
        f"{'degraded ticks':30s} {a['degraded']:>{w}d} {b['degraded']:>{w}d}",
    ]
    for gname in a["sheds"]:
        sa, sb = a["sheds"][gname], b["sheds"][gname]
        lines.append(
            f"{gname + ' service ratio':30s} {sa['ratio']:>{w}.4f} {sb['ratio']:>{w}.4f}"
        )
        lines.append(
            f"{gname + ' loads cut':30s} {sa['loads_cut']:>{w}.0f} {sb['loads_cut']:>{w}.0f}"
        )
    return "\n".join(lines) + "\n"
