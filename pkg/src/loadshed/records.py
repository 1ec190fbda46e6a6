"""Per-tick run records and their CSV serialization.

``run.csv`` holds everything deterministic about a run and is byte-identical
across repeats of the same seeded lockstep scenario. Wall-clock solve times
are written to a ``timing.csv`` sidecar instead, since they vary run to run.
The CSV schema is versioned in comment lines so downstream tooling can rely
on it.
"""

from __future__ import annotations

import csv
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

from .model import LoadGroup, LoadSpec

RUN_CSV_VERSION = "loadshed-run-csv v1"


@dataclass(frozen=True)
class RunRecord:
    """One control tick: plant truth plus the controller's response to it.

    ``commanded`` is the controller's intent after processing this tick's
    telemetry (it takes physical effect one tick later). ``wsum_*`` are the
    mission-weighted service sums feeding the operability integrals.
    """

    time_s: float
    capacity_w: float
    loss_w: float
    loading_pu: float
    wsum_demand: float
    wsum_commanded: float
    wsum_measured: float
    op_commanded: float
    op_measured: float
    degraded: bool
    demands: tuple[float, ...]
    commanded: tuple[float, ...]
    measured_w: tuple[float, ...]
    solve_time_s: float = 0.0  # wall clock; kept out of run.csv


@dataclass(frozen=True)
class RunMeta:
    tick_s: float
    t_start_s: float
    t_end_s: float
    algorithm: str
    mode: str
    seed: int
    mission_id: int
    fleet: tuple[tuple[int, str, float], ...]  # (load id, group name, rated watts)

    @property
    def load_ids(self) -> tuple[int, ...]:
        return tuple(lid for lid, _, _ in self.fleet)


def meta_from_fleet(
    fleet: Sequence[LoadSpec],
    *,
    tick_s: float,
    t_start_s: float,
    t_end_s: float,
    algorithm: str,
    mode: str,
    seed: int,
    mission_id: int,
) -> RunMeta:
    return RunMeta(
        tick_s=tick_s,
        t_start_s=t_start_s,
        t_end_s=t_end_s,
        algorithm=algorithm,
        mode=mode,
        seed=seed,
        mission_id=mission_id,
        fleet=tuple((s.id, s.group.value, s.rated_power_w) for s in fleet),
    )


def _columns(load_ids: Sequence[int]) -> list[str]:
    cols = [
        "time_s", "capacity_w", "loss_w", "loading_pu",
        "wsum_demand", "wsum_commanded", "wsum_measured",
        "op_commanded", "op_measured", "degraded",
    ]
    cols += [f"demand_{lid}" for lid in load_ids]
    cols += [f"cmd_{lid}" for lid in load_ids]
    cols += [f"meas_w_{lid}" for lid in load_ids]
    return cols


def write_run_csv(path: str | Path, meta: RunMeta, rows: Sequence[RunRecord]) -> None:
    path = Path(path)
    fleet_desc = ",".join(f"{lid}:{group}:{rated!r}" for lid, group, rated in meta.fleet)
    with path.open("w", newline="") as fh:
        fh.write(f"# {RUN_CSV_VERSION}\n")
        fh.write(
            f"# meta tick_s={meta.tick_s!r} t_start_s={meta.t_start_s!r}"
            f" t_end_s={meta.t_end_s!r} algorithm={meta.algorithm}"
            f" mode={meta.mode} seed={meta.seed} mission_id={meta.mission_id}\n"
        )
        fh.write(f"# fleet {fleet_desc}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_columns(meta.load_ids))
        for r in rows:
            row = [
                repr(r.time_s), repr(r.capacity_w), repr(r.loss_w), repr(r.loading_pu),
                repr(r.wsum_demand), repr(r.wsum_commanded), repr(r.wsum_measured),
                repr(r.op_commanded), repr(r.op_measured), int(r.degraded),
            ]
            row += [repr(v) for v in r.demands]
            row += [repr(v) for v in r.commanded]
            row += [repr(v) for v in r.measured_w]
            writer.writerow(row)


def write_timing_csv(path: str | Path, rows: Sequence[RunRecord]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["tick", "time_s", "solve_time_s"])
        for k, r in enumerate(rows, start=1):
            writer.writerow([k, repr(r.time_s), repr(r.solve_time_s)])


def read_timing_csv(path: str | Path) -> list[float]:
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        return [float(row[2]) for row in reader]


class RunCsvError(Exception):
    pass


def read_run_csv(path: str | Path) -> tuple[RunMeta, list[RunRecord]]:
    path = Path(path)
    with path.open(newline="") as fh:
        version = fh.readline().strip()
        if version != f"# {RUN_CSV_VERSION}":
            raise RunCsvError(f"{path}: unsupported run file ({version!r})")
        meta_line = fh.readline().strip()
        fleet_line = fh.readline().strip()
        if not meta_line.startswith("# meta ") or not fleet_line.startswith("# fleet "):
            raise RunCsvError(f"{path}: malformed header comments")
        kv = dict(item.split("=", 1) for item in meta_line[len("# meta "):].split())
        fleet = []
        for item in fleet_line[len("# fleet "):].split(","):
            lid, group, rated = item.split(":")
            fleet.append((int(lid), group, float(rated)))
        meta = RunMeta(
            tick_s=float(kv["tick_s"]),
            t_start_s=float(kv["t_start_s"]),
            t_end_s=float(kv["t_end_s"]),
            algorithm=kv["algorithm"],
            mode=kv["mode"],
            seed=int(kv["seed"]),
            mission_id=int(kv["mission_id"]),
            fleet=tuple(fleet),
        )
        reader = csv.reader(fh)
        header = next(reader)
        if header != _columns(meta.load_ids):
            raise RunCsvError(f"{path}: column layout does not match the fleet header")
        n = len(meta.load_ids)
        rows = []
        for raw in reader:
            fixed = raw[:10]
            per_load = raw[10:]
            rows.append(
                RunRecord(
                    time_s=float(fixed[0]),
                    capacity_w=float(fixed[1]),
                    loss_w=float(fixed[2]),
                    loading_pu=float(fixed[3]),
                    wsum_demand=float(fixed[4]),
                    wsum_commanded=float(fixed[5]),
                    wsum_measured=float(fixed[6]),
                    op_commanded=float(fixed[7]),
                    op_measured=float(fixed[8]),
                    degraded=bool(int(fixed[9])),
                    demands=tuple(float(v) for v in per_load[:n]),
                    commanded=tuple(float(v) for v in per_load[n : 2 * n]),
                    measured_w=tuple(float(v) for v in per_load[2 * n :]),
                )
            )
    return meta, rows


def group_of(meta: RunMeta) -> dict[int, LoadGroup]:
    return {lid: LoadGroup(group) for lid, group, _ in meta.fleet}


def rated_of(meta: RunMeta) -> dict[int, float]:
    return {lid: rated for lid, _, rated in meta.fleet}
