"""Run engines: deterministic lockstep and UDP-networked execution.

Lockstep advances the plant and the controller alternately on one simulated
clock; telemetry and command datagrams flow through seeded delay queues, so
a run is a pure function of (scenario, algorithm, seed). Commands computed
from tick ``t`` telemetry take effect during tick ``t+1``, one control
period of latency, as in the physical setup this emulates.

Networked mode runs the same plant and controller code as two loops joined
only by real UDP datagrams. The plant paces the run: it sends telemetry for
tick ``k`` and waits (bounded) for the command reply before advancing, so a
loss-free run reproduces the lockstep command sequence exactly.
"""

from __future__ import annotations

import logging
import socket
import threading
import time
from dataclasses import dataclass, replace

from . import link
from .controller import (
    Controller,
    ForcedOffSchedule,
    MissionDatabase,
    ZoneSchedule,
    make_controller,
)
from .link import DelayQueue, Reassembler
from .model import ShedCommand, SystemSnapshot
from .plant import LoadFailure, Plant, ZoneLimitChange
from .records import RunRecord, RunMeta, meta_from_fleet
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)

DEFAULT_PLANT_PORT = 47001
DEFAULT_CONTROLLER_PORT = 47002


@dataclass
class RunResult:
    meta: RunMeta
    rows: list[RunRecord]
    batches: list[tuple[ShedCommand, ...]]  # command batch per tick (fresh or re-sent)
    telemetry_dropped: list[bool]
    command_dropped: list[bool]
    used_seq: list[int | None]  # telemetry seq each tick's commands were based on
    budget_w: list[float | None]  # capacity budget of the snapshot actually used
    intent_power_w: list[float | None]  # power implied by the commands, at build demand
    nonoptimal_solves: int = 0

    @property
    def degraded_ticks(self) -> int:
        return sum(r.degraded for r in self.rows)


def _mission_database(sc: ScenarioConfig) -> MissionDatabase:
    zone_updates = [
        ZoneSchedule(ev.time_s, ev.zone, ev.limit_w)
        for ev in sc.events
        if isinstance(ev, ZoneLimitChange)
    ]
    forced_updates = [
        ForcedOffSchedule(ev.time_s, ev.load_id)
        for ev in sc.events
        if isinstance(ev, LoadFailure)
    ]
    return MissionDatabase(sc.weight_sets, sc.zones, zone_updates, forced_updates)


def build_plant(sc: ScenarioConfig) -> Plant:
    return Plant(
        fleet=sc.fleet,
        generation=sc.generation,
        profiles=sc.profiles,
        events=sc.events,
        zones=sc.zones,
        tau_s=sc.plant.tau_s,
        loss_fraction=sc.plant.loss_fraction,
        mission_id=sc.mission_id,
        t_start_s=sc.window.t_start_s,
    )


class _Recorder:
    """Shared row bookkeeping for both execution modes."""

    def __init__(self, sc: ScenarioConfig, algorithm: str):
        self.sc = sc
        self.db = _mission_database(sc)
        self.rated = {spec.id: spec.rated_power_w for spec in sc.fleet}
        self.algorithm = algorithm

    def row(
        self,
        snapshot: SystemSnapshot,
        commanded: dict[int, float],
        degraded: bool,
        solve_time_s: float,
    ) -> RunRecord:
        weights = self.db.weights_at(snapshot.mission_id, snapshot.time_s)
        num_cmd = num_meas = den = 0.0
        cmd_list = []
        for d, measured in zip(snapshot.demands, snapshot.measured_w):
            c = commanded[d.load_id]
            cmd_list.append(c)
            if d.demand_status == 0.0 or weights is None:
                continue
            w = weights.weights[d.load_id]
            den += w * d.demand_status
            num_cmd += w * min(c, d.demand_status)
            num_meas += w * (measured / self.rated[d.load_id])
        vacuous = den <= 0.0
        return RunRecord(
            time_s=snapshot.time_s,
            capacity_w=snapshot.total_capacity_w,
            loss_w=snapshot.total_loss_w,
            loading_pu=snapshot.loading_pu,
            wsum_demand=den,
            wsum_commanded=num_cmd,
            wsum_measured=num_meas,
            op_commanded=1.0 if vacuous else num_cmd / den,
            op_measured=1.0 if vacuous else num_meas / den,
            degraded=degraded,
            demands=tuple(d.demand_status for d in snapshot.demands),
            commanded=tuple(cmd_list),
            measured_w=tuple(snapshot.measured_w),
            solve_time_s=solve_time_s,
        )


def _intent_power_w(controller: Controller, snapshot: SystemSnapshot,
                    rated: dict[int, float]) -> float:
    demand = snapshot.demand_by_id()
    return sum(
        min(status, demand.get(lid, 0.0)) * rated[lid]
        for lid, status in controller.intent.items()
    )


def run_lockstep(
    sc: ScenarioConfig,
    algorithm: str | None = None,
    seed: int | None = None,
) -> RunResult:
    """Deterministic single-threaded run over the scenario window."""
    algorithm = algorithm or sc.controller.algorithm
    cfg = replace(sc.controller, algorithm=algorithm)
    impair_cfg = sc.impairment if seed is None else replace(sc.impairment, seed=seed)
    plant = build_plant(sc)
    recorder = _Recorder(sc, algorithm)
    controller = make_controller(sc.fleet, cfg, recorder.db)
    q_tel = DelayQueue(impair_cfg, "telemetry")
    q_cmd = DelayQueue(impair_cfg, "commands")

    meta = meta_from_fleet(
        sc.fleet,
        tick_s=sc.window.tick_s,
        t_start_s=sc.window.t_start_s,
        t_end_s=sc.window.t_end_s,
        algorithm=algorithm,
        mode="lockstep",
        seed=impair_cfg.seed,
        mission_id=sc.mission_id,
    )
    result = RunResult(meta, [], [], [], [], [], [], [])

    mailbox: tuple[int, SystemSnapshot] | None = None
    last_batch: tuple[ShedCommand, ...] = ()
    dt = sc.window.tick_s
    for k in range(1, sc.window.n_ticks + 1):
        interval_start = sc.window.t_start_s + (k - 1) * dt
        for batch in q_cmd.poll(interval_start):
            plant.apply_commands(batch)
        snapshot = plant.tick(dt)

        deliver = q_tel.submit((k, snapshot), snapshot.time_s)
        result.telemetry_dropped.append(deliver is None)
        for seq, snap in q_tel.poll(snapshot.time_s):
            if mailbox is None or seq > mailbox[0]:
                mailbox = (seq, snap)

        degraded = mailbox is None or (k - mailbox[0]) > cfg.stale_limit
        if degraded:
            batch = last_batch  # failsafe: hold (re-send) the last commands
            solve_time = 0.0
            result.used_seq.append(None)
            result.budget_w.append(None)
            result.intent_power_w.append(None)
        else:
            seq, used = mailbox
            t0 = time.perf_counter()
            batch = controller.on_telemetry(used)
            solve_time = controller.last_solve_time_s or (time.perf_counter() - t0)
            result.used_seq.append(seq)
            result.budget_w.append(max(0.0, used.total_capacity_w - used.total_loss_w))
            result.intent_power_w.append(_intent_power_w(controller, used, recorder.rated))
            plan = getattr(controller, "last_plan", None)
            if plan is not None and not plan.optimal:
                result.nonoptimal_solves += 1
        last_batch = batch
        result.batches.append(batch)
        deliver = q_cmd.submit(batch, snapshot.time_s)
        result.command_dropped.append(deliver is None)

        result.rows.append(recorder.row(snapshot, controller.intent, degraded, solve_time))
    return result


# ---------------------------------------------------------------------------
# networked mode


def _controller_loop(
    sock: socket.socket,
    controller: Controller,
    stop: threading.Event,
    solve_log: dict[int, float],
    cmd_rng,
    loss_probability: float,
    recv_timeout: float = 0.05,
) -> None:
    reasm = Reassembler()
    sock.settimeout(recv_timeout)
    while not stop.is_set():
        try:
            data, sender = sock.recvfrom(65536)
        except socket.timeout:
            continue
        except OSError:
            if stop.is_set():
                return
            raise
        try:
            view = reasm.feed(data)
        except link.DecodeError as exc:
            log.warning("controller dropped undecodable datagram: %s", exc)
            continue
        if view is None or view.msg_type != link.MSG_TELEMETRY:
            continue
        batch = controller.on_telemetry(view.snapshot)
        solve_log[view.seq] = controller.last_solve_time_s
        dropped = loss_probability > 0.0 and cmd_rng.random() < loss_probability
        if not dropped:
            for part in link.encode_commands_parts(
                batch, view.seq, timestamp_ms=view.timestamp_ms
            ):
                sock.sendto(part, sender)


def run_networked(
    sc: ScenarioConfig,
    algorithm: str | None = None,
    seed: int | None = None,
    host: str = "127.0.0.1",
    plant_port: int = DEFAULT_PLANT_PORT,
    controller_port: int = DEFAULT_CONTROLLER_PORT,
    sync_timeout_s: float = 1.0,
    realtime: bool = False,
) -> RunResult:
    """Plant and controller as two loops exchanging real UDP datagrams.

    Pass port 0 for ephemeral ports. The configured loss probability applies
    to both directions through the same seeded generators as lockstep mode;
    latency is whatever the real sockets deliver. Aborts with a diagnostic
    on socket failure.
    """
    algorithm = algorithm or sc.controller.algorithm
    cfg = replace(sc.controller, algorithm=algorithm)
    impair_cfg = sc.impairment if seed is None else replace(sc.impairment, seed=seed)
    recorder = _Recorder(sc, algorithm)
    controller = make_controller(sc.fleet, cfg, recorder.db)
    plant = build_plant(sc)

    meta = meta_from_fleet(
        sc.fleet,
        tick_s=sc.window.tick_s,
        t_start_s=sc.window.t_start_s,
        t_end_s=sc.window.t_end_s,
        algorithm=algorithm,
        mode="networked",
        seed=impair_cfg.seed,
        mission_id=sc.mission_id,
    )
    result = RunResult(meta, [], [], [], [], [], [], [])
    tel_rng = link.impairment_rng(impair_cfg.seed, "telemetry")
    cmd_rng = link.impairment_rng(impair_cfg.seed, "commands")
    loss = impair_cfg.loss_probability

    try:
        plant_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        ctrl_sock = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)
        plant_sock.bind((host, plant_port))
        ctrl_sock.bind((host, controller_port))
    except OSError as exc:
        raise RuntimeError(f"cannot open UDP sockets on {host}: {exc}") from exc
    ctrl_addr = ctrl_sock.getsockname()

    stop = threading.Event()
    solve_log: dict[int, float] = {}
    thread = threading.Thread(
        target=_controller_loop,
        args=(ctrl_sock, controller, stop, solve_log, cmd_rng, loss),
        name="loadshed-controller",
        daemon=True,
    )
    thread.start()

    reasm = Reassembler()
    dt = sc.window.tick_s
    pending: tuple[ShedCommand, ...] | None = None
    plant_sock.settimeout(0.005)
    try:
        for k in range(1, sc.window.n_ticks + 1):
            tick_wall_start = time.monotonic()
            if pending is not None:
                plant.apply_commands(pending)
                pending = None
            snapshot = plant.tick(dt)

            dropped = loss > 0.0 and tel_rng.random() < loss
            result.telemetry_dropped.append(dropped)
            if not dropped:
                for part in link.encode_telemetry_parts(snapshot, k):
                    plant_sock.sendto(part, ctrl_addr)

            # wait for the command reply to this tick's telemetry
            reply: tuple[ShedCommand, ...] | None = None
            reply_seq = None
            deadline = time.monotonic() + (0.0 if dropped else sync_timeout_s)
            while time.monotonic() < deadline:
                try:
                    data, _ = plant_sock.recvfrom(65536)
                except socket.timeout:
                    continue
                try:
                    view = reasm.feed(data)
                except link.DecodeError as exc:
                    log.warning("plant dropped undecodable datagram: %s", exc)
                    continue
                if view is None or view.msg_type != link.MSG_COMMANDS:
                    continue
                reply = view.commands
                reply_seq = view.seq
                if view.seq >= k:
                    break
            degraded = reply is None
            commanded_view = dict(plant.commanded)
            if reply is not None:
                pending = reply
                for cmd in reply:
                    commanded_view[cmd.load_id] = cmd.status
                result.batches.append(reply)
                result.used_seq.append(reply_seq)
            else:
                result.batches.append(())
                result.used_seq.append(None)
            result.command_dropped.append(False)
            result.budget_w.append(None)
            result.intent_power_w.append(None)
            result.rows.append(
                recorder.row(snapshot, commanded_view, degraded,
                             solve_log.get(k, 0.0))
            )
            if realtime:
                remaining = cfg.period_s - (time.monotonic() - tick_wall_start)
                if remaining > 0:
                    time.sleep(remaining)
    except OSError as exc:
        raise RuntimeError(f"UDP socket failure during networked run: {exc}") from exc
    finally:
        stop.set()
        thread.join(timeout=2.0)
        plant_sock.close()
        ctrl_sock.close()
    # backfill measured solve times now that the controller loop is done
    result.rows = [
        replace(row, solve_time_s=solve_log.get(k, row.solve_time_s))
        for k, row in enumerate(result.rows, start=1)
    ]
    return result
