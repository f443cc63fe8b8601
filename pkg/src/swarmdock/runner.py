"""End-to-end simulation loop, outcome classification, and report export.

One guidance cycle every 0.25 s of sim time: the target attitude advances,
the vision sensor (cadence-gated) publishes detections, the tracker
publishes chaser states, guidance rebuilds the node field and issues
quantized move commands over the transport, and the fleet executes whatever
datagrams survive.  The loop is single-threaded and fully deterministic per
seed; two runs of one scenario produce byte-identical reports.

Outcome vocabulary: every chaser terminates as Docked, InspectionOrbit, or
Failed.  Failed carries the fault category the failure traces back to
(imu_drift, tracker_spoof, depth_noise) or "timeout".
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import net
from .fleet import (
    HOLD,
    RejectReason,
    Rejected,
    VehicleState,
    advance,
    battery_expired,
    execute,
    land,
    quantize,
    reported_position,
)
from .frames import Vec3
from .guidance import (
    ChaserState,
    ChaserStatus,
    TERMINAL_STATUSES,
    command_dt,
    total_acceleration,
    update_status,
)
from .net import (
    CommandMsg,
    DetectionEntry,
    DetectionMsg,
    BodyState,
    TrackerMsg,
    CommandDeduper,
    InProcessTransport,
    LossyTransport,
    UdpTransport,
    canon_float,
    command_topic,
    decode,
    encode,
)
from .scenario import Scenario
from .vision import NodeRebuildFailed, VisionSensor, _panel_rectangle, rebuild_nodes

OUTCOME_DOCKED = "Docked"
OUTCOME_ORBIT = "InspectionOrbit"
OUTCOME_FAILED = "Failed"

REASON_TIMEOUT = "timeout"


# --------------------------------------------------------------------------
# keep-out geometry
# --------------------------------------------------------------------------


def _point_box_distance(p_body: Vec3, half: Vec3) -> float:
    dx = max(abs(p_body.x) - half.x, 0.0)
    dy = max(abs(p_body.y) - half.y, 0.0)
    dz = max(abs(p_body.z) - half.z, 0.0)
    return math.sqrt(dx * dx + dy * dy + dz * dz)


def _segment_hits_box(p0: Vec3, p1: Vec3, half: Vec3) -> bool:
    """Slab test for a segment against an axis-aligned box (body frame)."""
    d = (p1 - p0).as_array()
    o = p0.as_array()
    h = half.as_array()
    t0, t1 = 0.0, 1.0
    for i in range(3):
        if abs(d[i]) < 1e-12:
            if abs(o[i]) > h[i]:
                return False
            continue
        ta = (-h[i] - o[i]) / d[i]
        tb = (h[i] - o[i]) / d[i]
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


def _point_rect_distance(p: Vec3, corners: list[Vec3]) -> float:
    """Distance from a point to a planar rectangle given by 4 corners."""
    c0 = corners[0].as_array()
    e1 = (corners[1] - corners[0]).as_array()
    e2 = (corners[3] - corners[0]).as_array()
    rel = p.as_array() - c0
    s = float(np.clip((rel @ e1) / (e1 @ e1), 0.0, 1.0))
    w = float(np.clip((rel @ e2) / (e2 @ e2), 0.0, 1.0))
    closest = c0 + s * e1 + w * e2
    return float(np.linalg.norm(p.as_array() - closest))


def _segment_hits_rect(p0: Vec3, p1: Vec3, corners: list[Vec3], pad: float = 0.02) -> bool:
    """True when the segment crosses the rectangle's plane inside its bounds
    (with a small pad so grazing passes count as strikes)."""
    c0 = corners[0].as_array()
    e1 = (corners[1] - corners[0]).as_array()
    e2 = (corners[3] - corners[0]).as_array()
    n = np.cross(e1, e2)
    a = p0.as_array() - c0
    b = p1.as_array() - c0
    da = float(n @ a)
    db = float(n @ b)
    if da == 0.0 and db == 0.0:
        return False  # coplanar sweep; the endpoint distance check covers it
    if (da > 0.0) == (db > 0.0):
        return False
    f = da / (da - db)
    hit = a + f * (b - a)
    s = float(hit @ e1) / float(e1 @ e1)
    w = float(hit @ e2) / float(e2 @ e2)
    lo = -pad
    return lo <= s <= 1.0 + pad and lo <= w <= 1.0 + pad


class MockupGeometry:
    """Distance and strike queries against the physical target at a pose."""

    def __init__(self, scenario: Scenario):
        self._mock = scenario.target
        self._half = scenario.target.body_half_extents

    def panel_distance(self, p: Vec3, t: float) -> float | None:
        pose = self._mock.pose_at(t)
        dists = [
            _point_rect_distance(p, _panel_rectangle(panel, pose))
            for panel in self._mock.panels
        ]
        return min(dists) if dists else None

    def strikes(self, p0: Vec3, p1: Vec3, t: float) -> bool:
        pose = self._mock.pose_at(t)
        b0 = pose.inverse_transform(p0)
        b1 = pose.inverse_transform(p1)
        if _segment_hits_box(b0, b1, self._half):
            return True
        for panel in self._mock.panels:
            if _segment_hits_rect(p0, p1, _panel_rectangle(panel, pose)):
                return True
        return False


# --------------------------------------------------------------------------
# report
# --------------------------------------------------------------------------


@dataclass
class TrajectoryRow:
    t: float
    chaser_id: str
    true_position: tuple[float, float, float]
    reported_position: tuple[float, float, float]
    status: str


@dataclass
class RunReport:
    scenario_name: str
    placement: str
    seed: int
    transport: str
    yaw_rate_dps: float
    pitch_rate_dps: float
    roll_rate_dps: float
    duration: float
    cycles: int
    outcomes: dict[str, str]
    failure_reasons: dict[str, str | None]
    time_to_dock: dict[str, float | None]
    min_inter_chaser: float | None
    min_panel_distance: float | None
    penetrations: int
    counters: dict[str, int]
    trajectory: list[TrajectoryRow] = field(repr=False, default_factory=list)

    @property
    def success(self) -> bool:
        """At least two chasers ended Docked or InspectionOrbit."""
        good = sum(1 for o in self.outcomes.values() if o in (OUTCOME_DOCKED, OUTCOME_ORBIT))
        return good >= 2

    def to_dict(self) -> dict:
        return {
            "scenario_name": self.scenario_name,
            "placement": self.placement,
            "seed": self.seed,
            "transport": self.transport,
            "rates_dps": {
                "yaw": canon_float(self.yaw_rate_dps),
                "pitch": canon_float(self.pitch_rate_dps),
                "roll": canon_float(self.roll_rate_dps),
            },
            "duration": canon_float(self.duration),
            "cycles": self.cycles,
            "outcomes": dict(self.outcomes),
            "failure_reasons": dict(self.failure_reasons),
            "time_to_dock": {
                k: (None if v is None else canon_float(v)) for k, v in self.time_to_dock.items()
            },
            "metrics": {
                "min_inter_chaser": None
                if self.min_inter_chaser is None
                else canon_float(self.min_inter_chaser),
                "min_panel_distance": None
                if self.min_panel_distance is None
                else canon_float(self.min_panel_distance),
                "penetrations": self.penetrations,
            },
            "counters": dict(self.counters),
            "trajectory": [
                {
                    "t": canon_float(r.t),
                    "chaser_id": r.chaser_id,
                    "true": [canon_float(x) for x in r.true_position],
                    "reported": [canon_float(x) for x in r.reported_position],
                    "status": r.status,
                }
                for r in self.trajectory
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)


def report_from_dict(d: dict) -> RunReport:
    rows = [
        TrajectoryRow(
            t=row["t"],
            chaser_id=row["chaser_id"],
            true_position=tuple(row["true"]),
            reported_position=tuple(row["reported"]),
            status=row["status"],
        )
        for row in d.get("trajectory", [])
    ]
    m = d.get("metrics", {})
    return RunReport(
        scenario_name=d["scenario_name"],
        placement=d.get("placement", "explicit"),
        seed=d.get("seed", 0),
        transport=d.get("transport", "in_process"),
        yaw_rate_dps=d.get("rates_dps", {}).get("yaw", 0.0),
        pitch_rate_dps=d.get("rates_dps", {}).get("pitch", 0.0),
        roll_rate_dps=d.get("rates_dps", {}).get("roll", 0.0),
        duration=d.get("duration", 0.0),
        cycles=d.get("cycles", 0),
        outcomes=dict(d["outcomes"]),
        failure_reasons=dict(d.get("failure_reasons", {})),
        time_to_dock=dict(d.get("time_to_dock", {})),
        min_inter_chaser=m.get("min_inter_chaser"),
        min_panel_distance=m.get("min_panel_distance"),
        penetrations=m.get("penetrations", 0),
        counters=dict(d.get("counters", {})),
        trajectory=rows,
    )


# --------------------------------------------------------------------------
# the cycle loop
# --------------------------------------------------------------------------


def _failure_reason(setup_faults, scenario_depth_mult: float) -> str:
    """Attribute a crash/abort to the fault most plausibly responsible."""
    if setup_faults.imu_drift_sigma_cm > 0.0:
        return "imu_drift"
    if setup_faults.spoof is not None:
        return "tracker_spoof"
    if setup_faults.depth_noise_multiplier != 1.0 or scenario_depth_mult != 1.0:
        return "depth_noise"
    return REASON_TIMEOUT


def _make_transport(sc: Scenario, loss_rng: np.random.Generator):
    if sc.transport == "loopback_udp":
        inner = UdpTransport(net.default_topic_ports(sc.chaser_ids))
    else:
        inner = InProcessTransport()
    if sc.loss_rate > 0.0:
        return LossyTransport(inner, sc.loss_rate, loss_rng)
    return inner


def run(sc: Scenario, transport=None) -> RunReport:
    """Execute one scenario to termination and classify every chaser.

    ``transport`` overrides the scenario's transport selection with an
    already-constructed one (tests use ephemeral-port UDP this way); the
    caller keeps ownership of an injected transport and closes it.
    """
    master = np.random.default_rng(sc.seed)
    seed_vision, seed_fault, seed_loss = (int(s) for s in master.integers(0, 2**63, size=3))
    vision_rng = np.random.default_rng(seed_vision)
    fault_rng = np.random.default_rng(seed_fault)
    loss_rng = np.random.default_rng(seed_loss)

    own_transport = transport is None
    bus = _make_transport(sc, loss_rng) if transport is None else transport

    noise = replace(sc.noise, depth_multiplier=sc.depth_noise_multiplier)
    sensor = VisionSensor(
        sc.target,
        sc.camera_pose,
        noise=noise,
        rng=vision_rng,
        period=sc.vision_period,
        max_range=sc.rebuild.max_range,
    )
    geometry = MockupGeometry(sc)
    period = sc.apf.cycle_period
    cycles_max = int(round(sc.max_duration / period))

    vehicles: dict[str, VehicleState] = {
        c.id: VehicleState(position=c.position) for c in sc.chasers
    }
    gstates: dict[str, ChaserState] = {
        c.id: ChaserState(id=c.id, position=c.position, velocity=Vec3(0.0, 0.0, 0.0))
        for c in sc.chasers
    }
    faults = {c.id: c.faults for c in sc.chasers}
    seq = {c.id: 0 for c in sc.chasers}
    deduper = CommandDeduper()

    failure_reasons: dict[str, str | None] = {c.id: None for c in sc.chasers}
    time_to_dock: dict[str, float | None] = {c.id: None for c in sc.chasers}
    counters = {
        "commands_sent": 0,
        "land_commands": 0,
        "rejected_busy": 0,
        "rejected_out_of_bounds": 0,
        "dedup_dropped": 0,
        "decode_errors": 0,
        "rebuild_failures": 0,
        "detection_sets": 0,
    }
    trajectory: list[TrajectoryRow] = []
    min_inter: float | None = None
    min_panel: float | None = None
    penetrations = 0

    node_set = None
    prev_true: dict[str, Vec3] = {c.id: c.position for c in sc.chasers}
    t = 0.0
    cycles_run = 0

    def fail(cid: str, reason: str) -> None:
        gstates[cid] = replace(gstates[cid], status=ChaserStatus.FAILED)
        failure_reasons[cid] = reason
        vehicles[cid] = land(vehicles[cid], sc.arena.floor_z)

    try:
        for k in range(cycles_max):
            t = k * period
            cycles_run = k + 1

            # 1. vehicles fly their current plans up to this cycle's time
            for cid, v in vehicles.items():
                vehicles[cid] = advance(v, t, period if k > 0 else 0.0)

            # 2. safety: mockup strikes, arena bounds, battery
            airborne = [cid for cid in vehicles if vehicles[cid].airborne]
            for cid in airborne:
                if gstates[cid].status in TERMINAL_STATUSES:
                    continue
                v = vehicles[cid]
                if geometry.strikes(prev_true[cid], v.position, t):
                    penetrations += 1
                    fail(cid, _failure_reason(faults[cid], sc.depth_noise_multiplier))
                elif not sc.arena.contains(v.position):
                    fail(cid, _failure_reason(faults[cid], sc.depth_noise_multiplier))
                elif battery_expired(v, sc.vehicle):
                    fail(cid, REASON_TIMEOUT)
            airborne = [cid for cid in vehicles if vehicles[cid].airborne]
            for i, a in enumerate(airborne):
                pa = vehicles[a].position
                d = geometry.panel_distance(pa, t)
                if d is not None:
                    min_panel = d if min_panel is None else min(min_panel, d)
                for b in airborne[i + 1:]:
                    sep = (pa - vehicles[b].position).norm()
                    min_inter = sep if min_inter is None else min(min_inter, sep)
            prev_true = {cid: vehicles[cid].position for cid in vehicles}

            # 3. vision: publish a fresh detection set when the gate opens
            fresh = sensor.poll_new(t)
            if fresh is not None:
                entries = tuple(
                    DetectionEntry(cls=d.cls.value, points=tuple(p.as_tuple() for p in d.points))
                    for d in fresh
                )
                bus.publish(net.DETECTION_TOPIC, encode(DetectionMsg(round(t * 1e6), entries)))

            # 4. tracker: publish reported states for airborne vehicles
            bodies = tuple(
                BodyState(
                    id=cid,
                    position=reported_position(vehicles[cid], faults[cid]).as_tuple(),
                    velocity=vehicles[cid].velocity.as_tuple(),
                )
                for cid in vehicles
                if vehicles[cid].airborne
            )
            bus.publish(net.TRACKER_TOPIC, encode(TrackerMsg(round(t * 1e6), bodies)))

            # 5. guidance consumes the latest snapshot per topic
            det_msg = None
            for raw in bus.poll(net.DETECTION_TOPIC):
                try:
                    det_msg = decode(raw)
                except ValueError:
                    counters["decode_errors"] += 1
            if det_msg is not None:
                counters["detection_sets"] += 1
                try:
                    node_set = rebuild_nodes(det_msg.detections, sc.camera_pose, sc.rebuild)
                except NodeRebuildFailed:
                    counters["rebuild_failures"] += 1  # hold the last good set

            trk_msg = None
            for raw in bus.poll(net.TRACKER_TOPIC):
                try:
                    trk_msg = decode(raw)
                except ValueError:
                    counters["decode_errors"] += 1
            if trk_msg is not None:
                for body in trk_msg.bodies:
                    ch = gstates.get(body.id)
                    if ch is None or ch.status in TERMINAL_STATUSES:
                        continue
                    gstates[body.id] = replace(
                        ch, position=Vec3(*body.position), velocity=Vec3(*body.velocity)
                    )

            # 6. guidance accelerations for every non-terminal chaser
            if node_set is not None:
                for cid, ch in gstates.items():
                    if ch.status in TERMINAL_STATUSES:
                        continue
                    bearing = ch.position - node_set.centroid
                    if bearing.norm() > 1e-9:
                        gstates[cid] = replace(ch, last_bearing=bearing * (1.0 / bearing.norm()))
            accels: dict[str, Vec3] = {}
            if node_set is not None:
                peers = list(gstates.values())
                for cid, ch in gstates.items():
                    if ch.status in TERMINAL_STATUSES:
                        continue
                    accels[cid] = total_acceleration(
                        replace(ch, status=ChaserStatus.ACTIVE), peers, node_set, sc.apf
                    )

            # 7. status machine, then command quantization for active chasers
            ordered = list(gstates)
            updated = update_status([gstates[cid] for cid in ordered], node_set, sc.apf)
            for cid, ch in zip(ordered, updated):
                before = gstates[cid]
                gstates[cid] = ch
                if ch.status is ChaserStatus.DOCKED and before.status is not ChaserStatus.DOCKED:
                    time_to_dock[cid] = t

            for cid in ordered:
                ch = gstates[cid]
                if ch.status in (ChaserStatus.DOCKED, ChaserStatus.FAILED):
                    # keep telling the vehicle to land until it does
                    if vehicles[cid].airborne:
                        seq[cid] += 1
                        msg = CommandMsg(seq=seq[cid], chaser_id=cid, move=net.LAND)
                        bus.publish(command_topic(cid), encode(msg))
                        counters["land_commands"] += 1
                    continue
                if ch.status is not ChaserStatus.ACTIVE or cid not in accels:
                    gstates[cid] = replace(ch, last_move_held=False)
                    continue
                cmd = quantize(
                    accels[cid],
                    command_dt(ch, sc.apf),
                    deadband_cm=sc.vehicle.deadband_cm,
                )
                if cmd == HOLD:
                    gstates[cid] = replace(ch, last_move_held=True)
                    continue
                gstates[cid] = replace(ch, last_move_held=False)
                seq[cid] += 1
                bus.publish(command_topic(cid), encode(CommandMsg(seq=seq[cid], chaser_id=cid, move=cmd)))
                counters["commands_sent"] += 1

            # 8. fleet side: drain each command channel and execute
            for cid in ordered:
                for raw in bus.poll(command_topic(cid)):
                    try:
                        msg = decode(raw)
                    except ValueError:
                        counters["decode_errors"] += 1
                        continue
                    if not isinstance(msg, CommandMsg) or msg.chaser_id != cid:
                        counters["decode_errors"] += 1
                        continue
                    if not deduper.accept(msg):
                        counters["dedup_dropped"] += 1
                        continue
                    if isinstance(msg.move, str):
                        vehicles[cid] = land(vehicles[cid], sc.arena.floor_z)
                        continue
                    result = execute(
                        vehicles[cid], msg.move, t, sc.vehicle, faults[cid], fault_rng
                    )
                    if isinstance(result, Rejected):
                        key = (
                            "rejected_busy"
                            if result.reason is RejectReason.BUSY
                            else "rejected_out_of_bounds"
                        )
                        counters[key] += 1
                    else:
                        vehicles[cid] = result

            # 9. log
            for cid in ordered:
                trajectory.append(
                    TrajectoryRow(
                        t=t,
                        chaser_id=cid,
                        true_position=vehicles[cid].position.as_tuple(),
                        reported_position=reported_position(vehicles[cid], faults[cid]).as_tuple(),
                        status=gstates[cid].status.value,
                    )
                )

            if all(ch.status in TERMINAL_STATUSES for ch in gstates.values()):
                break
    finally:
        if own_transport:
            bus.close()

    # timeout classification for whatever is still flying
    for cid, ch in gstates.items():
        if ch.status in TERMINAL_STATUSES:
            continue
        if ch.stall_counter >= sc.apf.stall_threshold:
            gstates[cid] = replace(ch, status=ChaserStatus.INSPECTION_ORBIT)
        else:
            gstates[cid] = replace(ch, status=ChaserStatus.FAILED)
            failure_reasons[cid] = REASON_TIMEOUT

    outcome_names = {
        ChaserStatus.DOCKED: OUTCOME_DOCKED,
        ChaserStatus.INSPECTION_ORBIT: OUTCOME_ORBIT,
        ChaserStatus.FAILED: OUTCOME_FAILED,
    }
    outcomes = {cid: outcome_names[ch.status] for cid, ch in gstates.items()}
    counters["transport_dropped"] = getattr(bus, "dropped", 0)
    counters["seq_dedup_dropped"] = deduper.dropped

    return RunReport(
        scenario_name=sc.name,
        placement=sc.placement,
        seed=sc.seed,
        transport=sc.transport if transport is None else type(transport).__name__,
        yaw_rate_dps=sc.target.yaw_rate_dps,
        pitch_rate_dps=sc.target.pitch_rate_dps,
        roll_rate_dps=sc.target.roll_rate_dps,
        duration=t,
        cycles=cycles_run,
        outcomes=outcomes,
        failure_reasons=failure_reasons,
        time_to_dock=time_to_dock,
        min_inter_chaser=min_inter,
        min_panel_distance=min_panel,
        penetrations=penetrations,
        counters=counters,
        trajectory=trajectory,
    )


def batch(scenarios: list[Scenario]) -> list[RunReport]:
    """Run a list of scenarios (load_scenario_dir provides the usual input)."""
    return [run(sc) for sc in scenarios]


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def export_trajectory_csv(report: RunReport, path: str | Path) -> Path:
    """Write the true trajectory as CSV rows (t, chaser_id, x, y, z, status)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "chaser_id", "x", "y", "z", "status"])
        for row in report.trajectory:
            x, y, z = (canon_float(c) for c in row.true_position)
            writer.writerow([canon_float(row.t), row.chaser_id, x, y, z, row.status])
    return path


def read_trajectory_csv(path: str | Path) -> list[TrajectoryRow]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for rec in csv.DictReader(fh):
            pos = (float(rec["x"]), float(rec["y"]), float(rec["z"]))
            rows.append(
                TrajectoryRow(
                    t=float(rec["t"]),
                    chaser_id=rec["chaser_id"],
                    true_position=pos,
                    reported_position=pos,
                    status=rec["status"],
                )
            )
    return rows


def export_report_json(report: RunReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(report.to_json() + "\n", encoding="utf-8")
    return path


def summary_rows(reports: list[RunReport]) -> list[dict[str, str]]:
    rows = []
    for r in reports:
        reasons = sorted({v for v in r.failure_reasons.values() if v})
        rows.append(
            {
                "scenario": r.scenario_name,
                "placement": r.placement,
                "yaw_dps": f"{r.yaw_rate_dps:g}",
                "outcomes": "; ".join(f"{cid}={out}" for cid, out in r.outcomes.items()),
                "failure_reason": "; ".join(reasons) if reasons else "-",
            }
        )
    return rows


def export_summary_csv(reports: list[RunReport], path: str | Path) -> Path:
    path = Path(path)
    rows = summary_rows(reports)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["scenario", "placement", "yaw_dps", "outcomes", "failure_reason"])
        writer.writeheader()
        writer.writerows(rows)
    return path


def format_summary_table(reports: list[RunReport]) -> str:
    rows = summary_rows(reports)
    cols = ["scenario", "placement", "yaw_dps", "outcomes", "failure_reason"]
    widths = {c: max(len(c), *(len(r[c]) for r in rows)) if rows else len(c) for c in cols}
    lines = ["  ".join(c.ljust(widths[c]) for c in cols)]
    lines.append("  ".join("-" * widths[c] for c in cols))
    for r in rows:
        lines.append("  ".join(r[c].ljust(widths[c]) for c in cols))
    return "\n".join(lines)
