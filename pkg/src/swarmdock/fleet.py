"""Chaser vehicle model: command envelope, quantization, motion, faults.

The vehicles accept integer centimeter displacement commands in their own
body-aligned frame (x forward, y left, z up as seen by the drone, which is
the guidance frame with y and z negated).  Guidance accelerations are
integrated over one cycle to a displacement and snapped to the minimum legal
move on each axis, because the vehicle firmware rejects moves shorter than
20 cm and the guidance field near equilibrium commands far less than that.

Fault hooks reproduce three hardware failure modes: accumulating
inertial-odometry error after each move, a motion-capture spoof that reports
a fixed wrong position while the vehicle is inside a trigger region, and a
depth-noise multiplier consumed by the vision simulator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .frames import Vec3, apf_from_drone

MIN_STEP_CM = 20
MAX_STEP_CM = 500
MIN_SPEED_CM_S = 10
MAX_SPEED_CM_S = 100


@dataclass(frozen=True)
class MoveCommand:
    """Relative move in the drone frame, integer centimeters.

    Deliberately not validated on construction: the envelope check lives in
    ``execute`` so malformed commands exercise the rejection path the same
    way the hardware discards them.
    """

    dx: int
    dy: int
    dz: int
    speed: int = MAX_SPEED_CM_S

    def violations(self) -> tuple[str, ...]:
        """Envelope violations, empty when the command is acceptable."""
        problems = []
        axes = (self.dx, self.dy, self.dz)
        for name, d in zip("xyz", axes):
            if d != 0 and not (MIN_STEP_CM <= abs(d) <= MAX_STEP_CM):
                problems.append(f"d{name}={d} outside +/-[{MIN_STEP_CM},{MAX_STEP_CM}] cm")
        if all(d == 0 for d in axes):
            problems.append("zero-length move")
        if not (MIN_SPEED_CM_S <= self.speed <= MAX_SPEED_CM_S):
            problems.append(f"speed={self.speed} outside [{MIN_SPEED_CM_S},{MAX_SPEED_CM_S}] cm/s")
        return tuple(problems)

    @property
    def max_axis_cm(self) -> int:
        return max(abs(self.dx), abs(self.dy), abs(self.dz))

    def displacement_guidance_m(self) -> Vec3:
        """Commanded displacement converted back to the guidance frame."""
        return apf_from_drone(Vec3(self.dx, self.dy, self.dz)) * 0.01


@dataclass(frozen=True)
class Hold:
    """Null command: every axis quantized below the minimum move."""


HOLD = Hold()


class RejectReason(Enum):
    BUSY = "busy"
    OUT_OF_BOUNDS = "out_of_bounds"


@dataclass(frozen=True)
class Rejected:
    reason: RejectReason
    detail: str = ""


@dataclass(frozen=True)
class SpoofSpec:
    """Motion-capture decoy: while the true position is inside the trigger
    sphere, the tracker reports ``reported_position`` instead."""

    trigger_center: Vec3
    trigger_radius: float
    reported_position: Vec3

    def __post_init__(self):
        if self.trigger_radius <= 0.0:
            raise ValueError("trigger_radius must be > 0")


@dataclass(frozen=True)
class FaultSpec:
    """Per-chaser fault switches.  All off by default."""

    imu_drift_sigma_cm: float = 0.0  # Gaussian error per completed move; 0 = off
    spoof: SpoofSpec | None = None
    depth_noise_multiplier: float = 1.0  # consumed by the vision noise model

    def __post_init__(self):
        if self.imu_drift_sigma_cm < 0.0:
            raise ValueError("imu_drift_sigma_cm must be >= 0")
        if self.depth_noise_multiplier <= 0.0:
            raise ValueError("depth_noise_multiplier must be > 0")

    @property
    def any_active(self) -> bool:
        return (
            self.imu_drift_sigma_cm > 0.0
            or self.spoof is not None
            or self.depth_noise_multiplier != 1.0
        )


NO_FAULTS = FaultSpec()


@dataclass(frozen=True)
class VehicleConfig:
    """Motion model parameters shared by the fleet."""

    overshoot_fraction: float = 0.10  # fraction of the move past the target
    settle_time: float = 0.3  # s to return from the overshoot peak
    deadband_cm: float = 1.0  # pre-quantization displacement threshold
    battery_limit: float = 420.0  # s of flight per vehicle

    def __post_init__(self):
        if not 0.0 <= self.overshoot_fraction < 1.0:
            raise ValueError("overshoot_fraction must be in [0, 1)")
        if self.settle_time < 0.0 or self.deadband_cm <= 0.0 or self.battery_limit <= 0.0:
            raise ValueError("settle_time >= 0, deadband_cm > 0, battery_limit > 0 required")


@dataclass(frozen=True)
class MotionPlan:
    """Piecewise-linear profile of one accepted move (guidance frame)."""

    start: float
    origin: Vec3
    peak: Vec3  # overshoot apex; equals target when overshoot is disabled
    target: Vec3
    travel_end: float
    settle_end: float

    def position_at(self, t: float) -> Vec3:
        if t <= self.start:
            return self.origin
        if t < self.travel_end:
            f = (t - self.start) / (self.travel_end - self.start)
            return self.origin + (self.peak - self.origin) * f
        if t < self.settle_end:
            f = (t - self.travel_end) / (self.settle_end - self.travel_end)
            return self.peak + (self.target - self.peak) * f
        return self.target

    def velocity_at(self, t: float) -> Vec3:
        if self.start <= t < self.travel_end:
            return (self.peak - self.origin) * (1.0 / (self.travel_end - self.start))
        if self.travel_end <= t < self.settle_end:
            return (self.target - self.peak) * (1.0 / (self.settle_end - self.travel_end))
        return Vec3(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class VehicleState:
    """True kinematic state of one vehicle (guidance frame)."""

    position: Vec3
    velocity: Vec3 = Vec3(0.0, 0.0, 0.0)
    busy_until: float = 0.0
    battery_elapsed: float = 0.0
    landed: bool = False
    plan: MotionPlan | None = None

    @property
    def airborne(self) -> bool:
        return not self.landed


def quantize(
    accel: Vec3,
    dt: float,
    speed_cap: int = MAX_SPEED_CM_S,
    deadband_cm: float = 1.0,
) -> MoveCommand | Hold:
    """Convert a guidance acceleration into the vehicle's move vocabulary.

    The acceleration is integrated from rest over ``dt`` to a displacement
    (d = a*dt^2/2), expressed in the drone frame in centimeters.  Each axis
    at or above the deadband snaps to the minimum move with the same sign;
    the rest zero out.  Speed is pinned at the cap.  All axes zero -> Hold.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    disp_cm = apf_from_drone(accel) * (0.5 * dt * dt * 100.0)
    axes = []
    for d in (disp_cm.x, disp_cm.y, disp_cm.z):
        if abs(d) >= deadband_cm:
            axes.append(MIN_STEP_CM if d > 0 else -MIN_STEP_CM)
        else:
            axes.append(0)
    if not any(axes):
        return HOLD
    return MoveCommand(axes[0], axes[1], axes[2], speed=int(speed_cap))


def advance(v: VehicleState, t: float, dt: float) -> VehicleState:
    """Sample the vehicle's motion plan at time ``t`` and charge ``dt``
    seconds of flight against the battery.  Landed vehicles are inert."""
    if v.landed:
        return v
    battery = v.battery_elapsed + dt
    if v.plan is None:
        return replace(v, battery_elapsed=battery)
    pos = v.plan.position_at(t)
    vel = v.plan.velocity_at(t)
    plan = v.plan if t < v.plan.settle_end else None
    return replace(v, position=pos, velocity=vel, battery_elapsed=battery, plan=plan)


def execute(
    v: VehicleState,
    cmd: MoveCommand,
    now: float,
    cfg: VehicleConfig = VehicleConfig(),
    fault: FaultSpec = NO_FAULTS,
    rng: np.random.Generator | None = None,
) -> VehicleState | Rejected:
    """Start a move, or reject it exactly as the hardware would.

    Rejection order matches the vehicle firmware: a busy (or landed) vehicle
    ignores everything; an idle vehicle then checks the envelope.  An
    accepted move runs at constant speed to the commanded displacement, with
    an overshoot past the endpoint and a settle back when configured.  The
    odometry-drift fault perturbs the point the move actually ends at.
    """
    if v.landed or now < v.busy_until:
        return Rejected(RejectReason.BUSY, "vehicle busy or landed")
    problems = cmd.violations()
    if problems:
        return Rejected(RejectReason.OUT_OF_BOUNDS, "; ".join(problems))
    disp = cmd.displacement_guidance_m()
    target = v.position + disp
    if fault.imu_drift_sigma_cm > 0.0:
        if rng is None:
            raise ValueError("imu_drift fault requires an rng")
        sigma_m = fault.imu_drift_sigma_cm * 0.01
        target = target + Vec3.from_array(rng.normal(0.0, sigma_m, size=3))
    peak = v.position + disp * (1.0 + cfg.overshoot_fraction)
    travel = cmd.max_axis_cm / float(cmd.speed)
    settle = cfg.settle_time if cfg.overshoot_fraction > 0.0 else 0.0
    plan = MotionPlan(
        start=now,
        origin=v.position,
        peak=peak,
        target=target,
        travel_end=now + travel,
        settle_end=now + travel + settle,
    )
    return replace(v, busy_until=plan.settle_end, plan=plan)


def land(v: VehicleState, floor_z: float = 0.0) -> VehicleState:
    """Drop the vehicle out of the flight volume (docked or failed)."""
    if v.landed:
        return v
    return replace(
        v,
        position=Vec3(v.position.x, v.position.y, floor_z),
        velocity=Vec3(0.0, 0.0, 0.0),
        landed=True,
        plan=None,
    )


def reported_position(v: VehicleState, fault: FaultSpec = NO_FAULTS) -> Vec3:
    """Position the motion-capture system publishes for this vehicle.

    Identical to the true position unless the spoof fault is active and the
    vehicle is inside the trigger sphere, in which case the decoy's position
    is reported instead.
    """
    if fault.spoof is not None:
        if (v.position - fault.spoof.trigger_center).norm() <= fault.spoof.trigger_radius:
            return fault.spoof.reported_position
    return v.position


def battery_expired(v: VehicleState, cfg: VehicleConfig = VehicleConfig()) -> bool:
    return v.battery_elapsed > cfg.battery_limit
