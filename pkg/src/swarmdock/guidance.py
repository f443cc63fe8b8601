"""Artificial potential field guidance and the chaser mission status machine.

The control acceleration on a chaser superposes three contributions:

* node field: every repulsive node i and attractive node j adds
  ``-[mu_R_i * (r_switch - rho_i) + c * (v . rho_i_vec)] * rho_i_hat`` and
  ``-[mu_A_j * rho_j + c * (v . rho_j_vec)] * rho_j_hat`` respectively, where
  ``rho_vec`` points node -> chaser.  Repulsive gains are negative, so inside
  the out-of-bounds radius ``r_switch`` those nodes push the chaser away and
  beyond it the term flips sign and pulls a wayward chaser back.  The ``c``
  term damps velocity on final approach.
* chaser-chaser: ``-(mu_chaser * exp(-rho)) `` along the unit vector from the
  other chaser, gated to zero outside the collision-avoidance radius, so
  chasers on opposite sides of the target ignore each other.  Landed chasers
  contribute nothing.
* Hill relative-motion terms for an orbiting target, disabled in the
  desk-scale configuration.

The status machine handles docking (hold within range of a primary dock node
for consecutive cycles, freezing all other movement while a dock attempt is
pending), stall detection (commanded moves below the vehicle minimum first
double the integration step, then park the chaser as an inspection orbit
observer), and terminal-state monotonicity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .frames import Vec3, UNIT_X
from .vision import NodeSet

class ChaserStatus(Enum):
    ACTIVE = "active"
    FROZEN = "frozen"
    DOCKED = "docked"
    INSPECTION_ORBIT = "inspection_orbit"
    FAILED = "failed"


TERMINAL_STATUSES = frozenset(
    {ChaserStatus.DOCKED, ChaserStatus.INSPECTION_ORBIT, ChaserStatus.FAILED}
)

# Below this separation a unit vector is undefined; see field_acceleration.
COINCIDENCE_RHO = 1e-6


@dataclass(frozen=True)
class ApfConfig:
    """Field gains and mission-logic parameters.

    Defaults are the experimentally derived desk-scale weights: attractive
    gain 0.1, repulsive gain -0.015, out-of-bounds radius 2 m, velocity
    damping 0.08, chaser-chaser gain -2.5.
    """

    mu_attract: float = 0.1  # 1/s^2
    mu_repulse: float = -0.015  # 1/s^2, negative
    r_switch: float = 2.0  # m
    velocity_damping: float = 0.08  # 1/(m*s)
    mu_chaser: float = -2.5  # negative, repels
    chaser_avoid_radius: float = 1.0  # m, gates chaser-chaser repulsion
    dock_range: float = 0.5  # m
    dock_cycles: int = 2  # consecutive cycles in range to dock
    cycle_period: float = 0.25  # s
    hill_enabled: bool = False
    omega: float = 0.0  # rad/s, target orbital rate
    omega_dot: float = 0.0  # rad/s^2
    stall_threshold: int = 4  # held cycles before the time step doubles
    stall_limit: int = 40  # held cycles before inspection-orbit latch
    damping_on_unit_vector: bool = False  # dot damping with rho_hat instead of rho_vec

    def __post_init__(self):
        if self.mu_attract <= 0.0:
            raise ValueError("mu_attract must be > 0")
        if self.mu_repulse >= 0.0:
            raise ValueError("mu_repulse must be < 0")
        if self.mu_chaser >= 0.0:
            raise ValueError("mu_chaser must be < 0")
        if self.r_switch <= 0.0 or self.dock_range <= 0.0 or self.cycle_period <= 0.0:
            raise ValueError("r_switch, dock_range and cycle_period must be > 0")
        if self.dock_cycles < 1:
            raise ValueError("dock_cycles must be >= 1")


@dataclass(frozen=True)
class ChaserState:
    """Guidance-side view of one chaser (positions in the APF frame)."""

    id: str
    position: Vec3
    velocity: Vec3
    status: ChaserStatus = ChaserStatus.ACTIVE
    dock_counter: int = 0
    stall_counter: int = 0
    last_move_held: bool = False  # previous cycle quantized to a hold
    last_bearing: Vec3 = UNIT_X  # fallback direction for coincident geometry


def command_dt(ch: ChaserState, cfg: ApfConfig) -> float:
    """Integration step for this chaser's next command; doubled while the
    chaser is stalled to boost the position change."""
    if ch.stall_counter >= cfg.stall_threshold:
        return cfg.cycle_period * 2.0
    return cfg.cycle_period


def field_acceleration(ch: ChaserState, nodes: NodeSet, cfg: ApfConfig) -> Vec3:
    """Acceleration from the node field acting on one chaser.

    A node coincident with the chaser (separation < 1e-6 m) has no defined
    unit vector; the chaser's last known bearing is substituted to keep the
    run deterministic.
    """
    if not nodes.nodes:
        raise ValueError("empty node set")
    pos = ch.position.as_array()
    vel = ch.velocity.as_array()
    rho_vec = pos[None, :] - nodes.positions  # node -> chaser
    rho = np.linalg.norm(rho_vec, axis=1)
    coincident = rho < COINCIDENCE_RHO
    safe_rho = np.where(coincident, 1.0, rho)
    rho_hat = rho_vec / safe_rho[:, None]
    if np.any(coincident):
        rho_hat[coincident] = ch.last_bearing.as_array()
    magnitude = np.where(
        nodes.repulsive_mask,
        nodes.gains * (cfg.r_switch - rho),
        nodes.gains * rho,
    )
    if cfg.damping_on_unit_vector:
        damping = cfg.velocity_damping * (rho_hat @ vel)
    else:
        damping = cfg.velocity_damping * (rho_vec @ vel)
    accel = -((magnitude + damping)[:, None] * rho_hat).sum(axis=0)
    return Vec3.from_array(accel)


def chaser_chaser_acceleration(
    ch: ChaserState, others: list[ChaserState], cfg: ApfConfig
) -> Vec3:
    """Exponential-falloff repulsion from other airborne chasers inside the
    collision-avoidance radius.  Docked and failed chasers have landed and
    contribute nothing.  Coincident chasers get a deterministic +x push."""
    total = np.zeros(3)
    for other in others:
        if other.id == ch.id:
            continue
        if other.status in (ChaserStatus.DOCKED, ChaserStatus.FAILED):
            continue
        d = ch.position - other.position
        rho = d.norm()
        if rho > cfg.chaser_avoid_radius:
            continue
        u = UNIT_X if rho < COINCIDENCE_RHO else d * (1.0 / rho)
        total += -(cfg.mu_chaser * math.exp(-rho)) * u.as_array()
    return Vec3.from_array(total)


def hill_acceleration(ch: ChaserState, cfg: ApfConfig) -> Vec3:
    """Relative-motion acceleration about a circular-orbit target in the
    LVLH frame (x along-track, z nadir)."""
    w, wd = cfg.omega, cfg.omega_dot
    p, v = ch.position, ch.velocity
    return Vec3(
        2.0 * w * v.z + wd * p.z,
        -w * w * p.y,
        3.0 * w * w * p.z - 2.0 * w * v.x - wd * p.x,
    )


def total_acceleration(
    ch: ChaserState, others: list[ChaserState], nodes: NodeSet, cfg: ApfConfig
) -> Vec3:
    """Full commanded acceleration for an active chaser."""
    if ch.status is not ChaserStatus.ACTIVE:
        raise ValueError(f"chaser {ch.id} is {ch.status.value}, not active")
    accel = field_acceleration(ch, nodes, cfg) + chaser_chaser_acceleration(ch, others, cfg)
    if cfg.hill_enabled:
        accel = accel + hill_acceleration(ch, cfg)
    return accel


def distance_to_dock(ch: ChaserState, nodes: NodeSet) -> float:
    a, b = nodes.dock_positions()
    return min((ch.position - a).norm(), (ch.position - b).norm())


def update_status(
    chasers: list[ChaserState], nodes: NodeSet | None, cfg: ApfConfig
) -> list[ChaserState]:
    """Advance the mission status machine one guidance cycle.

    Returns new states; never mutates inputs.  Terminal statuses (docked,
    inspection orbit, failed) are absorbing.
    """
    staged: list[ChaserState] = []
    for ch in chasers:
        if ch.status in TERMINAL_STATUSES:
            staged.append(ch)
            continue
        # A frozen chaser reverts to active unless a dock attempt re-freezes
        # it below.
        status = ChaserStatus.ACTIVE
        in_range = nodes is not None and distance_to_dock(ch, nodes) <= cfg.dock_range
        counter = ch.dock_counter + 1 if in_range else 0
        if counter >= cfg.dock_cycles:
            staged.append(
                replace(ch, status=ChaserStatus.DOCKED, dock_counter=cfg.dock_cycles)
            )
            continue
        staged.append(replace(ch, status=status, dock_counter=counter))

    pending = any(
        0 < ch.dock_counter < cfg.dock_cycles
        for ch in staged
        if ch.status is ChaserStatus.ACTIVE
    )

    out: list[ChaserState] = []
    for ch in staged:
        if ch.status is not ChaserStatus.ACTIVE:
            out.append(ch)
            continue
        if pending and ch.dock_counter == 0:
            out.append(replace(ch, status=ChaserStatus.FROZEN))
            continue
        if ch.dock_counter > 0:
            out.append(ch)  # mid-dock: keep moving, stall logic paused
            continue
        stall = ch.stall_counter + 1 if ch.last_move_held else 0
        if stall >= cfg.stall_limit:
            out.append(replace(ch, status=ChaserStatus.INSPECTION_ORBIT, stall_counter=stall))
            continue
        out.append(replace(ch, stall_counter=stall))
    return out


def propagate_continuous(
    ch: ChaserState,
    nodes: NodeSet,
    cfg: ApfConfig,
    duration: float,
    dt: float = 0.01,
) -> ChaserState:
    """Integrate the continuous-time field dynamics for one chaser.

    Analysis utility (the flight path is quantized; this is the unquantized
    descent the field defines).  Semi-implicit Euler at step ``dt``.
    """
    state = ch
    steps = int(round(duration / dt))
    for _ in range(steps):
        a = field_acceleration(state, nodes, cfg)
        if cfg.hill_enabled:
            a = a + hill_acceleration(state, cfg)
        v = state.velocity + a * dt
        p = state.position + v * dt
        state = replace(state, position=p, velocity=v)
    return state
