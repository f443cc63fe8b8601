"""Scenario files: schema, validation, and expansion into run configuration.

A scenario is one YAML document describing the target mockup, the camera,
the chasers (starting positions and fault switches), the guidance gains, the
vehicle motion model, and the run harness settings (seed, duration,
transport).  Field defaults reproduce the desk-scale reference setup, so a
minimal file only names the chasers and their placement.

Named placements (``scattered``, ``r_bar``, ``v_bar``, ``extreme``) expand
deterministically for chasers without explicit positions; bundled scenarios
spell positions out and keep the name as a label.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .fleet import FaultSpec, SpoofSpec, VehicleConfig, NO_FAULTS
from .frames import Pose, Vec3, quat_normalize
from .guidance import ApfConfig
from .vision import NoiseSpec, PanelSpec, RebuildConfig, TargetMockup


class ScenarioError(ValueError):
    """A scenario file failed validation; the message names the bad field."""


class NoScenarios(ScenarioError):
    """A scenario directory contained no scenario files."""


TRANSPORTS = ("in_process", "loopback_udp")

# Deterministic expansion of the named placements (meters, guidance frame),
# used when a chaser entry has no explicit position.
PLACEMENTS: dict[str, tuple[tuple[float, float, float], ...]] = {
    "scattered": ((-1.5, -1.2, 0.4), (-1.7, 1.1, -0.35), (-1.3, 0.15, 0.85)),
    "r_bar": ((0.6, 0.0, 0.9), (0.6, 0.0, 1.35), (0.6, 0.0, 1.8)),
    "v_bar": ((-1.0, 0.0, 0.0), (-1.45, 0.0, 0.0), (-1.9, 0.0, 0.0)),
    "extreme": ((1.75, 1.75, 1.0), (-1.75, -1.75, -0.9), (1.75, -1.75, -0.9)),
}


@dataclass(frozen=True)
class Arena:
    """Flight volume (guidance frame) and the inter-chaser safety floor."""

    lo: Vec3 = Vec3(-2.0, -2.0, -1.2)
    hi: Vec3 = Vec3(2.0, 2.0, 2.0)
    min_separation: float = 0.15

    def __post_init__(self):
        if not (self.lo.x < self.hi.x and self.lo.y < self.hi.y and self.lo.z < self.hi.z):
            raise ScenarioError("arena lo must be strictly below hi on every axis")
        if self.min_separation < 0.0:
            raise ScenarioError("arena min_separation must be >= 0")

    def contains(self, p: Vec3) -> bool:
        return (
            self.lo.x <= p.x <= self.hi.x
            and self.lo.y <= p.y <= self.hi.y
            and self.lo.z <= p.z <= self.hi.z
        )

    @property
    def floor_z(self) -> float:
        return self.lo.z


@dataclass(frozen=True)
class ChaserSetup:
    id: str
    position: Vec3
    faults: FaultSpec = NO_FAULTS


@dataclass(frozen=True)
class Scenario:
    name: str
    target: TargetMockup
    camera_pose: Pose
    chasers: tuple[ChaserSetup, ...]
    apf: ApfConfig = ApfConfig()
    vehicle: VehicleConfig = VehicleConfig()
    rebuild: RebuildConfig = RebuildConfig()
    noise: NoiseSpec = NoiseSpec()
    arena: Arena = Arena()
    seed: int = 0
    max_duration: float = 420.0
    transport: str = "in_process"
    loss_rate: float = 0.0
    vision_period: float = 0.5
    placement: str = "explicit"
    description: str = ""

    def __post_init__(self):
        if not self.chasers:
            raise ScenarioError("scenario needs at least one chaser")
        ids = [c.id for c in self.chasers]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"duplicate chaser ids: {ids}")
        if self.max_duration <= 0.0:
            raise ScenarioError("max_duration must be > 0")
        if self.transport not in TRANSPORTS:
            raise ScenarioError(f"transport must be one of {TRANSPORTS}, got {self.transport!r}")
        if not 0.0 <= self.loss_rate < 1.0:
            raise ScenarioError("loss_rate must be in [0, 1)")
        if self.vision_period <= 0.0:
            raise ScenarioError("vision_period must be > 0")
        for c in self.chasers:
            if not self.arena.contains(c.position):
                raise ScenarioError(f"chaser {c.id} starts outside the arena: {c.position}")

    @property
    def chaser_ids(self) -> list[str]:
        return [c.id for c in self.chasers]

    @property
    def depth_noise_multiplier(self) -> float:
        """Depth-fault scaling consumed by the shared camera: the largest
        multiplier any chaser's fault spec requests."""
        return max((c.faults.depth_noise_multiplier for c in self.chasers), default=1.0)


def expand_placement(name: str, n: int) -> list[Vec3]:
    """Concrete start positions for a named placement, first ``n`` slots."""
    try:
        table = PLACEMENTS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown placement {name!r}; known: {sorted(PLACEMENTS)} "
            "(or give every chaser an explicit position)"
        ) from None
    if n > len(table):
        raise ScenarioError(f"placement {name!r} defines {len(table)} slots, need {n}")
    return [Vec3(*table[i]) for i in range(n)]


# --------------------------------------------------------------------------
# YAML loading
# --------------------------------------------------------------------------


def _require_mapping(value, where: str) -> dict:
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ScenarioError(f"{where} must be a mapping, got {type(value).__name__}")
    return value


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = set(d) - allowed
    if unknown:
        raise ScenarioError(f"unknown key(s) {sorted(unknown)} in {where}; allowed: {sorted(allowed)}")


def _vec3(value, where: str) -> Vec3:
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ScenarioError(f"{where} must be a 3-element list")
    try:
        return Vec3(float(value[0]), float(value[1]), float(value[2]))
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from e


def _dataclass_from(d: dict, cls, where: str, **overrides):
    """Build a config dataclass from a mapping, rejecting unknown keys."""
    names = {f.name for f in fields(cls)}
    _check_keys(d, names, where)
    kwargs = dict(d)
    kwargs.update(overrides)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"{where}: {e}") from e


_DEFAULT_PANELS = (
    {"attach": [0.0, 0.55, 0.0], "span": [0.0, 0.25, 0.0], "normal": [0.0, 0.0, 1.0], "half_width": 0.15},
    {"attach": [0.0, -0.55, 0.0], "span": [0.0, 0.25, 0.0], "normal": [0.0, 0.0, 1.0], "half_width": 0.15},
)


def _parse_panel(d: dict, where: str) -> PanelSpec:
    _check_keys(d, {"attach", "span", "normal", "half_width"}, where)
    try:
        return PanelSpec(
            attach=_vec3(d.get("attach", [0, 0, 0]), f"{where}.attach"),
            span=_vec3(d.get("span", [0, 0.25, 0]), f"{where}.span"),
            normal=_vec3(d.get("normal", [0, 0, 1]), f"{where}.normal"),
            half_width=float(d.get("half_width", 0.15)),
        )
    except ValueError as e:
        raise ScenarioError(f"{where}: {e}") from e


def _parse_target(d: dict) -> TargetMockup:
    _check_keys(
        d,
        {"body_half_extents", "panels", "position", "orientation",
         "yaw_rate_dps", "pitch_rate_dps", "roll_rate_dps"},
        "target",
    )
    half = _vec3(d.get("body_half_extents", [0.3, 0.3, 0.3]), "target.body_half_extents")
    raw_panels = d.get("panels", list(_DEFAULT_PANELS))
    if not isinstance(raw_panels, list):
        raise ScenarioError("target.panels must be a list")
    panels = tuple(
        _parse_panel(_require_mapping(p, f"target.panels[{i}]"), f"target.panels[{i}]")
        for i, p in enumerate(raw_panels)
    )
    position = _vec3(d.get("position", [0, 0, 0]), "target.position")
    quat = d.get("orientation", [0.0, 0.0, 0.0, 1.0])
    if not isinstance(quat, (list, tuple)) or len(quat) != 4:
        raise ScenarioError("target.orientation must be a 4-element [x, y, z, w] list")
    try:
        pose = Pose(position, quat_normalize(tuple(float(q) for q in quat)))
        return TargetMockup(
            body_half_extents=half,
            panels=panels,
            pose=pose,
            yaw_rate_dps=float(d.get("yaw_rate_dps", 0.0)),
            pitch_rate_dps=float(d.get("pitch_rate_dps", 0.0)),
            roll_rate_dps=float(d.get("roll_rate_dps", 0.0)),
        )
    except ValueError as e:
        raise ScenarioError(f"target: {e}") from e


def _parse_camera(d: dict) -> Pose:
    _check_keys(d, {"position", "orientation"}, "camera")
    position = _vec3(d.get("position", [0.0, 0.0, 2.2]), "camera.position")
    quat = d.get("orientation", [1.0, 0.0, 0.0, 0.0])
    if not isinstance(quat, (list, tuple)) or len(quat) != 4:
        raise ScenarioError("camera.orientation must be a 4-element [x, y, z, w] list")
    try:
        return Pose(position, quat_normalize(tuple(float(q) for q in quat)))
    except ValueError as e:
        raise ScenarioError(f"camera: {e}") from e


def _parse_faults(d: dict, where: str) -> FaultSpec:
    _check_keys(d, {"imu_drift_sigma_cm", "spoof", "depth_noise_multiplier"}, where)
    spoof = None
    if d.get("spoof") is not None:
        s = _require_mapping(d["spoof"], f"{where}.spoof")
        _check_keys(s, {"trigger_center", "trigger_radius", "reported_position"}, f"{where}.spoof")
        try:
            spoof = SpoofSpec(
                trigger_center=_vec3(s.get("trigger_center", [0, 0, 0]), f"{where}.spoof.trigger_center"),
                trigger_radius=float(s.get("trigger_radius", 0.5)),
                reported_position=_vec3(s.get("reported_position", [0, 0, 0]), f"{where}.spoof.reported_position"),
            )
        except ValueError as e:
            raise ScenarioError(f"{where}.spoof: {e}") from e
    try:
        return FaultSpec(
            imu_drift_sigma_cm=float(d.get("imu_drift_sigma_cm", 0.0)),
            spoof=spoof,
            depth_noise_multiplier=float(d.get("depth_noise_multiplier", 1.0)),
        )
    except ValueError as e:
        raise ScenarioError(f"{where}: {e}") from e


def _parse_chasers(raw, placement: str) -> tuple[ChaserSetup, ...]:
    if raw is None:
        raw = [{"id": f"chaser-{i + 1}"} for i in range(3)]
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("chasers must be a non-empty list")
    entries = [_require_mapping(c, f"chasers[{i}]") for i, c in enumerate(raw)]
    for i, c in enumerate(entries):
        _check_keys(c, {"id", "position", "faults"}, f"chasers[{i}]")
    missing = [i for i, c in enumerate(entries) if "position" not in c]
    expanded: dict[int, Vec3] = {}
    if missing:
        slots = expand_placement(placement, len(entries))
        expanded = {i: slots[i] for i in missing}
    out = []
    for i, c in enumerate(entries):
        cid = str(c.get("id", f"chaser-{i + 1}"))
        position = expanded[i] if i in expanded else _vec3(c["position"], f"chasers[{i}].position")
        faults = _parse_faults(_require_mapping(c.get("faults"), f"chasers[{i}].faults"), f"chasers[{i}].faults")
        out.append(ChaserSetup(id=cid, position=position, faults=faults))
    return tuple(out)


_TOP_KEYS = {
    "name", "description", "seed", "max_duration", "transport", "loss_rate",
    "placement", "target", "camera", "arena", "chasers", "apf", "vehicle",
    "rebuild", "vision",
}


def scenario_from_mapping(data: dict, default_name: str = "scenario") -> Scenario:
    data = _require_mapping(data, "scenario")
    _check_keys(data, _TOP_KEYS, "scenario")

    placement = str(data.get("placement", "explicit"))
    target = _parse_target(_require_mapping(data.get("target"), "target"))
    camera_pose = _parse_camera(_require_mapping(data.get("camera"), "camera"))

    arena_d = _require_mapping(data.get("arena"), "arena")
    _check_keys(arena_d, {"lo", "hi", "min_separation"}, "arena")
    arena = Arena(
        lo=_vec3(arena_d.get("lo", [-2.0, -2.0, -1.2]), "arena.lo"),
        hi=_vec3(arena_d.get("hi", [2.0, 2.0, 2.0]), "arena.hi"),
        min_separation=float(arena_d.get("min_separation", 0.15)),
    )

    apf = _dataclass_from(_require_mapping(data.get("apf"), "apf"), ApfConfig, "apf")
    vehicle = _dataclass_from(_require_mapping(data.get("vehicle"), "vehicle"), VehicleConfig, "vehicle")

    vision_d = _require_mapping(data.get("vision"), "vision")
    _check_keys(vision_d, {"noise_sigma", "period", "max_range"}, "vision")
    noise_sigma = float(vision_d.get("noise_sigma", 0.0))
    vision_period = float(vision_d.get("period", 0.5))
    vision_range = float(vision_d.get("max_range", 5.0))

    rebuild_d = _require_mapping(data.get("rebuild"), "rebuild")
    rebuild = _dataclass_from(
        rebuild_d,
        RebuildConfig,
        "rebuild",
        mu_attract=float(rebuild_d.get("mu_attract", apf.mu_attract)),
        mu_repulse=float(rebuild_d.get("mu_repulse", apf.mu_repulse)),
        dock_offset=float(rebuild_d.get("dock_offset", target.body_half_extents.x)),
        max_range=float(rebuild_d.get("max_range", vision_range)),
    )

    chasers = _parse_chasers(data.get("chasers"), placement)
    noise = NoiseSpec(sigma=noise_sigma)  # depth multiplier applied at run time

    try:
        return Scenario(
            name=str(data.get("name", default_name)),
            description=str(data.get("description", "")),
            target=target,
            camera_pose=camera_pose,
            chasers=chasers,
            apf=apf,
            vehicle=vehicle,
            rebuild=rebuild,
            noise=noise,
            arena=arena,
            seed=int(data.get("seed", 0)),
            max_duration=float(data.get("max_duration", 420.0)),
            transport=str(data.get("transport", "in_process")),
            loss_rate=float(data.get("loss_rate", 0.0)),
            vision_period=vision_period,
            placement=placement,
        )
    except ScenarioError:
        raise
    except (TypeError, ValueError) as e:
        raise ScenarioError(str(e)) from e


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario file {path}: {e}") from e
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ScenarioError(f"invalid YAML in {path}: {e}") from e
    if data is None:
        raise ScenarioError(f"scenario file {path} is empty")
    return scenario_from_mapping(data, default_name=path.stem)


def load_scenario_dir(path: str | Path) -> list[Scenario]:
    """All scenarios in a directory, sorted by file name."""
    path = Path(path)
    if not path.is_dir():
        raise ScenarioError(f"not a directory: {path}")
    files = sorted(path.glob("*.yaml")) + sorted(path.glob("*.yml"))
    if not files:
        raise NoScenarios(f"no scenario files (*.yaml) in {path}")
    return [load_scenario(f) for f in files]


def bundled_scenario_dir() -> Path:
    """Directory with the scenario files shipped inside the package."""
    return Path(__file__).resolve().parent / "scenarios"
