"""Synthetic machine-vision stand-in and potential-field node reconstruction.

A parametric target mockup (box body plus thin rectangular solar panels) is
rendered through a pinhole camera into per-component detections: a pixel
bounding box and five 3D points, one at the box centroid and four inset from
the corners.  Detections are then rebuilt into the guidance node set: points
are mirrored through the estimated target centroid to synthesize the unseen
side, two docking nodes are added on the x-axis, and all offsets are inflated
by a safety scale.

The renderer is pure given an RNG; the 2 FPS cadence gate lives in
:class:`VisionSensor`, which is confined to the simulation loop thread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .frames import (
    Pose,
    Quat,
    Vec3,
    apf_from_camera,
    camera_from_apf,
    quat_from_axis_angle,
    quat_multiply,
    quat_normalize,
    UNIT_X,
    UNIT_Y,
    UNIT_Z,
)


class DetectionDropped(Exception):
    """Raised when a bounding box cannot yield five valid 3D points."""


class NodeRebuildFailed(Exception):
    """Raised when the detection set contains no body detection."""


class DetectionClass(Enum):
    SOLAR_PANEL = "solar_panel"
    BODY = "body"


class NodeKind(Enum):
    ATTRACTIVE = "attractive"
    REPULSIVE = "repulsive"


# Fraction of bbox width/height the corner sample points are inset, so the
# depth samples land on the component instead of the background.
CORNER_INSET = 0.10


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model.  Defaults approximate a 69 deg HFOV 848x480 color stream."""

    width: int = 848
    height: int = 480
    fx: float = 424.0 / math.tan(math.radians(69.0) / 2.0)
    fy: float = 424.0 / math.tan(math.radians(69.0) / 2.0)
    cx: float = 424.0
    cy: float = 240.0

    def project(self, p: Vec3) -> tuple[float, float]:
        """Camera-frame point (z forward) to pixel coordinates."""
        if p.z <= 0.0:
            raise ValueError("point behind camera")
        return (self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)

    def back_project(self, u: float, v: float, depth: float) -> Vec3:
        return Vec3((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean Gaussian error on the extracted 3D points, per axis.

    The depth axis (camera z) sigma is additionally scaled by
    ``depth_multiplier``, the knob a depth-sensor fault turns up.
    """

    sigma: float = 0.0
    depth_multiplier: float = 1.0


@dataclass(frozen=True)
class PanelSpec:
    """A thin rectangular panel: centered at ``attach``, extending ``span``
    either way along its long axis and ``half_width`` along the in-plane
    perpendicular; ``normal`` orients the face."""

    attach: Vec3
    span: Vec3
    normal: Vec3
    half_width: float = 0.15

    def __post_init__(self):
        if self.span.norm() <= 0.0:
            raise ValueError("panel span must be non-zero")
        if self.normal.norm() <= 0.0:
            raise ValueError("panel normal must be non-zero")


@dataclass(frozen=True)
class TargetMockup:
    """Target geometry and attitude motion.

    Positions are in the mockup body frame; ``pose`` places the body frame in
    APF.  Spin rates are held constant for the whole run.
    """

    body_half_extents: Vec3
    panels: tuple[PanelSpec, ...] = ()
    pose: Pose = Pose(Vec3(0.0, 0.0, 0.0))
    yaw_rate_dps: float = 0.0
    pitch_rate_dps: float = 0.0
    roll_rate_dps: float = 0.0

    def __post_init__(self):
        he = self.body_half_extents
        if he.x <= 0.0 or he.y <= 0.0 or he.z <= 0.0:
            raise ValueError("body half extents must be positive")

    def pose_at(self, t: float) -> Pose:
        """Pose after ``t`` seconds of constant-rate spin (yaw about z,
        pitch about y, roll about x, applied in that order)."""
        q: Quat = self.pose.orientation
        for axis, rate in (
            (UNIT_Z, self.yaw_rate_dps),
            (UNIT_Y, self.pitch_rate_dps),
            (UNIT_X, self.roll_rate_dps),
        ):
            if rate != 0.0:
                q = quat_multiply(quat_from_axis_angle(axis, math.radians(rate) * t), q)
        return Pose(self.pose.position, quat_normalize(q))


@dataclass(frozen=True)
class Detection:
    """One classified component: pixel bbox and five camera-frame points."""

    cls: DetectionClass
    bbox: tuple[float, float, float, float]  # (u_min, v_min, u_max, v_max)
    points: tuple[Vec3, Vec3, Vec3, Vec3, Vec3]

    def __post_init__(self):
        u0, v0, u1, v1 = self.bbox
        if u1 <= u0 or v1 <= v0:
            raise ValueError("degenerate bounding box")
        if len(self.points) != 5:
            raise ValueError("a detection carries exactly 5 points")


@dataclass(frozen=True)
class FieldNode:
    """One point source of the potential field.  Attractive gains are
    positive, repulsive gains negative."""

    position: Vec3
    kind: NodeKind
    gain: float

    def __post_init__(self):
        if self.kind is NodeKind.ATTRACTIVE and self.gain <= 0.0:
            raise ValueError("attractive node needs gain > 0")
        if self.kind is NodeKind.REPULSIVE and self.gain >= 0.0:
            raise ValueError("repulsive node needs gain < 0")


@dataclass
class NodeSet:
    """The reconstructed field: all nodes, the indices of the two primary
    docking nodes, and the estimated target centroid (APF frame)."""

    nodes: list[FieldNode]
    primary_dock_nodes: tuple[int, int]
    centroid: Vec3
    positions: np.ndarray = field(init=False, repr=False)
    gains: np.ndarray = field(init=False, repr=False)
    repulsive_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.primary_dock_nodes) != 2:
            raise ValueError("exactly two primary dock nodes required")
        self.positions = np.array([n.position.as_tuple() for n in self.nodes], dtype=float)
        self.gains = np.array([n.gain for n in self.nodes], dtype=float)
        self.repulsive_mask = np.array(
            [n.kind is NodeKind.REPULSIVE for n in self.nodes], dtype=bool
        )

    def dock_positions(self) -> tuple[Vec3, Vec3]:
        i, j = self.primary_dock_nodes
        return (self.nodes[i].position, self.nodes[j].position)


@dataclass(frozen=True)
class RebuildConfig:
    """Parameters of the node reconstruction step."""

    safety_scale: float = 1.75
    mu_attract: float = 0.1
    mu_repulse: float = -0.015
    dock_offset: float = 0.3  # body half extent along APF x, from config geometry
    max_range: float = 5.0  # detections farther than this are dropped
    edge_on_cos: float = 0.05  # faces flatter than this to the view are culled


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------


def _face_rectangles(mock: TargetMockup, pose: Pose) -> list[list[Vec3]]:
    """The six body faces as corner quads in the APF frame, wound so that
    edge1 x edge2 points outward."""
    hx, hy, hz = mock.body_half_extents.as_tuple()
    faces = []
    for axis, sign in ((0, 1), (0, -1), (1, 1), (1, -1), (2, 1), (2, -1)):
        he = [hx, hy, hz]
        center = [0.0, 0.0, 0.0]
        center[axis] = sign * he[axis]
        # cyclic axes make (u, v, axis) right-handed; the negative face swaps
        # the corner sweep to flip the winding
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        order = ((-1, -1), (1, -1), (1, 1), (-1, 1)) if sign > 0 else ((-1, -1), (-1, 1), (1, 1), (1, -1))
        corners = []
        for su, sv in order:
            c = list(center)
            c[u_axis] += su * he[u_axis]
            c[v_axis] += sv * he[v_axis]
            corners.append(pose.transform(Vec3(*c)))
        faces.append(corners)
    return faces


def _panel_rectangle(panel: PanelSpec, pose: Pose) -> list[Vec3]:
    span_hat = panel.span * (1.0 / panel.span.norm())
    n_hat = panel.normal * (1.0 / panel.normal.norm())
    wv = Vec3.from_array(np.cross(n_hat.as_array(), span_hat.as_array())) * panel.half_width
    corners = []
    for ss, sw in ((-1, -1), (1, -1), (1, 1), (-1, 1)):
        corners.append(pose.transform(panel.attach + panel.span * ss + wv * sw))
    return corners


def _rect_normal_cam(corners_cam: list[Vec3]) -> Vec3:
    e1 = (corners_cam[1] - corners_cam[0]).as_array()
    e2 = (corners_cam[3] - corners_cam[0]).as_array()
    n = np.cross(e1, e2)
    return Vec3.from_array(n / np.linalg.norm(n))


def _make_depth_lookup(corners_cam: list[Vec3], intrinsics: CameraIntrinsics):
    """Depth function over pixels: ray-cast against the rectangle's plane and
    return camera-frame z where the ray hits inside the rectangle, else None."""
    c0 = corners_cam[0].as_array()
    e1 = (corners_cam[1] - corners_cam[0]).as_array()
    e2 = (corners_cam[3] - corners_cam[0]).as_array()
    n = np.cross(e1, e2)
    e1_sq = float(e1 @ e1)
    e2_sq = float(e2 @ e2)
    plane_d = float(n @ c0)

    def lookup(u: float, v: float) -> float | None:
        ray = np.array([(u - intrinsics.cx) / intrinsics.fx, (v - intrinsics.cy) / intrinsics.fy, 1.0])
        denom = float(n @ ray)
        if abs(denom) < 1e-12:
            return None
        lam = plane_d / denom
        if lam <= 0.0:
            return None
        hit = lam * ray
        rel = hit - c0
        s = float(rel @ e1) / e1_sq
        w = float(rel @ e2) / e2_sq
        if -1e-9 <= s <= 1.0 + 1e-9 and -1e-9 <= w <= 1.0 + 1e-9:
            return float(hit[2])
        return None

    return lookup


def _nearest_valid_depth(
    bbox: tuple[float, float, float, float], depth_lookup, u: float, v: float, grid: int = 15
) -> float | None:
    u0, v0, u1, v1 = bbox
    best = None
    best_d2 = math.inf
    for i in range(grid):
        for j in range(grid):
            su = u0 + (i + 0.5) * (u1 - u0) / grid
            sv = v0 + (j + 0.5) * (v1 - v0) / grid
            z = depth_lookup(su, sv)
            if z is None:
                continue
            d2 = (su - u) ** 2 + (sv - v) ** 2
            if d2 < best_d2:
                best_d2 = d2
                best = z
    return best


def extract_five_points(
    bbox: tuple[float, float, float, float],
    depth_lookup,
    intrinsics: CameraIntrinsics | None = None,
) -> tuple[Vec3, Vec3, Vec3, Vec3, Vec3]:
    """Back-project the bbox centroid and four inset corner samples.

    ``depth_lookup(u, v)`` returns camera-frame depth in meters or None where
    no depth is available; a missing sample is substituted with the nearest
    valid depth inside the bbox.  Raises :class:`DetectionDropped` for a
    degenerate bbox or when no depth sample in the bbox is valid.
    """
    intrinsics = intrinsics or CameraIntrinsics()
    u0, v0, u1, v1 = bbox
    w, h = u1 - u0, v1 - v0
    if w <= 0.0 or h <= 0.0:
        raise DetectionDropped(f"degenerate bbox {bbox}")
    du, dv = CORNER_INSET * w, CORNER_INSET * h
    samples = [
        ((u0 + u1) / 2.0, (v0 + v1) / 2.0),  # P1: centroid
        (u0 + du, v0 + dv),  # P2
        (u1 - du, v0 + dv),  # P3
        (u0 + du, v1 - dv),  # P4
        (u1 - du, v1 - dv),  # P5
    ]
    points = []
    for u, v in samples:
        z = depth_lookup(u, v)
        if z is None:
            z = _nearest_valid_depth(bbox, depth_lookup, u, v)
        if z is None:
            raise DetectionDropped("no valid depth anywhere in bbox")
        points.append(intrinsics.back_project(u, v, z))
    return tuple(points)


def render_detections(
    mock: TargetMockup,
    camera_pose: Pose,
    t: float,
    noise: NoiseSpec | None = None,
    intrinsics: CameraIntrinsics | None = None,
    rng: np.random.Generator | None = None,
    max_range: float = 5.0,
    edge_on_cos: float = 0.05,
) -> list[Detection]:
    """Render one detection per visible component at sim time ``t``.

    The body contributes at most one detection, from its most camera-facing
    face; each panel contributes one unless seen edge-on or out of frame.
    A target fully out of view yields an empty list.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    noise = noise or NoiseSpec()
    intrinsics = intrinsics or CameraIntrinsics()
    pose = mock.pose_at(t)

    candidates: list[tuple[DetectionClass, list[Vec3]]] = []

    # Body: pick the single face most directly facing the camera (outward
    # normal against the view ray; back faces cull away).
    best_face = None
    best_cos = -1.0
    for corners in _face_rectangles(mock, pose):
        corners_cam = [camera_from_apf(c, camera_pose) for c in corners]
        if any(c.z <= 1e-6 for c in corners_cam):
            continue
        center = Vec3.from_array(np.mean([c.as_array() for c in corners_cam], axis=0))
        n_hat = _rect_normal_cam(corners_cam)
        facing = -n_hat.dot(center) / center.norm()  # >0 when normal points at camera
        if facing > best_cos:
            best_cos = facing
            best_face = corners
    if best_face is not None and best_cos > edge_on_cos:
        candidates.append((DetectionClass.BODY, best_face))

    for panel in mock.panels:
        candidates.append((DetectionClass.SOLAR_PANEL, _panel_rectangle(panel, pose)))

    detections: list[Detection] = []
    for cls, corners in candidates:
        corners_cam = [camera_from_apf(c, camera_pose) for c in corners]
        if any(c.z <= 1e-6 for c in corners_cam):
            continue
        center = Vec3.from_array(np.mean([c.as_array() for c in corners_cam], axis=0))
        if center.norm() > max_range:
            continue
        n_hat = _rect_normal_cam(corners_cam)
        if abs(n_hat.dot(center) / center.norm()) < edge_on_cos:
            continue  # edge-on
        px = [intrinsics.project(c) for c in corners_cam]
        u0 = max(0.0, min(p[0] for p in px))
        u1 = min(float(intrinsics.width), max(p[0] for p in px))
        v0 = max(0.0, min(p[1] for p in px))
        v1 = min(float(intrinsics.height), max(p[1] for p in px))
        if u1 - u0 < 2.0 or v1 - v0 < 2.0:
            continue  # out of frame or degenerate
        lookup = _make_depth_lookup(corners_cam, intrinsics)
        try:
            points = extract_five_points((u0, v0, u1, v1), lookup, intrinsics)
        except DetectionDropped:
            continue
        if noise.sigma > 0.0:
            if rng is None:
                raise ValueError("noise requires an explicit rng for determinism")
            sz = noise.sigma * noise.depth_multiplier
            points = tuple(
                Vec3(
                    p.x + rng.normal(0.0, noise.sigma),
                    p.y + rng.normal(0.0, noise.sigma),
                    p.z + rng.normal(0.0, sz),
                )
                for p in points
            )
        detections.append(Detection(cls, (u0, v0, u1, v1), points))
    return detections


class VisionSensor:
    """Cadence-gated renderer: a new detection set is produced at most every
    ``period`` seconds of sim time (2 FPS by default); calls in between
    return the previous set."""

    def __init__(
        self,
        mock: TargetMockup,
        camera_pose: Pose,
        noise: NoiseSpec | None = None,
        intrinsics: CameraIntrinsics | None = None,
        rng: np.random.Generator | None = None,
        period: float = 0.5,
        max_range: float = 5.0,
    ):
        self.mock = mock
        self.camera_pose = camera_pose
        self.noise = noise or NoiseSpec()
        self.intrinsics = intrinsics or CameraIntrinsics()
        self.rng = rng
        self.period = period
        self.max_range = max_range
        self._last_emit_t: float | None = None
        self._last: list[Detection] = []

    def poll_new(self, t: float) -> list[Detection] | None:
        """Like :meth:`sample`, but None when the cadence gate is closed, so
        a caller publishing detections only forwards fresh sets."""
        if self._last_emit_t is not None and t - self._last_emit_t < self.period:
            return None
        return self.sample(t)

    def sample(self, t: float) -> list[Detection]:
        if self._last_emit_t is not None and t - self._last_emit_t < self.period:
            return self._last
        self._last = render_detections(
            self.mock,
            self.camera_pose,
            t,
            noise=self.noise,
            intrinsics=self.intrinsics,
            rng=self.rng,
            max_range=self.max_range,
        )
        self._last_emit_t = t
        return self._last


# --------------------------------------------------------------------------
# node reconstruction
# --------------------------------------------------------------------------


def rebuild_nodes(detections, camera_pose: Pose, cfg: RebuildConfig) -> NodeSet:
    """Build the potential-field node set from one camera's detections.

    Steps: convert points to APF, estimate the target centroid from the body
    points, mirror every point through the centroid to synthesize the unseen
    side, add the two x-axis docking nodes at the configured body extent, then
    inflate every offset from the centroid by the safety scale.  Body-derived
    and added nodes are attractive; panel-derived nodes are repulsive.

    Accepts anything with ``cls`` and five ``points``: renderer detections
    (Vec3 points, enum class) or decoded wire entries (tuple points, string
    class).
    """
    body_pts: list[Vec3] = []
    panel_pts: list[Vec3] = []
    for det in detections:
        pts = [
            apf_from_camera(p if isinstance(p, Vec3) else Vec3(*p), camera_pose)
            for p in det.points
        ]
        cls = det.cls if isinstance(det.cls, DetectionClass) else DetectionClass(det.cls)
        if cls is DetectionClass.BODY:
            body_pts.extend(pts)
        else:
            panel_pts.extend(pts)
    if not body_pts:
        raise NodeRebuildFailed("no body detection in set")

    centroid = Vec3.from_array(np.mean([p.as_array() for p in body_pts], axis=0))

    raw: list[tuple[Vec3, NodeKind]] = [(p, NodeKind.ATTRACTIVE) for p in body_pts]
    raw += [(p, NodeKind.REPULSIVE) for p in panel_pts]
    mirrored = [(centroid * 2.0 - p, kind) for p, kind in raw]
    staged = raw + mirrored
    dock_lo = len(staged)
    staged.append((centroid + Vec3(cfg.dock_offset, 0.0, 0.0), NodeKind.ATTRACTIVE))
    staged.append((centroid - Vec3(cfg.dock_offset, 0.0, 0.0), NodeKind.ATTRACTIVE))

    nodes = []
    for pos, kind in staged:
        inflated = centroid + (pos - centroid) * cfg.safety_scale
        gain = cfg.mu_attract if kind is NodeKind.ATTRACTIVE else cfg.mu_repulse
        nodes.append(FieldNode(inflated, kind, gain))
    return NodeSet(nodes, (dock_lo, dock_lo + 1), centroid)
