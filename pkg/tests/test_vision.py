"""Vision simulator tests: pinhole geometry, detection rendering, the five-point
extraction with depth holes, the 2 FPS cadence gate, and node reconstruction."""


import numpy as np
import pytest

from swarmdock.frames import Pose, Vec3
from swarmdock.vision import (
    CameraIntrinsics,
    Detection,
    DetectionClass,
    DetectionDropped,
    NodeKind,
    NodeRebuildFailed,
    NoiseSpec,
    PanelSpec,
    RebuildConfig,
    TargetMockup,
    VisionSensor,
    extract_five_points,
    rebuild_nodes,
    render_detections,
)

# Overhead camera 2.2 m above the origin looking straight down: a 180-degree
# flip about x maps the camera's +z optical axis onto APF -z.
CAM = Pose(Vec3(0.0, 0.0, 2.2), (1.0, 0.0, 0.0, 0.0))

BODY = Vec3(0.3, 0.3, 0.3)
PANELS = (
    PanelSpec(attach=Vec3(0.0, 0.55, 0.0), span=Vec3(0.0, 0.25, 0.0), normal=Vec3(0.0, 0.0, 1.0)),
    PanelSpec(attach=Vec3(0.0, -0.55, 0.0), span=Vec3(0.0, 0.25, 0.0), normal=Vec3(0.0, 0.0, 1.0)),
)


def overhead_mockup(panels=PANELS, **rates):
    return TargetMockup(body_half_extents=BODY, panels=panels, **rates)


def test_pinhole_project_back_project_round_trip():
    intr = CameraIntrinsics()
    rng = np.random.default_rng(5)
    for _ in range(100):
        p = Vec3(rng.uniform(-1, 1), rng.uniform(-0.5, 0.5), rng.uniform(0.5, 4.0))
        u, v = intr.project(p)
        back = intr.back_project(u, v, p.z)
        assert (back - p).norm() < 1e-9


def test_project_rejects_point_behind_camera():
    with pytest.raises(ValueError):
        CameraIntrinsics().project(Vec3(0.0, 0.0, -1.0))


def test_uniform_depth_bbox_gives_five_points_at_depth():
    intr = CameraIntrinsics()
    bbox = (374.0, 190.0, 474.0, 290.0)  # 100x100 px centered-ish

    points = extract_five_points(bbox, lambda u, v: 2.0, intr)
    assert len(points) == 5
    for p in points:
        assert abs(p.z - 2.0) < 1e-12
    # P1 back-projects from the bbox centroid
    cu, cv = (bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0
    assert (points[0] - intr.back_project(cu, cv, 2.0)).norm() < 1e-12


def test_corner_depth_hole_substitutes_nearest_valid():
    intr = CameraIntrinsics()
    bbox = (100.0, 100.0, 200.0, 200.0)
    hole = (110.0, 110.0)  # where the P2 sample lands (10% inset)

    def lookup(u, v):
        if abs(u - hole[0]) < 1e-6 and abs(v - hole[1]) < 1e-6:
            return None
        return 2.0

    points = extract_five_points(bbox, lookup, intr)
    assert abs(points[1].z - 2.0) < 1e-12  # hole filled from a neighbor


def test_all_invalid_depth_drops_detection():
    with pytest.raises(DetectionDropped):
        extract_five_points((0.0, 0.0, 10.0, 10.0), lambda u, v: None)


def test_degenerate_bbox_drops_detection():
    with pytest.raises(DetectionDropped):
        extract_five_points((50.0, 50.0, 50.0, 80.0), lambda u, v: 2.0)


def test_body_only_gives_single_detection_at_face_center():
    mock = overhead_mockup(panels=())
    dets = render_detections(mock, CAM, 0.0)
    assert len(dets) == 1
    det = dets[0]
    assert det.cls is DetectionClass.BODY
    # The top face (z = +0.3) faces the overhead camera at depth 2.2 - 0.3
    p1_cam = det.points[0]
    assert abs(p1_cam.z - 1.9) < 1e-9
    p1_apf = CAM.transform(p1_cam)
    assert (p1_apf - Vec3(0.0, 0.0, 0.3)).norm() < 1e-9


def test_nominal_geometry_gives_three_detections_with_panel_centers():
    dets = render_detections(overhead_mockup(), CAM, 0.0)
    classes = sorted(d.cls.value for d in dets)
    assert classes == ["body", "solar_panel", "solar_panel"]
    panel_centers = {(0.0, 0.55, 0.0), (0.0, -0.55, 0.0)}
    for det in dets:
        if det.cls is not DetectionClass.SOLAR_PANEL:
            continue
        p1 = CAM.transform(det.points[0])
        match = min(panel_centers, key=lambda c: (p1 - Vec3(*c)).norm())
        assert (p1 - Vec3(*match)).norm() < 1e-9


def test_cadence_gate_holds_detections_for_half_second():
    sensor = VisionSensor(overhead_mockup(), CAM, period=0.5)
    first = sensor.sample(0.0)
    assert sensor.sample(0.25) is first  # same object: gate closed
    assert sensor.poll_new(0.25) is None
    assert sensor.poll_new(0.49) is None
    fresh = sensor.poll_new(0.5)
    assert fresh is not None and len(fresh) == len(first)


def test_target_beyond_range_gate_is_invisible():
    far_cam = Pose(Vec3(0.0, 0.0, 6.0), (1.0, 0.0, 0.0, 0.0))
    assert render_detections(overhead_mockup(), far_cam, 0.0, max_range=5.0) == []


def test_target_behind_camera_is_invisible():
    # identity orientation: optical axis along APF +z, target below at -z
    behind_cam = Pose(Vec3(0.0, 0.0, 2.2))
    assert render_detections(overhead_mockup(), behind_cam, 0.0) == []


def test_noise_is_deterministic_per_seed():
    noise = NoiseSpec(sigma=0.01)
    a = render_detections(overhead_mockup(), CAM, 0.0, noise, rng=np.random.default_rng(42))
    b = render_detections(overhead_mockup(), CAM, 0.0, noise, rng=np.random.default_rng(42))
    assert a == b
    c = render_detections(overhead_mockup(), CAM, 0.0, noise, rng=np.random.default_rng(43))
    assert a != c


def test_noise_requires_explicit_rng():
    with pytest.raises(ValueError):
        render_detections(overhead_mockup(), CAM, 0.0, NoiseSpec(sigma=0.01))


def test_depth_multiplier_scales_only_camera_z_spread():
    rng_narrow = np.random.default_rng(6)
    rng_wide = np.random.default_rng(6)
    narrow = render_detections(
        overhead_mockup(panels=()), CAM, 0.0, NoiseSpec(sigma=0.002), rng=rng_narrow
    )
    wide = render_detections(
        overhead_mockup(panels=()),
        CAM,
        0.0,
        NoiseSpec(sigma=0.002, depth_multiplier=50.0),
        rng=rng_wide,
    )
    clean = render_detections(overhead_mockup(panels=()), CAM, 0.0)
    nz = max(abs(p.z - q.z) for p, q in zip(narrow[0].points, clean[0].points))
    wz = max(abs(p.z - q.z) for p, q in zip(wide[0].points, clean[0].points))
    assert wz > 10.0 * nz


def test_yaw_spin_rotates_mockup_pose():
    mock = overhead_mockup(yaw_rate_dps=90.0)
    pose_1s = mock.pose_at(1.0)  # 90 degrees about z
    rotated = pose_1s.transform(Vec3(1.0, 0.0, 0.0))
    assert (rotated - Vec3(0.0, 1.0, 0.0)).norm() < 1e-9
    # zero rates: pose is constant
    static = overhead_mockup()
    assert static.pose_at(123.0).orientation == static.pose.orientation


# --------------------------------------------------------------------------
# node reconstruction
# --------------------------------------------------------------------------


def single_body_detection():
    dets = render_detections(overhead_mockup(panels=()), CAM, 0.0)
    assert len(dets) == 1
    return dets


def test_rebuild_counts_mirrors_and_dock_nodes():
    cfg = RebuildConfig()
    nodes = rebuild_nodes(single_body_detection(), CAM, cfg)
    # 5 body points + 5 mirrors + 2 dock nodes
    assert len(nodes.nodes) == 12
    assert len(nodes.primary_dock_nodes) == 2
    assert all(n.kind is NodeKind.ATTRACTIVE for n in nodes.nodes)


def test_rebuild_centroid_and_dock_nodes_on_x_axis():
    cfg = RebuildConfig(dock_offset=0.3, safety_scale=1.75)
    nodes = rebuild_nodes(single_body_detection(), CAM, cfg)
    # centroid: mean of top-face points, which projects to the face center
    assert (nodes.centroid - Vec3(0.0, 0.0, 0.3)).norm() < 1e-9
    d1, d2 = nodes.dock_positions()
    want = 0.3 * 1.75
    assert (d1 - (nodes.centroid + Vec3(want, 0.0, 0.0))).norm() < 1e-9
    assert (d2 - (nodes.centroid - Vec3(want, 0.0, 0.0))).norm() < 1e-9


def test_rebuild_inflates_every_offset_by_safety_scale():
    cfg = RebuildConfig(safety_scale=1.75)
    dets = render_detections(overhead_mockup(), CAM, 0.0)
    nodes = rebuild_nodes(dets, CAM, cfg)
    raw_offsets = []
    for det in dets:
        for p in det.points:
            raw_offsets.append((CAM.transform(p) - nodes.centroid).norm())
    inflated = sorted(n for n in raw_offsets for _ in (0, 1))  # each point + its mirror
    got = sorted(
        (node.position - nodes.centroid).norm()
        for i, node in enumerate(nodes.nodes)
        if i not in nodes.primary_dock_nodes
    )
    assert len(got) == len(inflated)
    for g, r in zip(got, inflated):
        assert abs(g - 1.75 * r) < 1e-9


def test_rebuild_is_point_symmetric_about_centroid():
    dets = render_detections(overhead_mockup(), CAM, 0.0)
    nodes = rebuild_nodes(dets, CAM, RebuildConfig())
    c = nodes.centroid
    positions = [n.position for n in nodes.nodes]
    for p in positions:
        mirror = c * 2.0 - p
        assert min((mirror - q).norm() for q in positions) < 1e-9


def test_panel_offsets_mirror_and_scale():
    # hand-built detections: body at centroid, one panel offset d along y
    mk = lambda cls, pos: Detection(
        cls, (0.0, 0.0, 10.0, 10.0), tuple(CAM.inverse_transform(pos) for _ in range(5))
    )
    d = Vec3(0.0, 0.8, 0.0)
    dets = [mk(DetectionClass.BODY, Vec3(0.0, 0.0, 0.0)), mk(DetectionClass.SOLAR_PANEL, d)]
    nodes = rebuild_nodes(dets, CAM, RebuildConfig(safety_scale=1.75, dock_offset=0.3))
    rep = [n.position for n in nodes.nodes if n.kind is NodeKind.REPULSIVE]
    assert len(rep) == 10  # 5 panel points + 5 mirrors
    offsets = sorted(round(p.y, 9) for p in rep)
    assert offsets[0] == pytest.approx(-1.4, abs=1e-9)  # -1.75 * 0.8
    assert offsets[-1] == pytest.approx(1.4, abs=1e-9)  # +1.75 * 0.8


def test_panel_nodes_repulsive_body_nodes_attractive():
    dets = render_detections(overhead_mockup(), CAM, 0.0)
    nodes = rebuild_nodes(dets, CAM, RebuildConfig())
    kinds = {NodeKind.ATTRACTIVE: 0, NodeKind.REPULSIVE: 0}
    for n in nodes.nodes:
        kinds[n.kind] += 1
        if n.kind is NodeKind.ATTRACTIVE:
            assert n.gain > 0.0
        else:
            assert n.gain < 0.0
    # (5 body + 5 mirrors + 2 dock) attractive, (2 panels x 5 x 2) repulsive
    assert kinds[NodeKind.ATTRACTIVE] == 12
    assert kinds[NodeKind.REPULSIVE] == 20


def test_rebuild_without_body_detection_fails():
    dets = [
        Detection(
            DetectionClass.SOLAR_PANEL,
            (0.0, 0.0, 5.0, 5.0),
            tuple(Vec3(0.0, 0.0, 2.0) for _ in range(5)),
        )
    ]
    with pytest.raises(NodeRebuildFailed):
        rebuild_nodes(dets, CAM, RebuildConfig())


def test_rebuild_accepts_wire_shaped_detections():
    class WireEntry:
        def __init__(self, cls, points):
            self.cls = cls
            self.points = points

    dets = [WireEntry("body", tuple((0.0, 0.0, 1.9) for _ in range(5)))]
    nodes = rebuild_nodes(dets, CAM, RebuildConfig())
    assert len(nodes.nodes) == 12
    assert (nodes.centroid - Vec3(0.0, 0.0, 0.3)).norm() < 1e-9


def test_rebuild_deterministic_bit_for_bit():
    rng = lambda: np.random.default_rng(77)
    noise = NoiseSpec(sigma=0.004)
    a = rebuild_nodes(
        render_detections(overhead_mockup(), CAM, 0.0, noise, rng=rng()), CAM, RebuildConfig()
    )
    b = rebuild_nodes(
        render_detections(overhead_mockup(), CAM, 0.0, noise, rng=rng()), CAM, RebuildConfig()
    )
    assert [n.position for n in a.nodes] == [n.position for n in b.nodes]


def test_spun_target_keeps_dock_nodes_on_x_axis():
    # Dock nodes are placed along the guidance x-axis regardless of target yaw.
    mock = overhead_mockup(yaw_rate_dps=5.0)
    dets = render_detections(mock, CAM, 10.0)
    nodes = rebuild_nodes(dets, CAM, RebuildConfig())
    d1, d2 = nodes.dock_positions()
    axis = d1 - d2
    assert abs(axis.y) < 1e-9 and abs(axis.z) < 1e-9
    assert axis.x > 0.5
