"""Scenario schema tests: YAML parsing, strict key checking, validation errors,
named placement expansion, and the bundled scenario set."""

import pytest
import yaml

from swarmdock.frames import Vec3
from swarmdock.scenario import (
    Arena,
    NoScenarios,
    PLACEMENTS,
    Scenario,
    ScenarioError,
    bundled_scenario_dir,
    expand_placement,
    load_scenario,
    load_scenario_dir,
    scenario_from_mapping,
)

MINIMAL = {
    "chasers": [
        {"id": "a", "position": [-1.5, 0.0, 0.5]},
        {"id": "b", "position": [-1.0, 0.5, 0.0]},
    ]
}


def make(overrides=None, **top):
    data = yaml.safe_load(yaml.safe_dump(MINIMAL))
    data.update(top)
    if overrides:
        data.update(overrides)
    return scenario_from_mapping(data, "t")


def test_minimal_mapping_uses_reference_defaults():
    sc = make()
    assert sc.name == "t"
    assert sc.apf.mu_attract == 0.1
    assert sc.apf.mu_repulse == -0.015
    assert sc.apf.r_switch == 2.0
    assert sc.apf.velocity_damping == 0.08
    assert sc.apf.mu_chaser == -2.5
    assert sc.vehicle.battery_limit == 420.0
    assert sc.camera_pose.position == Vec3(0.0, 0.0, 2.2)
    assert sc.target.body_half_extents == Vec3(0.3, 0.3, 0.3)
    assert len(sc.target.panels) == 2
    assert sc.rebuild.dock_offset == 0.3  # follows the body half extent
    assert sc.transport == "in_process"


def test_apf_overrides_flow_into_rebuild_gains():
    sc = make(apf={"mu_attract": 0.2, "mu_repulse": -0.05})
    assert sc.rebuild.mu_attract == 0.2
    assert sc.rebuild.mu_repulse == -0.05


def test_unknown_top_level_key_rejected():
    with pytest.raises(ScenarioError, match="unknown key"):
        make(bogus=1)


def test_unknown_nested_key_rejected():
    with pytest.raises(ScenarioError, match="unknown key"):
        make(target={"color": "red"})
    with pytest.raises(ScenarioError, match="unknown key"):
        make(apf={"mu_typo": 1.0})


def test_duplicate_chaser_ids_rejected():
    with pytest.raises(ScenarioError, match="duplicate"):
        make(chasers=[{"id": "a", "position": [0, 0, 0]}, {"id": "a", "position": [1, 0, 0]}])


def test_chaser_outside_arena_rejected():
    with pytest.raises(ScenarioError, match="outside the arena"):
        make(chasers=[{"id": "a", "position": [5.0, 0.0, 0.0]}])


def test_bad_transport_rejected():
    with pytest.raises(ScenarioError, match="transport"):
        make(transport="carrier_pigeon")


def test_loss_rate_bounds():
    assert make(loss_rate=0.0).loss_rate == 0.0
    assert make(loss_rate=0.5).loss_rate == 0.5
    with pytest.raises(ScenarioError):
        make(loss_rate=1.0)
    with pytest.raises(ScenarioError):
        make(loss_rate=-0.1)


def test_nonpositive_duration_rejected():
    with pytest.raises(ScenarioError):
        make(max_duration=0.0)


def test_empty_chaser_list_rejected():
    with pytest.raises(ScenarioError):
        make(chasers=[])


def test_bad_vector_shape_rejected():
    with pytest.raises(ScenarioError, match="3-element"):
        make(chasers=[{"id": "a", "position": [1.0, 2.0]}])


def test_invalid_gain_signs_rejected():
    with pytest.raises(ScenarioError):
        make(apf={"mu_attract": -1.0})
    with pytest.raises(ScenarioError):
        make(apf={"mu_repulse": 0.5})


def test_fault_block_parses():
    sc = make(
        chasers=[
            {"id": "a", "position": [-1, 0, 0]},
            {
                "id": "b",
                "position": [-1, 1, 0],
                "faults": {
                    "imu_drift_sigma_cm": 35.0,
                    "spoof": {
                        "trigger_center": [0.5, 0.0, 0.0],
                        "trigger_radius": 0.4,
                        "reported_position": [1.5, 1.5, 0.5],
                    },
                    "depth_noise_multiplier": 50.0,
                },
            },
        ]
    )
    fa, fb = sc.chasers[0].faults, sc.chasers[1].faults
    assert not fa.any_active
    assert fb.imu_drift_sigma_cm == 35.0
    assert fb.spoof.trigger_radius == 0.4
    assert sc.depth_noise_multiplier == 50.0


def test_named_placement_fills_missing_positions():
    sc = make(placement="r_bar", chasers=[{"id": "a"}, {"id": "b"}, {"id": "c"}])
    got = [c.position.as_tuple() for c in sc.chasers]
    assert got == [p for p in PLACEMENTS["r_bar"]]
    # explicit positions win over the placement
    sc2 = make(placement="r_bar", chasers=[{"id": "a", "position": [-1, 0, 0]}, {"id": "b"}])
    assert sc2.chasers[0].position == Vec3(-1, 0, 0)
    assert sc2.chasers[1].position == Vec3(*PLACEMENTS["r_bar"][1])


def test_every_named_placement_expands_deterministically():
    for name, table in PLACEMENTS.items():
        a = expand_placement(name, 3)
        b = expand_placement(name, 3)
        assert a == b
        assert [p.as_tuple() for p in a] == list(table)
        # mutual separation respects the arena floor of 0.15 m
        for i in range(3):
            for j in range(i + 1, 3):
                assert (a[i] - a[j]).norm() > 0.15


def test_unknown_placement_rejected():
    with pytest.raises(ScenarioError, match="unknown placement"):
        expand_placement("diagonal", 3)
    with pytest.raises(ScenarioError, match="slots"):
        expand_placement("r_bar", 9)


def test_arena_validation():
    with pytest.raises(ScenarioError):
        Arena(lo=Vec3(1, 0, 0), hi=Vec3(-1, 1, 1))
    a = Arena()
    assert a.contains(Vec3(0, 0, 0))
    assert not a.contains(Vec3(0, 0, 3.0))
    assert a.floor_z == -1.2


def test_load_scenario_file_and_name_default(tmp_path):
    p = tmp_path / "my-test.yaml"
    p.write_text(yaml.safe_dump(MINIMAL), encoding="utf-8")
    sc = load_scenario(p)
    assert sc.name == "my-test"
    assert isinstance(sc, Scenario)


def test_load_rejects_missing_empty_and_invalid_files(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.yaml")
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(empty)
    bad = tmp_path / "bad.yaml"
    bad.write_text("{unclosed", encoding="utf-8")
    with pytest.raises(ScenarioError, match="invalid YAML"):
        load_scenario(bad)


def test_empty_scenario_dir_raises_no_scenarios(tmp_path):
    with pytest.raises(NoScenarios):
        load_scenario_dir(tmp_path)
    with pytest.raises(ScenarioError):
        load_scenario_dir(tmp_path / "absent")


def test_scenario_dir_sorted_by_file_name(tmp_path):
    for name in ("b.yaml", "a.yaml", "c.yaml"):
        (tmp_path / name).write_text(yaml.safe_dump(MINIMAL), encoding="utf-8")
    names = [sc.name for sc in load_scenario_dir(tmp_path)]
    assert names == ["a", "b", "c"]


def test_bundled_scenarios_load_and_cover_the_published_matrix():
    scenarios = load_scenario_dir(bundled_scenario_dir())
    assert len(scenarios) == 13
    assert all(len(sc.chasers) == 3 for sc in scenarios)
    yaws = {sc.target.yaw_rate_dps for sc in scenarios}
    assert yaws == {0.0, 1.0, 5.0}
    faulted = [sc for sc in scenarios if any(c.faults.any_active for c in sc.chasers)]
    assert len(faulted) == 4
    kinds = set()
    for sc in faulted:
        for c in sc.chasers:
            if c.faults.imu_drift_sigma_cm > 0:
                kinds.add("imu")
            if c.faults.spoof is not None:
                kinds.add("spoof")
            if c.faults.depth_noise_multiplier != 1.0:
                kinds.add("depth")
    assert kinds == {"imu", "spoof", "depth"}
