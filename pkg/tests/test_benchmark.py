"""Torque-density scoring and the comparison table."""

import json
from importlib import resources

import numpy as np
import pytest

from cyclobot.benchmark import (
    JointTorque,
    RobotSpec,
    compare,
    load_robot,
    performance_factor,
    performance_per_dollar,
    robot_from_dict,
)
from cyclobot.errors import ConfigError


def _spec(name="r", torques=(1.0,), height=1.0, mass=1.0, cost=1.0,
          gravity=9.81, **kw):
    joints = tuple(JointTorque(f"j{i}", t) for i, t in enumerate(torques))
    return RobotSpec(name=name, joints=joints, height=height, mass=mass,
                     cost=cost, gravity=gravity, **kw)


def test_unit_spec_scores_exactly_one():
    s = _spec(torques=(1.0,), height=1.0, mass=1.0, cost=1.0, gravity=1.0)
    assert performance_factor(s) == 1.0
    assert performance_per_dollar(s) == 1.0


def test_matches_brute_force_on_random_specs():
    rng = np.random.default_rng(70)
    for i in range(200):
        n = int(rng.integers(1, 40))
        torques = rng.uniform(0.0, 400.0, size=n)
        s = _spec(torques=tuple(float(t) for t in torques),
                  height=float(rng.uniform(0.3, 2.0)),
                  mass=float(rng.uniform(2.0, 120.0)),
                  cost=float(rng.uniform(100.0, 2e5)))
        total = 0.0
        for t in torques:
            total += float(t)
        mean_torque = total / n
        want = mean_torque / (s.height * s.mass * 9.81)
        got = performance_factor(s)
        assert abs(got - want) <= 1e-12 * abs(want)
        assert abs(performance_per_dollar(s) - want / s.cost) \
            <= 1e-12 * abs(want / s.cost)


def test_cost_only_scales_per_dollar_score():
    a = _spec(name="a", torques=(30.0, 40.0), height=0.8, mass=20.0,
              cost=1000.0)
    b = _spec(name="b", torques=(30.0, 40.0), height=0.8, mass=20.0,
              cost=2000.0)
    assert performance_factor(a) == performance_factor(b)
    assert performance_per_dollar(a) == pytest.approx(
        2.0 * performance_per_dollar(b), rel=1e-15)


def test_weight_mode_drops_gravity():
    s = _spec(torques=(10.0,), height=1.2, mass=15.0, cost=500.0)
    assert performance_factor(s, "m") == pytest.approx(
        performance_factor(s, "mg") * 9.81, rel=1e-15)
    with pytest.raises(ConfigError):
        performance_factor(s, "kg")


def test_compare_ranks_by_per_dollar_score():
    cheap = _spec(name="cheap", torques=(20.0,), cost=100.0,
                  height=0.7, mass=16.0)
    strong = _spec(name="strong", torques=(60.0,), cost=10000.0,
                   height=0.7, mass=16.0)
    rep = compare([strong, cheap])
    assert [r.name for r in rep.rows] == ["cheap", "strong"]
    assert [r.rank for r in rep.rows] == [1, 2]
    assert rep.rows[0].phi > rep.rows[1].phi
    assert rep.rows[1].p_hat > rep.rows[0].p_hat


def test_compare_breaks_ties_by_name():
    a = _spec(name="zeta")
    b = _spec(name="alpha")
    rep = compare([a, b])
    assert [r.name for r in rep.rows] == ["alpha", "zeta"]


def test_compare_rejects_bad_input():
    with pytest.raises(ConfigError):
        compare([])
    with pytest.raises(ConfigError, match="duplicate"):
        compare([_spec(name="x"), _spec(name="x")])


def test_report_serializations():
    rep = compare([_spec(name="a", torques=(12.0, 18.0), height=0.8,
                         mass=20.0, cost=4000.0, hardware_open=True)])
    csv_text = rep.to_csv()
    lines = csv_text.strip().splitlines()
    assert lines[0].startswith("rank,name,performance_factor")
    assert lines[1].startswith("1,a,")
    assert ",1," in lines[1]  # hardware_open serialized as 1
    text = rep.to_text()
    assert "one currency" in text
    assert "open" in text and "datasheet" in text


def test_spec_validation():
    with pytest.raises(ConfigError):
        _spec(torques=())
    with pytest.raises(ConfigError):
        _spec(height=0.0)
    with pytest.raises(ConfigError):
        _spec(mass=-1.0)
    with pytest.raises(ConfigError):
        _spec(cost=0.0)
    with pytest.raises(ConfigError):
        _spec(gravity=0.0)
    with pytest.raises(ConfigError):
        _spec(torque_source="guess")
    with pytest.raises(ConfigError):
        JointTorque("j", -1.0)


def test_robot_from_dict_round_trip_and_errors(tmp_path):
    cfg = {
        "schema_version": 1,
        "kind": "robot",
        "name": "testbot",
        "joints": [{"name": "hip", "peak_torque": 30.0}],
        "height": 0.9,
        "mass": 18.0,
        "cost": 5000.0,
        "torque_source": "estimate",
    }
    s = robot_from_dict(cfg)
    assert s.name == "testbot"
    assert s.torque_source == "estimate"
    assert s.gravity == 9.81
    with pytest.raises(ConfigError):
        robot_from_dict(dict(cfg, schema_version=2))
    with pytest.raises(ConfigError):
        robot_from_dict(dict(cfg, kind="actuator"))
    with pytest.raises(ConfigError, match="joints"):
        robot_from_dict(dict(cfg, joints=[{"peak_torque": 1.0}]))
    bad = dict(cfg)
    del bad["cost"]
    with pytest.raises(ConfigError):
        robot_from_dict(bad)
    path = tmp_path / "r.json"
    path.write_text(json.dumps(cfg))
    assert load_robot(path).name == "testbot"
    with pytest.raises(ConfigError, match="not found"):
        load_robot(tmp_path / "missing.json")


def test_packaged_robot_catalog_loads():
    root = resources.files("cyclobot").joinpath("configs/robots")
    specs = [robot_from_dict(json.loads(f.read_text()))
             for f in sorted(root.iterdir(), key=lambda f: f.name)]
    assert len(specs) >= 4
    rep = compare(specs)
    assert [r.rank for r in rep.rows] == list(range(1, len(specs) + 1))
    # The reference build is the hardware-open entry in the catalog.
    assert any(r.hardware_open and r.software_open for r in rep.rows)
