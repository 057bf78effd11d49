import json

import numpy as np
import pytest

from rfstrack.exceptions import ConfigurationError
from rfstrack.gaussian_models import NoClutter, position_sensor, constant_velocity
from rfstrack.simulation import (
    BENCHMARK_TRUTH_SEED,
    GaussianBirth,
    MultiBernoulliBirth,
    ScenarioConfig,
    dataset_from_dict,
    dataset_to_dict,
    isolated_scan,
    load_dataset,
    preset,
    sample_ground_truth,
    sample_measurements,
    save_dataset,
    simulate,
)


def _scenario(pd=1.0, clutter=None, steps=20, ps=0.9, weights=(2.0, 0.5)):
    birth = GaussianBirth(weights, [[500.0, 0.0, 500.0, 0.0]], [np.diag([100.0, 1.0, 100.0, 1.0])])
    sensor = position_sensor(np.eye(2), pd, clutter or NoClutter())
    return ScenarioConfig("test", steps, ((0, 1000), (0, 1000)), constant_velocity(ps=ps), sensor, birth)


def test_benchmark_preset_values():
    cfg = preset("paper_sim")
    assert cfg.steps == 120 and cfg.sensor.clutter_rate == 10.0
    assert cfg.birth.expected_births(1) == 10.0 and cfg.birth.expected_births(2) == 0.1
    assert cfg.motion.ps == 0.995 and cfg.sensor.pd == 0.9
    assert preset("paper_sim", clutter_rate=30.0).sensor.clutter_rate == 30.0


def test_benchmark_truth_has_22_trajectories():
    truth = simulate(preset("paper_sim"), measurement_seed=5)
    assert len(truth.trajectories) == 22 and len(truth.measurements) == 120
    assert BENCHMARK_TRUTH_SEED == preset("paper_sim").seed


def test_fov_preset_clutter_free_at_origin():
    cfg = preset("fov_case3")
    assert cfg.sensor.clutter_intensity(np.zeros(2))[0] == 0.0
    assert cfg.sensor.detection_probability(np.array([[0.0, 4.9], [0.0, 5.1]])).tolist() == [1.0, 0.0]


def test_unknown_preset_lists_names():
    with pytest.raises(ConfigurationError, match="paper_sim"):
        preset("nope")


def test_same_seed_same_data():
    cfg = preset("paper_sim")
    a, b = simulate(cfg, 3), simulate(cfg, 3)
    assert all(np.array_equal(x, y) for x, y in zip(a.measurements, b.measurements))
    assert not all(np.array_equal(x, y) for x, y in zip(a.measurements, simulate(cfg, 4).measurements))


def test_no_detection_no_clutter_gives_empty_scans():
    truth = simulate(_scenario(pd=0.0), 1)
    assert all(len(Z) == 0 for Z in truth.measurements)


def test_perfect_detection_one_measurement_per_target():
    cfg = _scenario(pd=1.0)
    truth = simulate(cfg, 1, truth_seed=3)
    for k, Z in enumerate(truth.measurements, start=1):
        assert len(Z) == len(truth.states_at(k))
    assert truth.cardinality().tolist() == [len(truth.states_at(k)) for k in range(1, cfg.steps + 1)]


def test_clutter_counts_are_poisson():
    cfg = preset("paper_sim")
    cfg = ScenarioConfig(
        "clutter_only", 1, cfg.area, cfg.motion, position_sensor(np.eye(2), 0.0, cfg.sensor.clutter), cfg.birth
    )
    rng = np.random.default_rng(0)
    counts = np.array([len(cfg.sensor.clutter.sample(rng)) for _ in range(4000)])
    assert abs(counts.mean() - 10.0) < 4 * np.sqrt(10.0 / counts.size)
    assert abs(counts.var() - 10.0) < 1.0


def test_expected_target_count_follows_birth_death_recursion():
    cfg = _scenario(steps=8, ps=0.9, weights=(2.0, 0.5))
    counts = np.array([sample_ground_truth(cfg, np.random.default_rng(s)).cardinality() for s in range(1000)])
    expected = np.zeros(cfg.steps)
    for k in range(1, cfg.steps + 1):
        expected[k - 1] = sum(0.9 ** (k - j) * cfg.birth.expected_births(j) for j in range(1, k + 1))
    se = counts.std(axis=0, ddof=1) / np.sqrt(len(counts))
    assert np.all(np.abs(counts.mean(axis=0) - expected) < 4 * se)


def test_targets_are_not_killed_at_the_boundary():
    birth = GaussianBirth((1.0, 0.0), [[995.0, 50.0, 500.0, 0.0]], [np.diag([1e-6, 1e-6, 1e-6, 1e-6])])
    cfg = ScenarioConfig(
        "exit", 3, ((0, 1000), (0, 1000)), constant_velocity(ps=1.0),
        position_sensor(np.eye(2), 1.0, NoClutter()), birth,
    )
    for seed in range(20):
        truth = sample_ground_truth(cfg, np.random.default_rng(seed))
        if truth.trajectories:
            assert truth.trajectories[0].death_step == 3
            assert truth.trajectories[0].state(3)[0] > 1000
            return
    pytest.fail("no target born")


def test_multi_bernoulli_birth_sampling():
    mb = MultiBernoulliBirth(((1.0, np.zeros(4), np.eye(4)), (0.0, np.ones(4), np.eye(4))))
    assert mb.expected_births(1) == 1.0 and len(mb.sample(1, np.random.default_rng(0))) == 1
    assert len(mb.intensity(1)) == 2


def test_origins_tag_clutter():
    cfg = preset("paper_sim")
    truth = simulate(cfg, 2)
    for Z, o in zip(truth.measurements, truth.origins):
        assert len(Z) == len(o)
    assert any((o == -1).any() for o in truth.origins)


def test_isolated_scan_layout():
    Z = isolated_scan(50)
    assert Z.shape == (50, 2) and Z[0].tolist() == [0.0, 0.0]
    assert np.all(np.linalg.norm(Z[1:], axis=1) > 200.0)


def test_dataset_round_trip(tmp_path):
    truth = simulate(preset("paper_sim"), 9)
    path = tmp_path / "d.json"
    save_dataset(path, truth, "paper_sim", 10.0, 9, 1)
    back, doc = load_dataset(path)
    assert doc["scenario"] == "paper_sim" and doc["seed"] == 9
    assert all(np.array_equal(a, b) for a, b in zip(truth.measurements, back.measurements))
    assert all(np.array_equal(a.states, b.states) for a, b in zip(truth.trajectories, back.trajectories))
    doc = json.loads(path.read_text())
    doc["format"] = "other"
    with pytest.raises(ConfigurationError):
        dataset_from_dict(doc)
    assert dataset_to_dict(back, "paper_sim", 10.0, 9, 1)["measurements"] == json.loads(path.read_text())["measurements"]
