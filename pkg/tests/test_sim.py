import math

import numpy as np
import pytest

from nightvpr import harness, sim
from nightvpr.imgproc import shift_columns
from conftest import GOLDEN

GOLDEN_TRAJ = GOLDEN / "trajectory_model2_seed99.csv"


def test_world_determinism_and_range():
    pts = np.random.default_rng(0).uniform(-20, 20, size=(1000, 2))
    a = sim.generate_world(sim.WorldSpec(seed=3)).sample(pts[:, 0], pts[:, 1])
    b = sim.generate_world(sim.WorldSpec(seed=3)).sample(pts[:, 0], pts[:, 1])
    c = sim.generate_world(sim.WorldSpec(seed=4)).sample(pts[:, 0], pts[:, 1])
    assert a.tobytes() == b.tobytes()
    assert np.mean(a != c) > 0.99
    assert a.min() >= 0 and a.max() <= 255


def test_world_spec_validation():
    with pytest.raises(ValueError):
        sim.WorldSpec(extent=(0, 5))


def test_render_deterministic_and_rotation_shift():
    world = sim.generate_world(sim.WorldSpec(seed=1))
    pose = sim.Pose2D(3.0, 2.0, 0.0)
    a = sim.render_panorama(world, pose, 48, 24)
    assert a.tobytes() == sim.render_panorama(world, pose, 48, 24).tobytes()
    for steps in (1, 5, 47):
        rotated = sim.render_panorama(world, sim.Pose2D(3.0, 2.0, steps * 2 * math.pi / 48), 48, 24)
        # column j of the rotated view looks where column j + steps looked before
        np.testing.assert_array_equal(rotated, shift_columns(a, -steps))


def test_render_distant_poses_differ():
    world = sim.generate_world(sim.WorldSpec(seed=1, extent=(20.0, 20.0)))
    a = sim.render_panorama(world, sim.Pose2D(2.0, 2.0), 96, 48)
    b = sim.render_panorama(world, sim.Pose2D(8.0, 10.0), 96, 48)
    assert np.hypot(6.0, 8.0) == 10.0
    assert np.abs(a.astype(float) - b.astype(float)).mean() > 10


def test_render_outside_extent_raises():
    world = sim.generate_world(sim.WorldSpec())
    with pytest.raises(ValueError):
        sim.render_panorama(world, sim.Pose2D(8.0, 1.0), 48, 24)


def test_night_transform_examples(rng):
    img = rng.integers(0, 256, (24, 48), dtype=np.uint8)
    np.testing.assert_array_equal(sim.apply_night_transform(img, sim.IDENTITY_NIGHT, 5), img)
    dark = sim.apply_night_transform(np.full((2, 2), 200, dtype=np.uint8), sim.NightTransform(gain=0.2), 0)
    assert np.all(dark == 40)
    t = sim.NightTransform(gain=0.3, gamma=1.5, noise_sigma=5, patch_count=3, patch_radius=4, patch_strength=30)
    assert sim.apply_night_transform(img, t, 9).tobytes() == sim.apply_night_transform(img, t, 9).tobytes()
    assert sim.apply_night_transform(img, t, 9).tobytes() != sim.apply_night_transform(img, t, 10).tobytes()
    with pytest.raises(ValueError):
        sim.NightTransform(gain=1.5)


def test_noise_table():
    assert sim.NOISE_MODELS[0] == sim.NoiseModel(0, 0)
    assert sim.NOISE_MODELS[1] == sim.NoiseModel(0.1, 0.02)
    assert sim.NOISE_MODELS[2] == sim.NoiseModel(0.25, 0.05)
    assert sim.NOISE_MODELS[3] == sim.NoiseModel(0.5, 0.1)
    with pytest.raises(ValueError):
        sim.NoiseModel(-0.1, 0)


def test_model_zero_leaves_delta_unchanged():
    rng = np.random.default_rng(0)
    assert sim.apply_noise((0.25, 0.1), sim.NOISE_MODELS[0], rng) == (0.25, 0.1)


@pytest.mark.parametrize("model_id", [1, 3])
def test_noise_statistics(model_id):
    model = sim.NOISE_MODELS[model_id]
    rng = np.random.default_rng(model_id)
    draws = np.array([sim.apply_noise((0.0, 0.0), model, rng) for _ in range(100_000)])
    assert draws[:, 0].std(ddof=1) == pytest.approx(model.distance_sigma, rel=0.02)
    assert draws[:, 1].std(ddof=1) == pytest.approx(model.heading_sigma, rel=0.02)


def test_integrate_model_zero_and_straight_walk():
    steps = [(0.25, 0.0)] * 10
    traj = sim.integrate_trajectory(sim.Pose2D(1.0, 1.0, 0.0), steps, sim.NOISE_MODELS[0], np.random.default_rng(0))
    assert traj.deltas == traj.true_deltas
    for i, p in enumerate(traj.poses):
        assert p.x == pytest.approx(1.0 + 0.25 * i) and p.y == pytest.approx(1.0)


def test_true_poses_independent_of_noise():
    steps = sim.wander_steps(sim.Pose2D(3, 2, 0.5), 30, 0.25, (0.5, 0.5, 6.5, 4.5), seed=4)
    ref = sim.integrate_trajectory(sim.Pose2D(3, 2, 0.5), steps, sim.NOISE_MODELS[0], np.random.default_rng(1))
    for m in (1, 2, 3):
        t = sim.integrate_trajectory(sim.Pose2D(3, 2, 0.5), steps, sim.NOISE_MODELS[m], np.random.default_rng(1))
        assert t.poses == ref.poses
        assert t.deltas != ref.deltas


def _golden_trajectory():
    start = sim.Pose2D(2.0, 1.5, 0.3)
    steps = sim.wander_steps(start, 25, 0.25, (0.5, 0.5, 6.5, 4.5), seed=99)
    return sim.integrate_trajectory(start, steps, sim.NOISE_MODELS[2], np.random.default_rng(99))


def _trajectory_rows(traj):
    rows = ["x_m,y_m,theta_rad,dx_m,dy_m"]
    deltas = [None] + traj.deltas
    for p, d in zip(traj.poses, deltas):
        dx, dy = ("", "") if d is None else (repr(d.dx), repr(d.dy))
        rows.append(f"{p.x!r},{p.y!r},{p.theta!r},{dx},{dy}")
    return "\n".join(rows) + "\n"


def test_golden_trajectory_model2():
    assert _trajectory_rows(_golden_trajectory()) == GOLDEN_TRAJ.read_text()


def test_odometry_for_model_recovers_true_deltas():
    poses = sim.BenchmarkConfig().query_poses()
    deltas = sim.odometry_for_model(poses, sim.NOISE_MODELS[0], 1)
    for a, b, d in zip(poses[:-1], poses[1:], deltas):
        assert d.dx == pytest.approx(b.x - a.x, abs=1e-12)
        assert d.dy == pytest.approx(b.y - a.y, abs=1e-12)


def test_benchmark_shape():
    cfg = sim.BenchmarkConfig(ref_nx=6, ref_ny=4, n_queries=12)
    ds = sim.build_benchmark(cfg)
    assert len(ds.ref_images) == 24 and len(ds.query_images) == 12 and len(ds.odometry) == 11
    xs = [p.x for p in ds.ref_poses]
    ys = [p.y for p in ds.ref_poses]
    assert (max(xs) - min(xs), max(ys) - min(ys)) == (7.0, 5.0)
    for p in ds.query_poses:
        assert cfg.margin - 1e-9 <= p.x <= 7 - cfg.margin + 1e-9
        assert cfg.margin - 1e-9 <= p.y <= 5 - cfg.margin + 1e-9


def test_benchmark_requires_non_collinear():
    world = sim.generate_world(sim.WorldSpec())
    poses = [sim.Pose2D(float(i), 1.0) for i in range(4)]
    with pytest.raises(ValueError):
        sim.make_benchmark(world, poses, poses, sim.IDENTITY_NIGHT, sim.NOISE_MODELS[0], 0)


def test_parallel_rendering_matches_serial():
    cfg = sim.BenchmarkConfig(n_queries=8)
    a = sim.build_benchmark(cfg, workers=1)
    b = sim.build_benchmark(cfg, workers=4)
    for x, y in zip(a.query_images + a.ref_images, b.query_images + b.ref_images):
        assert x.tobytes() == y.tobytes()


def _dir_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_benchmark_directories_byte_identical(tmp_path):
    cfg = sim.BenchmarkConfig(n_queries=10)
    harness.save_dataset(sim.build_benchmark(cfg), tmp_path / "a")
    harness.save_dataset(sim.build_benchmark(cfg), tmp_path / "b")
    a, b = _dir_bytes(tmp_path / "a"), _dir_bytes(tmp_path / "b")
    assert a.keys() == b.keys() and a == b


def test_benchmark_config_from_mapping():
    cfg = sim.BenchmarkConfig.from_mapping({"seed": "5", "noise_model": "3", "extent_x": "9", "night_gain": "0.5",
                                            "range_far": "6"})
    assert cfg.seed == 5 and cfg.noise_model == 3 and cfg.extent == (9.0, 5.0) and cfg.range_far == 6.0
    assert cfg.night.gain == 0.5 and cfg.night.gamma == sim.BenchmarkConfig().night.gamma
    assert sim.BenchmarkConfig.from_mapping({"night": "off"}).night == sim.IDENTITY_NIGHT
