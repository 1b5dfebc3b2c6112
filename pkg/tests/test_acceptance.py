"""Exit criteria, one test each. Run ``pytest tests/test_acceptance.py`` to get a
PASS/FAIL line per criterion in the terminal summary."""

import time

import numpy as np
import pytest

from nightvpr import harness, sim
from nightvpr.cli import main
from nightvpr.heatmap import MapNode, ReferenceMap, build_grid, interpolate_heatmap
from nightvpr.imgproc import PreprocessConfig, preprocess, shift_columns
from nightvpr.matcher import ComparisonCounter, comparison_count, difference_row, min_score, rotation_scores
from nightvpr.harness import ExperimentConfig, distance_errors, run_experiment
from oracles import barycentric_bruteforce, delaunay_bruteforce, quartiles_bruteforce, sad_bruteforce

TREND_TOL = 0.10


@pytest.fixture
def criterion(record_property):
    def mark(name, detail=""):
        record_property("criterion", name)
        record_property("detail", detail)
    return mark


def medians(ref, qs, **kw):
    return distance_errors(run_experiment(ref, qs, ExperimentConfig(**kw))).median


def test_c01_comparison_count(criterion):
    rng = np.random.default_rng(1)
    refs = [rng.standard_normal((24, 48)) for _ in range(50)]
    counter = ComparisonCounter()
    t0 = time.perf_counter()
    difference_row(rng.standard_normal((24, 48)), refs, counter=counter)
    elapsed = time.perf_counter() - t0
    criterion("C01 comparison count", f"{counter.count} comparisons in {elapsed * 1e3:.1f} ms")
    assert counter.count == comparison_count(50, 48, 24) == 2_764_800
    assert elapsed < 1.0


def test_c02_rotation_exactness(criterion):
    world = sim.generate_world(sim.WorldSpec(seed=5, extent=(7.0, 5.0)))
    rng = np.random.default_rng(2)
    t0 = time.perf_counter()
    failures = 0
    for _ in range(200):
        pose = sim.Pose2D(float(rng.uniform(0, 7)), float(rng.uniform(0, 5)), float(rng.uniform(0, 2 * np.pi)))
        R = preprocess(sim.render_panorama(world, pose, 96, 48))
        for s in range(48):
            if min_score(shift_columns(R, s), R) != (0.0, s):
                failures += 1
    elapsed = time.perf_counter() - t0
    criterion("C02 rotation exactness", f"200 panoramas x 48 shifts, {failures} failures, {elapsed:.2f} s")
    assert failures == 0
    assert elapsed < 10.0


def test_c03_illumination_invariance(criterion):
    rng = np.random.default_rng(3)
    world = sim.generate_world(sim.WorldSpec(seed=8))
    refs = [preprocess(sim.render_panorama(world, sim.Pose2D(x, y), 96, 48))
            for x, y in [(1, 1), (3, 2), (5, 4), (6, 1), (2, 4)]]
    cfg = PreprocessConfig()
    worst = 0.0
    for _ in range(100):
        # levels 4 apart in 0..100, so any gain >= 0.3 keeps them distinct after rounding
        img = (4 * rng.integers(0, 26, (48, 96))).astype(np.float64)
        base = difference_row(preprocess(img.astype(np.uint8), cfg), refs).min_scores
        for _ in range(20):
            a = float(rng.uniform(0.3, 2.5))
            b = float(rng.uniform(0.0, 255.0 - 100.0 * a))
            moved = np.floor(a * img + b + 0.5)
            assert moved.max() <= 255 and moved.min() >= 0
            row = difference_row(preprocess(moved.astype(np.uint8), cfg), refs).min_scores
            worst = max(worst, float(np.abs(row - base).max()))
    criterion("C03 illumination invariance", f"max |delta| over 100x20 pairs = {worst:.3g}")
    assert worst <= 1e-6


@pytest.fixture(scope="module")
def length_sweep(benchmark):
    ref, qs = benchmark
    t0 = time.perf_counter()
    out = {L: medians(ref, qs, window_length=L) for L in (1, 3, 7, 10)}
    return out, time.perf_counter() - t0


def test_c04_sequence_length_trend(criterion, length_sweep, benchmark_cfg):
    med, elapsed = length_sweep
    assert benchmark_cfg.noise_model == 1 and benchmark_cfg.night != sim.IDENTITY_NIGHT
    assert (benchmark_cfg.ref_nx, benchmark_cfg.ref_ny, benchmark_cfg.n_queries) == (6, 5, 40)
    lengths = sorted(med)
    steps_ok = all(med[b] <= med[a] * (1 + TREND_TOL) for a, b in zip(lengths, lengths[1:]))
    criterion("C04 sequence-length trend",
              "medians " + ", ".join(f"{L}:{med[L]:.3f}" for L in lengths) + f" m; {elapsed:.1f} s")
    assert steps_ok
    assert med[7] <= 0.7 * med[1]
    assert elapsed < 60.0


def test_c05_noise_model_trend(criterion, benchmark, benchmark_cfg):
    ref, qs = benchmark
    med = {}
    for m in range(4):
        odo = sim.odometry_for_model(qs.poses, sim.NOISE_MODELS[m], benchmark_cfg.seed)
        med[m] = distance_errors(run_experiment(ref, qs, ExperimentConfig(window_length=7), odometry=odo)).median
    criterion("C05 noise-model trend", "medians " + ", ".join(f"{m}:{v:.3f}" for m, v in med.items()) + " m")
    for a in range(3):
        assert med[a] <= med[a + 1] * (1 + TREND_TOL)


def test_c06_interpolation_helps(criterion, benchmark):
    ref, qs = benchmark
    positions = {n.position for n in ref.nodes}
    assert not any((p.x, p.y) in positions for p in qs.poses)  # all queries off-node
    on = medians(ref, qs, window_length=7, interpolation=True)
    off = medians(ref, qs, window_length=7, interpolation=False)
    criterion("C06 interpolation on vs off", f"median on {on:.3f} m, off {off:.3f} m")
    assert on <= off


def test_c07_oracle_equivalence(criterion):
    rng = np.random.default_rng(7)
    worst_sad = 0.0
    for _ in range(50):
        q, r = rng.standard_normal((2, 4, 6))
        fast = rotation_scores(q, r)
        for k in range(6):
            worst_sad = max(worst_sad, abs(fast[k] - sad_bruteforce(q.tolist(), r.tolist(), k)))

    pts = rng.uniform(0, 7, size=(15, 2)) * [1.0, 5.0 / 7.0]
    m = ReferenceMap([MapNode(i, tuple(p)) for i, p in enumerate(pts)])
    scores = rng.uniform(0, 2, size=15)
    spec = build_grid(m, 100, 100)
    hm = interpolate_heatmap(scores, m, spec).values.ravel()
    tris = delaunay_bruteforce(pts.tolist())
    worst_cell, inside = 0.0, 0
    for idx, p in enumerate(spec.cell_centers()):
        v = barycentric_bruteforce(tuple(p), pts.tolist(), scores.tolist(), tris)
        if v is not None:
            inside += 1
            worst_cell = max(worst_cell, abs(hm[idx] - v))

    quart_ok = True
    for n in (1, 2, 5, 40, 99):
        e = rng.exponential(size=n).tolist()
        s = distance_errors(e)
        quart_ok &= (s.min, s.q1, s.median, s.q3, s.max) == quartiles_bruteforce(e)
    criterion("C07 oracle equivalence",
              f"SAD max err {worst_sad:.2g}, {inside} hull cells max err {worst_cell:.2g}, quartiles exact={quart_ok}")
    assert worst_sad <= 1e-12
    assert inside > 1000 and worst_cell <= 1e-9
    assert quart_ok


def test_c08_noise_statistics(criterion):
    details = []
    for model_id, model in sim.NOISE_MODELS.items():
        rng = np.random.default_rng(100 + model_id)
        draws = np.array([sim.apply_noise((0.0, 0.0), model, rng) for _ in range(100_000)])
        sd, sh = draws.std(axis=0, ddof=1)
        details.append(f"{model_id}:({sd:.4f},{sh:.4f})")
        if model_id == 0:
            assert sd == 0.0 and sh == 0.0
        else:
            assert abs(sd / model.distance_sigma - 1) <= 0.02
            assert abs(sh / model.heading_sigma - 1) <= 0.02
    criterion("C08 noise-model statistics", " ".join(details))


def test_c09_self_localization(criterion, benchmark_cfg):
    world = sim.generate_world(benchmark_cfg.world_spec)
    poses = benchmark_cfg.reference_poses()
    ds = sim.make_benchmark(world, poses, poses, sim.IDENTITY_NIGHT, sim.NOISE_MODELS[0], 0)
    ref, qs = harness.processed_dataset(ds)
    results = run_experiment(ref, qs, ExperimentConfig(window_length=1))
    half_diag = build_grid(ref, 100, 100).half_diagonal
    correct = sum(r.node_id == r.query_id for r in results)
    worst = max(r.distance_error for r in results)
    criterion("C09 self-localization", f"{correct}/{len(results)} correct nodes, max error {worst:.4f} m "
                                       f"(half diagonal {half_diag:.4f} m)")
    assert correct == len(results)
    assert worst <= half_diag + 1e-12


def _tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_c10_determinism(criterion, tmp_path):
    trees = []
    for run in ("one", "two"):
        base = tmp_path / run
        assert main(["simulate", "--out", str(base / "data"), "--seed", "31"]) == 0
        assert main(["localize", str(base / "data"), "--out", str(base / "loc"), "--window", "7", "--heatmaps"]) == 0
        assert main(["evaluate", str(base / "data"), "--out", str(base / "eval"), "--lengths", "1,3,7,10"]) == 0
        trees.append(_tree_bytes(base))
    differing = [k for k in trees[0] if trees[0][k] != trees[1].get(k)]
    criterion("C10 determinism", f"{len(trees[0])} files compared, {len(differing)} differ")
    assert trees[0].keys() == trees[1].keys()
    assert not differing


def test_c11_throughput(criterion):
    rng = np.random.default_rng(11)
    refs = [rng.standard_normal((24, 48)) for _ in range(50)]
    q = rng.standard_normal((24, 48))
    difference_row(q, refs)
    times = []
    for _ in range(10):
        t0 = time.perf_counter()
        difference_row(q, refs)
        times.append(time.perf_counter() - t0)
    best = min(times)
    rate = comparison_count(50, 48, 24) / best
    criterion("C11 throughput", f"{best * 1e3:.2f} ms per query, {rate:.3g} comparisons/s (informational)")
    assert best < 0.1
