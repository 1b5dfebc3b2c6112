"""Command-line entry point: ``nightvpr <subcommand>``.

Settings come from a ``key=value`` file (``--config`` or ``$NIGHTVPR_CONFIG``);
command-line flags override file values.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import harness, plots, sim
from .config import dump_config, load_config
from .heatmap import load_heatmap
from .imgproc import PreprocessConfig, preprocess, read_image
from .matcher import (ComparisonCounter, comparison_count, difference_matrix, difference_row, invert_scores,
                      save_difference_matrix)


def _int_list(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _settings(args, **overrides):
    values = load_config(args.config)
    for key, val in overrides.items():
        if val is not None:
            values[key] = str(val)
    return values


def _dataset_paths(args):
    root = Path(args.dataset) if getattr(args, "dataset", None) else None
    ref = Path(args.ref) if getattr(args, "ref", None) else (root / "reference" / "manifest.csv" if root else None)
    qry = Path(args.query) if getattr(args, "query", None) else (root / "query" / "manifest.csv" if root else None)
    if ref is None or qry is None:
        raise ValueError("give a dataset directory or both --ref and --query manifests")
    return ref, qry


def cmd_simulate(args):
    values = _settings(args, seed=args.seed, noise_model=args.noise_model, night=args.night,
                       n_queries=args.queries)
    cfg = sim.BenchmarkConfig.from_mapping(values)
    if cfg.noise_model not in sim.NOISE_MODELS:
        raise ValueError(f"unknown noise model {cfg.noise_model}")
    world = sim.generate_world(cfg.world_spec)
    ref_poses = cfg.reference_poses()
    query_poses = ref_poses if args.queries_at_refs else cfg.query_poses()
    ds = sim.make_benchmark(world, ref_poses, query_poses, cfg.night, sim.NOISE_MODELS[cfg.noise_model], cfg.seed,
                            width=cfg.render_width, height=cfg.render_height,
                            ranges=sim.default_ranges(cfg.render_height, cfg.range_near, cfg.range_far),
                            workers=int(values.get("workers", 1)))
    out = harness.save_dataset(ds, args.out)
    (out / "benchmark.cfg").write_text(dump_config(values))
    print(f"wrote {len(ds.ref_images)} reference and {len(ds.query_images)} query frames to {out}")


def cmd_preprocess(args):
    cfg = PreprocessConfig.from_mapping(_settings(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = harness.read_manifest(args.manifest)
    for e in entries:
        img = preprocess(read_image(e.image_path), cfg)
        np.savetxt(out / (e.image_path.stem + ".csv"), img, delimiter=",", fmt="%.17g")
    print(f"wrote {len(entries)} processed images to {out}")


def cmd_match(args):
    cfg = PreprocessConfig.from_mapping(_settings(args))
    ref_path, qry_path = _dataset_paths(args)
    ref_map = harness.load_reference_map(ref_path, cfg)
    queries = harness.load_query_set(qry_path, cfg)
    dm = difference_matrix(queries.images, ref_map, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rot = save_difference_matrix(dm, out)
    print(f"wrote {dm.shape[0]}x{dm.shape[1]} difference matrix to {out} (rotations: {rot})")


def _experiment_config(values):
    return harness.ExperimentConfig.from_mapping(values)


def cmd_localize(args):
    values = _settings(args, window_length=args.window,
                       interpolation=None if args.interpolation is None else args.interpolation)
    cfg = _experiment_config(values)
    ref_path, qry_path = _dataset_paths(args)
    ref_map = harness.load_reference_map(ref_path, cfg.preprocess)
    queries = harness.load_query_set(qry_path, cfg.preprocess, odometry=args.odometry)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hm_dir = out / "heatmaps" if args.heatmaps else None
    results = harness.run_experiment(ref_map, queries, cfg, heatmap_dir=hm_dir)
    harness.write_results(out / "results.csv", results)
    summary = harness.distance_errors(results)
    harness.write_summary(out / "summary.csv", {f"window_{cfg.window_length}": summary})
    harness.write_precision(out / "precision.csv", harness.precision_recall(results, float(values.get("tolerance", 3.0))))
    if args.heatmaps:
        _final_heatmap_figure(ref_map, queries, cfg, out / "heatmap_final.png", hm_dir, results[-1])
    print(f"{len(results)} queries, median error {summary.median:.3f} m -> {out / 'results.csv'}")


def _final_heatmap_figure(ref_map, queries, cfg, path, hm_dir, result):
    hm = load_heatmap(hm_dir / f"heatmap_{result.query_id:04d}.csv")
    row = difference_row(queries.images[result.query_id], [n.image for n in ref_map.nodes])
    plots.heatmap_figure(hm, ref_map, path, node_scores=invert_scores(row), truth=result.ground_truth,
                         estimate=result.estimate, matched=ref_map.node_by_id(result.node_id).position)


def cmd_evaluate(args):
    values = _settings(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tol = float(values.get("tolerance", 3.0))
    if args.results:
        results = harness.read_results(args.results)
        harness.write_summary(out / "summary.csv", {Path(args.results).stem: harness.distance_errors(results)})
        harness.write_precision(out / "precision.csv", harness.precision_recall(results, tol))
        print(f"summarized {len(results)} results -> {out}")
        return

    base = _experiment_config(values)
    ref_path, qry_path = _dataset_paths(args)
    ref_map = harness.load_reference_map(ref_path, base.preprocess)
    queries = harness.load_query_set(qry_path, base.preprocess)
    lengths = _int_list(args.lengths or values.get("lengths", "1,2,3,4,5,6,7,8,9,10"))
    models = _int_list(args.noise_models or values.get("noise_models", "0,1,2,3"))
    eval_window = int(args.window or values.get("eval_window", 7))
    seed = int(values.get("seed", sim.BenchmarkConfig().seed))

    def run(odometry=None, **kw):
        cfg = harness.ExperimentConfig(**{**base.__dict__, **kw})
        return harness.run_experiment(ref_map, queries, cfg, odometry=odometry)

    by_length = {L: run(window_length=L) for L in lengths}
    by_model = {m: run(sim.odometry_for_model(queries.poses, sim.NOISE_MODELS[m], seed), window_length=eval_window)
                for m in models}
    interp = {"on": run(window_length=eval_window, interpolation=True),
              "off": run(window_length=eval_window, interpolation=False)}

    _write_long(out / "error_vs_sequence_length.csv", "window_length", by_length)
    _write_long(out / "error_vs_noise_model.csv", "noise_model", by_model)
    _write_long(out / "error_vs_interpolation.csv", "interpolation", interp)
    harness.write_summary(out / "summary_vs_sequence_length.csv",
                          {L: harness.distance_errors(r) for L, r in by_length.items()}, key="window_length")
    harness.write_summary(out / "summary_vs_noise_model.csv",
                          {m: harness.distance_errors(r) for m, r in by_model.items()}, key="noise_model")
    harness.write_summary(out / "summary_vs_interpolation.csv",
                          {k: harness.distance_errors(r) for k, r in interp.items()}, key="interpolation")
    harness.write_precision(out / "precision.csv", harness.precision_recall(interp["on"], tol))

    def errs(d):
        return {k: [r.distance_error for r in v] for k, v in d.items()}

    plots.error_boxplot(errs(by_length), out / "error_vs_sequence_length.png", "sequence length (frames)")
    plots.error_boxplot(errs(by_model), out / "error_vs_noise_model.png", f"noise model ({eval_window}-frame sequence)")
    plots.error_boxplot(errs(interp), out / "error_vs_interpolation.png", f"interpolation ({eval_window}-frame sequence)")
    medians = ", ".join(f"{L}:{harness.distance_errors(r).median:.3f}" for L, r in by_length.items())
    print(f"median error by sequence length: {medians}")


def _write_long(path, key, groups):
    with open(path, "w") as fh:
        fh.write(f"{key},query_id,error_m\n")
        for label, results in groups.items():
            for r in results:
                fh.write(f"{label},{r.query_id},{r.distance_error!r}\n")


def cmd_bench(args):
    rng = np.random.default_rng(args.seed)
    w, h, n = args.width, args.height, args.refs
    refs = [rng.standard_normal((h, w)) for _ in range(n)]
    query = rng.standard_normal((h, w))
    difference_row(query, refs)  # warm-up
    counter = ComparisonCounter()
    times = []
    for _ in range(args.repeats):
        counter.reset()
        t0 = time.perf_counter()
        difference_row(query, refs, counter=counter, workers=args.workers)
        times.append(time.perf_counter() - t0)
    expected = comparison_count(n, w, h)
    best = min(times)
    print(f"references={n} resolution={w}x{h} rotations={w}")
    print(f"comparisons per query: {counter.count} (expected {expected})")
    print(f"best time per query: {best * 1e3:.3f} ms over {args.repeats} runs")
    print(f"throughput: {counter.count / best:.3e} comparisons/s")
    if counter.count != expected:
        raise RuntimeError(f"comparison count {counter.count} != expected {expected}")


def build_parser():
    p = argparse.ArgumentParser(prog="nightvpr", description="Night-time 2D visual place recognition")
    p.add_argument("--config", help="key=value config file (default: $NIGHTVPR_CONFIG)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a synthetic benchmark dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--noise-model", type=int, dest="noise_model")
    s.add_argument("--night", choices=["on", "off"])
    s.add_argument("--queries", type=int, help="number of query frames")
    s.add_argument("--queries-at-refs", action="store_true", help="place queries exactly at reference poses")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("preprocess", help="dump processed images as CSV")
    s.add_argument("manifest")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    for name, func, helptext in (("match", cmd_match, "write the difference matrix"),
                                 ("localize", cmd_localize, "localize a query trajectory"),
                                 ("evaluate", cmd_evaluate, "sweep sequence length, noise and interpolation")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("dataset", nargs="?", help="dataset directory with reference/ and query/")
        s.add_argument("--ref", help="reference manifest")
        s.add_argument("--query", help="query manifest")
        s.add_argument("--out", required=True)
        s.set_defaults(func=func)
        if name == "match":
            s.add_argument("--workers", type=int, default=1)
        if name == "localize":
            s.add_argument("--window", type=int)
            s.add_argument("--odometry", help="odometry CSV (default: query/odometry.csv)")
            g = s.add_mutually_exclusive_group()
            g.add_argument("--interp", dest="interpolation", action="store_const", const="on")
            g.add_argument("--no-interp", dest="interpolation", action="store_const", const="off")
            s.add_argument("--heatmaps", action="store_true", help="dump combined heat maps and a figure")
        if name == "evaluate":
            s.add_argument("--results", help="summarize an existing results CSV instead of running sweeps")
            s.add_argument("--lengths", help="comma-separated sequence lengths")
            s.add_argument("--noise-models", dest="noise_models", help="comma-separated noise model ids")
            s.add_argument("--window", type=int, help="sequence length for the noise/interpolation sweeps")

    s = sub.add_parser("bench", help="time the matcher and verify the comparison count")
    s.add_argument("--refs", type=int, default=50)
    s.add_argument("--width", type=int, default=48)
    s.add_argument("--height", type=int, default=24)
    s.add_argument("--repeats", type=int, default=20)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # one diagnostic line, nonzero exit
        print(f"nightvpr {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
