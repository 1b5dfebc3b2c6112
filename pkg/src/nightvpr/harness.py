"""Dataset persistence, the experiment runner and the evaluation metrics."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .heatmap import (MapNode, ReferenceMap, best_match, build_grid, closest_reference,
                      interpolate_heatmap, save_heatmap)
from .imgproc import PreprocessConfig, preprocess, read_image, write_image
from .matcher import ComparisonCounter, difference_row, invert_scores
from .seq2d import OdometryDelta, SequenceConfig, SequenceState, update_sequence
from .sim import Dataset, Pose2D

MANIFEST_HEADER = ["image_path", "x_m", "y_m", "theta_rad"]
ODOMETRY_HEADER = ["dx_m", "dy_m"]
RESULTS_HEADER = ["query_id", "est_x_m", "est_y_m", "node_id", "gt_x_m", "gt_y_m", "error_m"]
SUMMARY_FIELDS = ["count", "min", "q1", "median", "q3", "max"]


class DatasetError(ValueError):
    pass


@dataclass
class ManifestEntry:
    image_path: Path
    x: float
    y: float
    theta: float


@dataclass
class QuerySet:
    images: List[np.ndarray]
    poses: List[Pose2D]
    odometry: List[OdometryDelta]

    def __len__(self):
        return len(self.images)


@dataclass
class LocalizationResult:
    query_id: int
    estimate: Tuple[float, float]
    node_id: int
    ground_truth: Tuple[float, float]

    @property
    def distance_error(self) -> float:
        return math.hypot(self.estimate[0] - self.ground_truth[0], self.estimate[1] - self.ground_truth[1])


@dataclass
class ErrorSummary:
    count: int
    min: float
    q1: float
    median: float
    q3: float
    max: float

    def as_row(self) -> list:
        return [self.count] + [repr(float(getattr(self, f))) for f in SUMMARY_FIELDS[1:]]


@dataclass
class PrecisionReport:
    tolerance: float
    true_positives: int
    false_positives: int
    total_queries: int

    @property
    def precision(self) -> float:
        reported = self.true_positives + self.false_positives
        return 1.0 if reported == 0 else self.true_positives / reported

    @property
    def recall(self) -> float:
        return 0.0 if self.total_queries == 0 else self.true_positives / self.total_queries


@dataclass(frozen=True)
class ExperimentConfig:
    window_length: int = 1
    interpolation: bool = True
    grid_cols: int = 100
    grid_rows: int = 100
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    workers: int = 1

    @classmethod
    def from_mapping(cls, values) -> "ExperimentConfig":
        kw = {}
        for key in ("window_length", "grid_cols", "grid_rows", "workers"):
            if key in values:
                kw[key] = int(values[key])
        if "interpolation" in values:
            kw["interpolation"] = str(values["interpolation"]).lower() in ("1", "on", "true", "yes")
        kw["preprocess"] = PreprocessConfig.from_mapping(values)
        return cls(**kw)


# -- manifests ---------------------------------------------------------------

def read_manifest(path) -> List[ManifestEntry]:
    """Parse a manifest CSV; image paths are relative to the manifest's directory."""
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"manifest not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != MANIFEST_HEADER:
        raise DatasetError(f"{path}:1: expected header {','.join(MANIFEST_HEADER)}")
    entries = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise DatasetError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
        try:
            x, y, th = (float(v) for v in row[1:])
        except ValueError as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
        if not all(math.isfinite(v) for v in (x, y, th)):
            raise DatasetError(f"{path}:{lineno}: non-finite coordinate")
        entries.append(ManifestEntry(path.parent / row[0].strip(), x, y, th))
    if not entries:
        raise DatasetError(f"{path}: manifest has no entries")
    return entries


def write_manifest(path, entries: Sequence[Tuple[str, float, float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_HEADER)
        for name, x, y, th in entries:
            w.writerow([name, repr(float(x)), repr(float(y)), repr(float(th))])


def read_odometry(path) -> List[OdometryDelta]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ODOMETRY_HEADER:
        raise DatasetError(f"{path}:1: expected header {','.join(ODOMETRY_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(OdometryDelta(float(row[0]), float(row[1])))
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return out


def write_odometry(path, deltas: Sequence[OdometryDelta]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ODOMETRY_HEADER)
        for d in deltas:
            w.writerow([repr(float(d.dx)), repr(float(d.dy))])


def save_dataset(ds: Dataset, root) -> Path:
    """Write ``reference/`` and ``query/`` directories with PNG frames and manifests."""
    root = Path(root)
    for role, images, poses in (("reference", ds.ref_images, ds.ref_poses),
                                ("query", ds.query_images, ds.query_poses)):
        d = root / role
        d.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, (img, p) in enumerate(zip(images, poses)):
            name = f"{role[0]}{i:04d}.png"
            write_image(d / name, img)
            entries.append((name, p.x, p.y, p.theta))
        write_manifest(d / "manifest.csv", entries)
    write_odometry(root / "query" / "odometry.csv", ds.odometry)
    return root


def _load_images(entries, cfg: PreprocessConfig):
    out = []
    for e in entries:
        if not e.image_path.is_file():
            raise DatasetError(f"missing image file: {e.image_path}")
        out.append(preprocess(read_image(e.image_path), cfg))
    return out


def load_reference_map(manifest, cfg: PreprocessConfig = PreprocessConfig()) -> ReferenceMap:
    entries = read_manifest(manifest)
    images = _load_images(entries, cfg)
    return ReferenceMap([MapNode(i, (e.x, e.y), img) for i, (e, img) in enumerate(zip(entries, images))])


def load_query_set(manifest, cfg: PreprocessConfig = PreprocessConfig(), odometry=None) -> QuerySet:
    """Load queries; odometry defaults to ``odometry.csv`` beside the manifest.

    Without an odometry file the deltas are taken from the ground-truth poses.
    """
    manifest = Path(manifest)
    entries = read_manifest(manifest)
    images = _load_images(entries, cfg)
    poses = [Pose2D(e.x, e.y, e.theta) for e in entries]
    odo_path = Path(odometry) if odometry is not None else manifest.parent / "odometry.csv"
    if odo_path.is_file():
        deltas = read_odometry(odo_path)
        if len(deltas) != len(poses) - 1:
            raise DatasetError(f"{odo_path}: expected {len(poses) - 1} deltas, got {len(deltas)}")
    elif odometry is not None:
        raise DatasetError(f"odometry file not found: {odo_path}")
    else:
        deltas = [OdometryDelta(b.x - a.x, b.y - a.y) for a, b in zip(poses[:-1], poses[1:])]
    return QuerySet(images, poses, deltas)


def load_dataset(manifest, cfg: PreprocessConfig = PreprocessConfig(), role: str = "reference"):
    if role == "reference":
        return load_reference_map(manifest, cfg)
    if role == "query":
        return load_query_set(manifest, cfg)
    raise ValueError(f"unknown dataset role {role!r}")


def processed_dataset(ds: Dataset, cfg: PreprocessConfig = PreprocessConfig()) -> Tuple[ReferenceMap, QuerySet]:
    """Preprocess an in-memory dataset without touching the filesystem."""
    ref = ReferenceMap([MapNode(i, (p.x, p.y), preprocess(img, cfg))
                        for i, (img, p) in enumerate(zip(ds.ref_images, ds.ref_poses))])
    qs = QuerySet([preprocess(img, cfg) for img in ds.query_images], list(ds.query_poses), list(ds.odometry))
    return ref, qs


# -- experiment ---------------------------------------------------------------

def run_experiment(ref_map: ReferenceMap, queries: QuerySet, config: ExperimentConfig = ExperimentConfig(),
                   odometry: Optional[Sequence[OdometryDelta]] = None, heatmap_dir=None,
                   counter: Optional[ComparisonCounter] = None) -> List[LocalizationResult]:
    """Localize every query in trajectory order.

    With interpolation off the estimate snaps to the position of the node
    closest to the combined heat map's peak instead of the peak itself.
    """
    spec = build_grid(ref_map, config.grid_cols, config.grid_rows)
    deltas = list(queries.odometry if odometry is None else odometry)
    if len(deltas) != max(len(queries) - 1, 0):
        raise ValueError("need one odometry delta per query transition")
    state = SequenceState(SequenceConfig(config.window_length), spec)
    ref_images = [n.image for n in ref_map.nodes]
    if heatmap_dir is not None:
        heatmap_dir = Path(heatmap_dir)
        heatmap_dir.mkdir(parents=True, exist_ok=True)
    results = []
    for i, (img, pose) in enumerate(zip(queries.images, queries.poses)):
        row = difference_row(img, ref_images, query_id=i, counter=counter, workers=config.workers)
        single = interpolate_heatmap(invert_scores(row), ref_map, spec)
        delta = deltas[i - 1] if i > 0 else OdometryDelta()
        combined = update_sequence(state, single, delta)
        peak = best_match(combined)
        node_id = closest_reference(peak, ref_map)
        est = peak if config.interpolation else tuple(ref_map.node_by_id(node_id).position)
        if heatmap_dir is not None:
            save_heatmap(combined, heatmap_dir / f"heatmap_{i:04d}.csv", query_id=i)
        results.append(LocalizationResult(i, (float(est[0]), float(est[1])), int(node_id), (pose.x, pose.y)))
    return results


def write_results(path, results: Sequence[LocalizationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RESULTS_HEADER)
        for r in results:
            w.writerow([r.query_id, repr(r.estimate[0]), repr(r.estimate[1]), r.node_id,
                        repr(float(r.ground_truth[0])), repr(float(r.ground_truth[1])), repr(r.distance_error)])


def read_results(path) -> List[LocalizationResult]:
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != RESULTS_HEADER:
        raise DatasetError(f"{path}:1: expected header {','.join(RESULTS_HEADER)}")
    out = []
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            out.append(LocalizationResult(int(row[0]), (float(row[1]), float(row[2])), int(row[3]),
                                          (float(row[4]), float(row[5]))))
        except (ValueError, IndexError) as exc:
            raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return out


# -- metrics ------------------------------------------------------------------

def _errors(results) -> np.ndarray:
    return np.array([r.distance_error if isinstance(r, LocalizationResult) else float(r) for r in results])


def distance_errors(results) -> ErrorSummary:
    """Five-number summary; quartiles interpolate linearly between order statistics."""
    e = np.sort(_errors(results))
    if e.size == 0:
        raise ValueError("no results to summarize")

    def quantile(frac):
        pos = frac * (e.size - 1)
        lo = int(math.floor(pos))
        hi = min(lo + 1, e.size - 1)
        return float(e[lo] + (e[hi] - e[lo]) * (pos - lo))

    return ErrorSummary(int(e.size), float(e[0]), quantile(0.25), quantile(0.5), quantile(0.75), float(e[-1]))


def precision_recall(results, tolerance: float = 3.0) -> PrecisionReport:
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    e = _errors(results)
    tp = int((e <= tolerance).sum())
    return PrecisionReport(float(tolerance), tp, int(e.size) - tp, int(e.size))


def write_summary(path, rows: Dict[str, ErrorSummary], key: str = "label") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([key] + SUMMARY_FIELDS)
        for label, s in rows.items():
            w.writerow([label] + s.as_row())


def write_precision(path, rep: PrecisionReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tolerance_m", "true_positives", "false_positives", "total_queries", "precision", "recall"])
        w.writerow([repr(rep.tolerance), rep.true_positives, rep.false_positives, rep.total_queries,
                    repr(rep.precision), repr(rep.recall)])
