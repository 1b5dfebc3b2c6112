"""Rotation-invariant sum-of-absolute-differences matching.

Rotation ``k`` compares query column ``(j + k) mod w`` with reference column
``j``, so a query that equals the reference shifted right by ``s`` columns
scores exactly zero at ``k = s``.

Determinism: every (query, reference) cell is reduced by the same numpy call
on arrays of the same shape, independently of any other cell, so splitting the
references across workers cannot change a single bit of the result.
"""

from __future__ import annotations

import csv
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np


class ComparisonCounter:
    """Thread-safe tally of pixel comparisons performed by the matcher."""

    def __init__(self):
        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int) -> None:
        with self._lock:
            self.count += int(n)

    def reset(self) -> None:
        with self._lock:
            self.count = 0


@dataclass
class DifferenceRow:
    query_id: int
    min_scores: np.ndarray
    best_rotation: np.ndarray


@dataclass
class DifferenceMatrix:
    rows: List[DifferenceRow]
    ref_ids: List[int]

    @property
    def scores(self) -> np.ndarray:
        return np.vstack([r.min_scores for r in self.rows])

    @property
    def rotations(self) -> np.ndarray:
        return np.vstack([r.best_rotation for r in self.rows])

    @property
    def shape(self):
        return (len(self.rows), len(self.ref_ids))


def _check_pair(query, ref):
    query = np.asarray(query, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if query.ndim != 2 or query.shape != ref.shape:
        raise ValueError(f"dimension mismatch: query {query.shape} vs reference {ref.shape}")
    return query, ref


def rotated_stack(query: np.ndarray) -> np.ndarray:
    """All ``w`` column rotations of ``query``, shape ``(w, h, w)``."""
    query = np.asarray(query, dtype=np.float64)
    w = query.shape[1]
    idx = (np.arange(w)[:, None] + np.arange(w)[None, :]) % w
    return query[:, idx].transpose(1, 0, 2)


def sad_at_rotation(query, ref, k: int) -> float:
    query, ref = _check_pair(query, ref)
    h, w = query.shape
    if not 0 <= k < w:
        raise ValueError(f"rotation {k} outside 0..{w - 1}")
    return float(np.abs(np.roll(query, -k, axis=1) - ref).sum() / (h * w))


def _scores_against(stack: np.ndarray, ref: np.ndarray, counter=None) -> np.ndarray:
    n, h, w = stack.shape
    diff = np.abs(stack - ref[None, :, :]).reshape(n, h * w)
    if counter is not None:
        counter.add(diff.size)
    return diff.sum(axis=1) / (h * w)


def rotation_scores(query, ref, counter: Optional[ComparisonCounter] = None) -> np.ndarray:
    """Mean absolute difference at every column rotation (length = width)."""
    query, ref = _check_pair(query, ref)
    return _scores_against(rotated_stack(query), ref, counter)


def min_score(query, ref, counter: Optional[ComparisonCounter] = None):
    """Best score over rotations and its rotation index (smallest index on ties)."""
    scores = rotation_scores(query, ref, counter)
    k = int(np.argmin(scores))
    return float(scores[k]), k


def _row(query_id, query, refs, counter, workers):
    query = np.asarray(query, dtype=np.float64)
    for ref in refs:
        if np.shape(ref) != query.shape:
            raise ValueError(f"dimension mismatch: query {query.shape} vs reference {np.shape(ref)}")
    stack = rotated_stack(query)

    def run(chunk):
        out = []
        for i in chunk:
            s = _scores_against(stack, np.asarray(refs[i], dtype=np.float64), counter)
            k = int(np.argmin(s))
            out.append((i, s[k], k))
        return out

    n = len(refs)
    if workers <= 1:
        parts = [run(range(n))]
    else:
        chunks = [c for c in np.array_split(np.arange(n), workers) if len(c)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))

    mins = np.empty(n)
    rots = np.empty(n, dtype=np.int64)
    for part in parts:
        for i, s, k in part:
            mins[i] = s
            rots[i] = k
    return DifferenceRow(query_id=query_id, min_scores=mins, best_rotation=rots)


def difference_row(query, ref_images: Sequence[np.ndarray], query_id: int = 0,
                   counter: Optional[ComparisonCounter] = None, workers: int = 1) -> DifferenceRow:
    if len(ref_images) == 0:
        raise ValueError("empty reference map")
    return _row(query_id, query, ref_images, counter, workers)


def difference_matrix(queries: Sequence[np.ndarray], refs, counter: Optional[ComparisonCounter] = None,
                      workers: int = 1) -> DifferenceMatrix:
    """Min-over-rotation scores of every query against every reference node.

    ``refs`` is a ``ReferenceMap`` or a plain sequence of processed images.
    """
    if hasattr(refs, "nodes"):
        images = [n.image for n in refs.nodes]
        ids = [n.id for n in refs.nodes]
    else:
        images = list(refs)
        ids = list(range(len(images)))
    if not images:
        raise ValueError("empty reference map")
    rows = [_row(q, img, images, counter, workers) for q, img in enumerate(queries)]
    return DifferenceMatrix(rows=rows, ref_ids=ids)


def invert_scores(row) -> np.ndarray:
    """Turn distances into similarities: ``max(scores) - scores``."""
    scores = row.min_scores if isinstance(row, DifferenceRow) else np.asarray(row, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty difference row")
    return scores.max() - scores


def comparison_count(n_refs: int, w: int, h: int) -> int:
    """Pixel comparisons per query: every pixel, every rotation, every reference."""
    if min(n_refs, w, h) < 1:
        raise ValueError("arguments must be positive")
    return int(n_refs) * int(w) * int(h) * int(w)


def save_difference_matrix(dm: DifferenceMatrix, path) -> Path:
    """Write scores to ``path`` and best rotations to ``<stem>_rotations.csv``."""
    path = Path(path)
    header = ["query_id"] + [str(i) for i in dm.ref_ids]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in dm.rows:
            w.writerow([row.query_id] + [repr(float(v)) for v in row.min_scores])
    rot_path = path.with_name(path.stem + "_rotations.csv")
    with open(rot_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in dm.rows:
            w.writerow([row.query_id] + [int(v) for v in row.best_rotation])
    return rot_path


def load_difference_matrix(path) -> DifferenceMatrix:
    path = Path(path)
    rot_path = path.with_name(path.stem + "_rotations.csv")
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rot_rows = {}
    if rot_path.exists():
        with open(rot_path, newline="") as fh:
            for r in list(csv.reader(fh))[1:]:
                rot_rows[int(r[0])] = np.array([int(v) for v in r[1:]], dtype=np.int64)
    ref_ids = [int(v) for v in rows[0][1:]]
    out = []
    for r in rows[1:]:
        qid = int(r[0])
        scores = np.array([float(v) for v in r[1:]])
        rots = rot_rows.get(qid, np.zeros(len(scores), dtype=np.int64))
        out.append(DifferenceRow(qid, scores, rots))
    return DifferenceMatrix(rows=out, ref_ids=ref_ids)
