"""Reference maps, metric grids and piecewise-linear heat maps.

Heat-map values are indexed ``values[row, col]`` with row following +y and
col following +x; cell ``(row, col)`` is centred at
``(origin_x + (col + 0.5) * cell_x, origin_y + (row + 0.5) * cell_y)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import Delaunay, QhullError


@dataclass(frozen=True)
class MapNode:
    id: int
    position: Tuple[float, float]
    image: Optional[np.ndarray] = field(default=None, repr=False, compare=False)


class ReferenceMap:
    """Day-time map: nodes with metric positions and processed images.

    The Delaunay triangulation is built lazily, once, over nodes sorted by id,
    so the interpolant does not depend on the order nodes were supplied in.
    Cocircular ties are then settled by Qhull on that canonical order.
    """

    def __init__(self, nodes: Sequence[MapNode]):
        nodes = list(nodes)
        if not nodes:
            raise ValueError("reference map needs at least one node")
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("node ids must be unique")
        for n in nodes:
            if not np.all(np.isfinite(n.position)):
                raise ValueError(f"node {n.id} has non-finite position")
        self.nodes: List[MapNode] = nodes
        self._interp_cache: Dict["GridSpec", "_GridWeights"] = {}

    def __len__(self):
        return len(self.nodes)

    @cached_property
    def ids(self) -> np.ndarray:
        return np.array([n.id for n in self.nodes])

    @cached_property
    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes], dtype=np.float64)

    @property
    def bounds(self) -> Tuple[float, float, float, float]:
        p = self.positions
        return (float(p[:, 0].min()), float(p[:, 1].min()), float(p[:, 0].max()), float(p[:, 1].max()))

    @cached_property
    def _canonical(self) -> np.ndarray:
        # indices into self.nodes, sorted by node id
        return np.argsort(self.ids, kind="stable")

    @cached_property
    def triangulation(self) -> Delaunay:
        pts = self.positions[self._canonical]
        if len(pts) < 3:
            raise ValueError("interpolation needs at least 3 non-collinear nodes")
        try:
            return Delaunay(pts)
        except QhullError as exc:
            raise ValueError("reference nodes are collinear; cannot triangulate") from exc

    def node_by_id(self, node_id) -> MapNode:
        idx = np.flatnonzero(self.ids == node_id)
        if idx.size == 0:
            raise KeyError(node_id)
        return self.nodes[int(idx[0])]


@dataclass(frozen=True)
class GridSpec:
    cols: int
    rows: int
    origin: Tuple[float, float]
    cell_size_x: float
    cell_size_y: float

    def __post_init__(self):
        if self.cols < 2 or self.rows < 2:
            raise ValueError("grid needs at least 2x2 cells")
        if not (self.cell_size_x > 0 and self.cell_size_y > 0):
            raise ValueError("cell sizes must be positive")

    @property
    def shape(self):
        return (self.rows, self.cols)

    def centers_x(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.cols) + 0.5) * self.cell_size_x

    def centers_y(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.rows) + 0.5) * self.cell_size_y

    def cell_centers(self) -> np.ndarray:
        """Row-major ``(rows*cols, 2)`` array of cell-centre coordinates."""
        gx, gy = np.meshgrid(self.centers_x(), self.centers_y())
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_center(self, row: int, col: int) -> Tuple[float, float]:
        return (self.origin[0] + (col + 0.5) * self.cell_size_x,
                self.origin[1] + (row + 0.5) * self.cell_size_y)

    @property
    def half_diagonal(self) -> float:
        return 0.5 * float(np.hypot(self.cell_size_x, self.cell_size_y))

    def to_mapping(self) -> dict:
        return {"cols": self.cols, "rows": self.rows, "origin_x": self.origin[0], "origin_y": self.origin[1],
                "cell_size_x": self.cell_size_x, "cell_size_y": self.cell_size_y}

    @classmethod
    def from_mapping(cls, m) -> "GridSpec":
        return cls(cols=int(m["cols"]), rows=int(m["rows"]),
                   origin=(float(m["origin_x"]), float(m["origin_y"])),
                   cell_size_x=float(m["cell_size_x"]), cell_size_y=float(m["cell_size_y"]))


@dataclass
class HeatMap:
    spec: GridSpec
    values: np.ndarray
    window_length: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != self.spec.shape:
            raise ValueError(f"values shape {self.values.shape} does not match grid {self.spec.shape}")


def build_grid(ref_map: ReferenceMap, cols: int = 100, rows: int = 100) -> GridSpec:
    min_x, min_y, max_x, max_y = ref_map.bounds
    if max_x - min_x <= 0 or max_y - min_y <= 0:
        raise ValueError("degenerate bounding box: nodes have zero extent along an axis")
    return GridSpec(cols=cols, rows=rows, origin=(min_x, min_y),
                    cell_size_x=(max_x - min_x) / cols, cell_size_y=(max_y - min_y) / rows)


class _GridWeights:
    """Per-point vertex indices and barycentric weights, reusable across score vectors."""

    def __init__(self, ref_map: ReferenceMap, points: np.ndarray):
        tri = ref_map.triangulation
        canon = ref_map._canonical
        simplex = tri.find_simplex(points, tol=1e-12)
        inside = simplex >= 0
        n = len(points)
        verts = np.zeros((n, 3), dtype=np.int64)
        weights = np.zeros((n, 3))
        if inside.any():
            s = simplex[inside]
            T = tri.transform[s, :2]
            r = points[inside] - tri.transform[s, 2]
            b = np.einsum("ijk,ik->ij", T, r)
            weights[inside] = np.column_stack([b, 1.0 - b.sum(axis=1)])
            verts[inside] = canon[tri.simplices[s]]
        outside = np.flatnonzero(~inside)
        for i in outside:
            verts[i, 0] = nearest_node_index(points[i], ref_map)
            weights[i] = (1.0, 0.0, 0.0)
        self.verts = verts
        self.weights = weights
        self.inside = inside

    def apply(self, node_scores: np.ndarray) -> np.ndarray:
        return (node_scores[self.verts] * self.weights).sum(axis=1)


def nearest_node_index(p, ref_map: ReferenceMap) -> int:
    """Index (into ``ref_map.nodes``) of the closest node; smallest id on ties."""
    d2 = ((ref_map.positions - np.asarray(p, dtype=np.float64)) ** 2).sum(axis=1)
    best = np.flatnonzero(d2 == d2.min())
    return int(best[np.argmin(ref_map.ids[best])])


def interpolate_points(node_scores, ref_map: ReferenceMap, points) -> np.ndarray:
    """Evaluate the piecewise-linear interpolant at arbitrary points."""
    node_scores = np.asarray(node_scores, dtype=np.float64)
    if node_scores.shape != (len(ref_map),):
        raise ValueError(f"expected {len(ref_map)} node scores, got {node_scores.shape}")
    return _GridWeights(ref_map, np.atleast_2d(np.asarray(points, dtype=np.float64))).apply(node_scores)


def interpolate_heatmap(node_scores, ref_map: ReferenceMap, spec: GridSpec) -> HeatMap:
    """Barycentric interpolation of node scores onto the grid's cell centres.

    Cells outside the convex hull of the nodes take the nearest node's score.
    """
    node_scores = np.asarray(node_scores, dtype=np.float64)
    if node_scores.shape != (len(ref_map),):
        raise ValueError(f"expected {len(ref_map)} node scores, got {node_scores.shape}")
    gw = ref_map._interp_cache.get(spec)
    if gw is None:
        gw = _GridWeights(ref_map, spec.cell_centers())
        ref_map._interp_cache[spec] = gw
    return HeatMap(spec, gw.apply(node_scores).reshape(spec.shape))


def best_match(hm: HeatMap) -> Tuple[float, float]:
    """Centre of the maximal cell; first in row-major order on ties."""
    flat = int(np.argmax(hm.values))
    row, col = divmod(flat, hm.spec.cols)
    return hm.spec.cell_center(row, col)


def closest_reference(p, ref_map: ReferenceMap):
    return ref_map.nodes[nearest_node_index(p, ref_map)].id


def save_heatmap(hm: HeatMap, path, **extra) -> Path:
    """Write row-major values as CSV plus a ``.json`` sidecar with the grid spec."""
    path = Path(path)
    np.savetxt(path, hm.values, delimiter=",", fmt="%.17g")
    meta = hm.spec.to_mapping()
    meta["window_length"] = hm.window_length
    meta.update(extra)
    side = path.with_suffix(".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def load_heatmap(path) -> HeatMap:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    spec = GridSpec.from_mapping(meta)
    values = np.loadtxt(path, delimiter=",", ndmin=2)
    return HeatMap(spec, values, window_length=int(meta.get("window_length", 1)))
