"""Sequence matching in two dimensions.

Past heat maps are kept aligned to the latest frame: on every update each
stored map is shifted by the reported odometry, the new single-frame map is
appended and the window is summed with uniform weights (no normalization).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Deque, Optional, Tuple

import numpy as np

from .heatmap import GridSpec, HeatMap, ReferenceMap, best_match, closest_reference, interpolate_heatmap
from .matcher import ComparisonCounter, difference_row, invert_scores

_SNAP = 1e-9


@dataclass(frozen=True)
class SequenceConfig:
    window_length: int = 1

    def __post_init__(self):
        if self.window_length < 1:
            raise ValueError("window_length must be >= 1")


@dataclass(frozen=True)
class OdometryDelta:
    dx: float = 0.0
    dy: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.dx) and np.isfinite(self.dy)):
            raise ValueError("odometry delta must be finite")

    def __neg__(self):
        return OdometryDelta(-self.dx, -self.dy)


def _snap(v: float) -> float:
    r = round(v)
    return float(r) if abs(v - r) < _SNAP else v


def _shift_axis(values: np.ndarray, offset: float, axis: int) -> np.ndarray:
    # out[i] = values[i - offset] with linear interpolation, zero outside the grid
    n = values.shape[axis]
    offset = _snap(offset)
    base = np.floor(offset)
    frac = offset - base
    base = int(base)
    src0 = np.arange(n) - base
    out = np.zeros_like(values)
    for src, wgt in ((src0, 1.0 - frac), (src0 - 1, frac)):
        if wgt == 0.0:
            continue
        ok = (src >= 0) & (src < n)
        if not ok.any():
            continue
        dst_idx = np.flatnonzero(ok)
        taken = np.take(values, src[ok], axis=axis)
        if axis == 0:
            out[dst_idx, :] += wgt * taken
        else:
            out[:, dst_idx] += wgt * taken
    return out


def translate_heatmap(hm: HeatMap, delta: OdometryDelta) -> HeatMap:
    """Move the map contents by ``delta`` metres (bilinear, zero fill).

    The result at position ``p`` is the source value at ``p - delta``, so a
    peak at the robot's previous location travels with the robot.
    """
    fx = delta.dx / hm.spec.cell_size_x
    fy = delta.dy / hm.spec.cell_size_y
    vals = hm.values
    if fx != 0.0:
        vals = _shift_axis(vals, fx, axis=1)
    if fy != 0.0:
        vals = _shift_axis(vals, fy, axis=0)
    return HeatMap(hm.spec, vals.copy() if vals is hm.values else vals, hm.window_length)


class SequenceState:
    """Sliding window of pre-aligned heat maps. Single owner; not thread-safe."""

    def __init__(self, config: SequenceConfig = SequenceConfig(), spec: Optional[GridSpec] = None):
        self.config = config
        self.spec = spec
        self.window: Deque[HeatMap] = deque()
        self.updates = 0

    def __len__(self):
        return len(self.window)


def update_sequence(state: SequenceState, current: HeatMap, delta: OdometryDelta = OdometryDelta()) -> HeatMap:
    if state.spec is None:
        state.spec = current.spec
    elif current.spec != state.spec:
        raise ValueError("heat map grid does not match the sequence grid")
    if state.updates > 0:
        state.window = deque(translate_heatmap(m, delta) for m in state.window)
    state.window.append(current)
    while len(state.window) > state.config.window_length:
        state.window.popleft()
    state.updates += 1
    total = np.zeros(state.spec.shape)
    for m in state.window:
        total += m.values
    return HeatMap(state.spec, total, window_length=state.config.window_length)


def localize(state: SequenceState, query: np.ndarray, ref_map: ReferenceMap, spec: GridSpec,
             delta: OdometryDelta = OdometryDelta(), counter: Optional[ComparisonCounter] = None,
             workers: int = 1) -> Tuple[Tuple[float, float], int, HeatMap]:
    """Match one query, fold it into the sequence and return the estimate.

    Returns ``(position, node_id, combined_heatmap)``.
    """
    row = difference_row(query, [n.image for n in ref_map.nodes], counter=counter, workers=workers)
    single = interpolate_heatmap(invert_scores(row), ref_map, spec)
    combined = update_sequence(state, single, delta)
    pos = best_match(combined)
    return pos, closest_reference(pos, ref_map), combined
