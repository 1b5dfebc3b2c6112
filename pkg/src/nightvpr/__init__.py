"""Night-time 2D visual place recognition with low-resolution patch-normalized
matching, interpolated heat maps and odometry-aligned sequence matching."""

from .heatmap import (GridSpec, HeatMap, MapNode, ReferenceMap, best_match, build_grid, closest_reference,
                      interpolate_heatmap)
from .imgproc import PreprocessConfig, preprocess
from .matcher import (DifferenceMatrix, DifferenceRow, comparison_count, difference_matrix, invert_scores,
                      min_score, rotation_scores, sad_at_rotation)
from .seq2d import OdometryDelta, SequenceConfig, SequenceState, localize, translate_heatmap, update_sequence

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "HeatMap", "MapNode", "ReferenceMap", "best_match", "build_grid", "closest_reference",
    "interpolate_heatmap", "PreprocessConfig", "preprocess", "DifferenceMatrix", "DifferenceRow",
    "comparison_count", "difference_matrix", "invert_scores", "min_score", "rotation_scores",
    "sad_at_rotation", "OdometryDelta", "SequenceConfig", "SequenceState", "localize", "translate_heatmap",
    "update_sequence",
]
