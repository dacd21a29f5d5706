"""Segment-level aggregation of heatmaps into feature vectors and IoU targets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .segmentation import Segment, label_components

BASE_FEATURE_COUNT = 22  # 5 sizes + 2 center + 3 dispersions x 5 aggregates
STABILITY_FEATURE_COUNT = 5

_DISPERSIONS = ("entropy", "varratio", "margin")
_AGGREGATES = ("mean", "in", "bd", "rel", "in_rel")


def feature_count(num_classes: int, num_stability: int) -> int:
    return BASE_FEATURE_COUNT + num_classes + STABILITY_FEATURE_COUNT * num_stability


def feature_names(num_classes: int, num_stability: int) -> list[str]:
    """Canonical feature order; external contract for CSV headers and models."""
    names = ["size", "size_in", "size_bd", "size_rel", "size_in_rel"]
    names += ["center_row", "center_col"]
    for disp in _DISPERSIONS:
        names += [f"{disp}_{agg}" for agg in _AGGREGATES]
    names += [f"classprob_{y}" for y in range(num_classes)]
    for j in range(1, num_stability + 1):
        names += [f"cellstab{j}_{agg}" for agg in _AGGREGATES]
    return names


ENTROPY_MEAN_INDEX = feature_names(0, 0).index("entropy_mean")


def aggregate_heatmap(segment: Segment, heatmap: np.ndarray):
    """Mean of a heatmap over a segment, its interior, and its boundary.

    Returns (mean, mean_in, mean_bd, rel, rel_in) with rel = mean * S / S_bd and
    rel_in = mean_in * S_in / S_bd.  The interior means default to 0 for
    segments without inner pixels.
    """
    heatmap = np.asarray(heatmap, dtype=np.float64)
    values = heatmap[segment.pixels[:, 0], segment.pixels[:, 1]]
    size = segment.size
    size_in = segment.size_inner
    size_bd = segment.size_boundary
    mean = float(values.mean())
    mean_in = float(values[segment.inner].mean()) if size_in > 0 else 0.0
    mean_bd = float(values[~segment.inner].mean())
    rel = mean * size / size_bd
    rel_in = mean_in * size_in / size_bd
    return mean, mean_in, mean_bd, rel, rel_in


def mean_class_probs(segment: Segment, softmax: np.ndarray) -> np.ndarray:
    """Per-class mean of the softmax probabilities over the segment's pixels."""
    softmax = np.asarray(softmax, dtype=np.float64)
    return softmax[segment.pixels[:, 0], segment.pixels[:, 1]].mean(axis=0)


def assemble_features(
    segment: Segment,
    entropy_map: np.ndarray,
    varratio_map: np.ndarray,
    margin_map: np.ndarray,
    stability_maps,
    softmax: np.ndarray,
) -> np.ndarray:
    """Feature vector in canonical order: sizes, center, dispersion aggregates,
    class probabilities, then one aggregate block per stability heatmap.

    The vector for m stability maps is a prefix of the vector for m' > m maps.
    """
    size = segment.size
    size_in = segment.size_inner
    size_bd = segment.size_boundary
    parts = [
        np.array(
            [size, size_in, size_bd, size / size_bd, size_in / size_bd],
            dtype=np.float64,
        ),
        np.array(segment.center, dtype=np.float64),
    ]
    for heatmap in (entropy_map, varratio_map, margin_map):
        parts.append(np.array(aggregate_heatmap(segment, heatmap)))
    parts.append(mean_class_probs(segment, softmax))
    for stab in stability_maps:
        parts.append(np.array(aggregate_heatmap(segment, stab)))
    return np.concatenate(parts)


def adjusted_iou(
    segment: Segment, gt_labels: np.ndarray, gt_components: np.ndarray | None = None
) -> float:
    """IoU of a predicted segment against the union of the same-class
    ground-truth components it intersects; 0 when it intersects none.

    `gt_components` may carry a precomputed `label_components(gt_labels)` map
    to amortize the labeling over many segments of one frame.
    """
    gt_labels = np.asarray(gt_labels)
    if gt_components is None:
        gt_components = label_components(gt_labels)
    comp_classes = np.zeros(int(gt_components.max()) + 1, dtype=np.int64)
    comp_classes[gt_components.ravel()] = gt_labels.ravel()
    rows = segment.pixels[:, 0]
    cols = segment.pixels[:, 1]
    touched = np.unique(gt_components[rows, cols])
    same_class = touched[comp_classes[touched] == segment.class_id]
    if len(same_class) == 0:
        return 0.0
    union_mask = np.isin(gt_components, same_class)
    intersection = int(union_mask[rows, cols].sum())
    union = segment.size + int(union_mask.sum()) - intersection
    return intersection / union


@dataclass
class SegmentFeatures:
    """One segment's feature vector plus its quality target.

    `features` holds the canonical feature vector for the maximal number of
    stability maps the stream provides; `vector` slices the prefix for any
    smaller metric set.
    """

    frame_index: int
    component_index: int
    class_id: int
    size: int
    size_inner: int
    iou_adj: float
    features: np.ndarray
    num_classes: int
    num_stability: int
    track_id: int = -1

    @property
    def has_interior(self) -> bool:
        return self.size_inner > 0

    def vector(self, num_stability: int) -> np.ndarray:
        if not 0 <= num_stability <= self.num_stability:
            raise ValueError(
                f"num_stability must be in [0, {self.num_stability}], "
                f"got {num_stability}"
            )
        return self.features[: feature_count(self.num_classes, num_stability)]
