"""Stream-level orchestration: extraction, tracking, and dataset assembly."""

from __future__ import annotations

import csv

import numpy as np

from . import heatmaps, seg_metrics, segmentation, tracking
from .dataset import MetaRecordTable, build_time_series
from .seg_metrics import SegmentFeatures, feature_names
from .tensor_io import StreamManifest


def extract_frame(
    softmax: np.ndarray,
    cell_stack: np.ndarray | None,
    gt_labels: np.ndarray | None,
    frame_index: int,
    num_stability: int,
) -> tuple[list[segmentation.Segment], list[SegmentFeatures]]:
    """Segments and feature rows for one frame.

    `num_stability` selects how many stability heatmaps go into the canonical
    feature vector; the ground truth is only needed for quality targets.
    """
    labels = heatmaps.predicted_labels(softmax)
    segments = segmentation.connected_components(labels, frame_index)
    entropy_map, varratio_map, margin_map = heatmaps.dispersion_heatmaps(softmax)
    stability_maps = []
    if num_stability > 0:
        if cell_stack is None:
            raise ValueError("cell states required when num_stability > 0")
        stability_maps = heatmaps.stability_heatmaps(cell_stack)[:num_stability]
        if len(stability_maps) < num_stability:
            raise ValueError(
                f"stream provides {len(stability_maps)} stability maps, "
                f"requested {num_stability}"
            )
    gt_components = None
    if gt_labels is not None:
        gt_components = segmentation.label_components(gt_labels)
    rows = []
    for segment in segments:
        vector = seg_metrics.assemble_features(
            segment, entropy_map, varratio_map, margin_map, stability_maps, softmax
        )
        if gt_labels is not None:
            iou = seg_metrics.adjusted_iou(segment, gt_labels, gt_components)
        else:
            iou = float("nan")
        rows.append(
            SegmentFeatures(
                frame_index=frame_index,
                component_index=segment.component_index,
                class_id=segment.class_id,
                size=segment.size,
                size_inner=segment.size_inner,
                iou_adj=iou,
                features=vector,
                num_classes=softmax.shape[2],
                num_stability=num_stability,
            )
        )
    return segments, rows


def process_stream(
    manifest: StreamManifest,
    num_stability: int,
    params: tracking.TrackingParams | None = None,
    with_gt: bool = True,
):
    """One pass over a stream: per-frame feature rows plus track assignments.

    Returns (rows_by_frame, assignments_by_frame); assignments are None when
    no tracking parameters are given.  Track ids are filled into the rows.
    """
    if not 0 <= num_stability <= manifest.num_blocks - 1:
        raise ValueError(
            f"num_stability must be in [0, {manifest.num_blocks - 1}], "
            f"got {num_stability}"
        )
    state = tracking.TrackState()
    shape = (manifest.height, manifest.width)
    rows_by_frame = []
    assignments_by_frame = [] if params is not None else None
    for frame_index in range(manifest.num_frames):
        softmax = manifest.load_softmax(frame_index)
        cell_stack = (
            manifest.load_cell_state(frame_index) if num_stability > 0 else None
        )
        gt = manifest.load_ground_truth(frame_index) if with_gt else None
        segments, rows = extract_frame(
            softmax, cell_stack, gt, frame_index, num_stability
        )
        if params is not None:
            assignments = tracking.track_frame(
                state, segments, frame_index, params, shape
            )
            by_component = {a.component_index: a.track_id for a in assignments}
            for row in rows:
                row.track_id = by_component[row.component_index]
            assignments_by_frame.append(assignments)
        rows_by_frame.append(rows)
    return rows_by_frame, assignments_by_frame


def assemble_dataset(
    rows_by_frame: list[list[SegmentFeatures]],
    history: int,
    num_classes: int,
    num_stability: int,
) -> MetaRecordTable:
    return build_time_series(rows_by_frame, history, num_classes, num_stability)


FEATURE_CSV_META = ("frame", "component", "class", "track_id", "iou_adj")


def write_feature_csv(rows_by_frame, path, num_classes: int, num_stability: int):
    """Per-segment feature table in canonical column order."""
    names = feature_names(num_classes, num_stability)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(FEATURE_CSV_META) + names)
        for rows in rows_by_frame:
            for row in rows:
                writer.writerow(
                    [
                        row.frame_index,
                        row.component_index,
                        row.class_id,
                        row.track_id,
                        repr(float(row.iou_adj)),
                    ]
                    + [repr(float(v)) for v in row.features]
                )


def read_feature_csv(path, num_classes: int, num_stability: int):
    """Inverse of write_feature_csv; returns rows grouped by frame."""
    names = feature_names(num_classes, num_stability)
    rows_by_frame: dict[int, list[SegmentFeatures]] = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != list(FEATURE_CSV_META) + names:
            raise ValueError(f"{path}: unexpected feature CSV header")
        size_idx = 5 + names.index("size")
        size_in_idx = 5 + names.index("size_in")
        for record in reader:
            features = np.array([float(v) for v in record[5:]])
            row = SegmentFeatures(
                frame_index=int(record[0]),
                component_index=int(record[1]),
                class_id=int(record[2]),
                size=int(float(record[size_idx])),
                size_inner=int(float(record[size_in_idx])),
                iou_adj=float(record[4]),
                features=features,
                num_classes=num_classes,
                num_stability=num_stability,
                track_id=int(record[3]),
            )
            rows_by_frame.setdefault(row.frame_index, []).append(row)
    if not rows_by_frame:
        return []
    last = max(rows_by_frame)
    return [rows_by_frame.get(i, []) for i in range(last + 1)]


def write_tracking_csv(assignments_by_frame, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "component", "track_id", "matched_step"])
        for assignments in assignments_by_frame:
            for a in assignments:
                writer.writerow(
                    [a.frame_index, a.component_index, a.track_id, a.matched_step]
                )


def read_tracking_csv(path):
    """Track/step lookup keyed by (frame, component)."""
    table = {}
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader)
        for frame, component, track_id, step in reader:
            table[(int(frame), int(component))] = (int(track_id), int(step))
    return table


def apply_tracking(rows_by_frame, track_table) -> None:
    """Fill track ids from a tracking CSV lookup into feature rows."""
    for rows in rows_by_frame:
        for row in rows:
            entry = track_table.get((row.frame_index, row.component_index))
            if entry is not None:
                row.track_id = entry[0]


def write_segment_csv(segments_by_frame, path):
    """Exportable segment table (sizes, centers, ids) per frame."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "frame",
                "component",
                "class",
                "size",
                "size_in",
                "size_bd",
                "center_row",
                "center_col",
                "track_id",
            ]
        )
        for segments in segments_by_frame:
            for row in segmentation.segment_table_rows(segments):
                writer.writerow(
                    [
                        row["frame"],
                        row["component"],
                        row["class"],
                        row["size"],
                        row["size_in"],
                        row["size_bd"],
                        repr(row["center_row"]),
                        repr(row["center_col"]),
                        row["track_id"],
                    ]
                )
