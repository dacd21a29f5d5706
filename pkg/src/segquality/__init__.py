"""Segment-wise quality prediction for video segmentation streams.

The pipeline turns per-frame softmax tensors and cell-state stacks into
per-segment dispersion and stability metrics, tracks segments over time, and
trains meta models that estimate each segment's quality (IoU against ground
truth) without seeing the labels at inference time.
"""

__version__ = "0.1.0"

from . import (
    dataset,
    evaluation,
    heatmaps,
    meta_models,
    pipeline,
    seg_metrics,
    segmentation,
    synth,
    tensor_io,
    tracking,
)

__all__ = [
    "dataset",
    "evaluation",
    "heatmaps",
    "meta_models",
    "pipeline",
    "seg_metrics",
    "segmentation",
    "synth",
    "tensor_io",
    "tracking",
    "__version__",
]
