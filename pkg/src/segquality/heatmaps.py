"""Pixel-wise dispersion heatmaps and cell-state stability heatmaps."""

from __future__ import annotations

import numpy as np

SOFTMAX_TOL = 1e-5


def validate_softmax(probs: np.ndarray, tol: float = SOFTMAX_TOL) -> None:
    """Check that a (H, W, c) tensor is a per-pixel probability distribution."""
    probs = np.asarray(probs)
    if probs.ndim != 3:
        raise ValueError(f"softmax frame must be 3-D, got ndim={probs.ndim}")
    if probs.shape[2] < 2:
        raise ValueError(f"softmax frame needs >= 2 classes, got {probs.shape[2]}")
    if probs.min() < 0:
        raise ValueError("softmax frame has negative probabilities")
    sums = probs.sum(axis=2)
    err = np.abs(sums - 1.0).max()
    if err > tol:
        raise ValueError(f"softmax rows deviate from sum 1 by {err:.3g} (tol {tol:g})")


def renormalize(probs: np.ndarray) -> np.ndarray:
    """Rescale each pixel's probabilities to sum to exactly 1."""
    probs = np.asarray(probs, dtype=np.float64)
    return probs / probs.sum(axis=2, keepdims=True)


def predicted_labels(probs: np.ndarray) -> np.ndarray:
    """Per-pixel argmax class, ties broken by the lowest class index."""
    return np.argmax(np.asarray(probs), axis=2).astype(np.int32)


def dispersion_heatmaps(probs: np.ndarray):
    """Entropy, variation ratio, and probability margin heatmaps.

    Inputs are validated and renormalized per pixel.  Entropy uses the natural
    log with a 1/log(c) normalizer and the convention 0*log(0) = 0; all three
    outputs lie in [0, 1].
    """
    validate_softmax(probs)
    p = renormalize(probs)
    num_classes = p.shape[2]
    plogp = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)), 0.0)
    entropy = np.clip(-plogp.sum(axis=2) / np.log(num_classes), 0.0, 1.0)
    top = np.sort(p, axis=2)
    largest = top[..., -1]
    second = top[..., -2]
    variation = 1.0 - largest
    margin = np.clip(1.0 - largest + second, 0.0, 1.0)
    return entropy, variation, margin


def mean_cell_state(raw_block_state: np.ndarray) -> np.ndarray:
    """Reduce a (H, W, F) per-block feature tensor to its per-pixel mean."""
    raw = np.asarray(raw_block_state, dtype=np.float64)
    if raw.ndim != 3 or raw.shape[2] < 1:
        raise ValueError("raw block state must have shape (H, W, F) with F >= 1")
    return raw.mean(axis=2)


def build_cell_state_stack(blocks) -> np.ndarray:
    """Build a (H, W, l) stack of per-block mean states.

    Accepts either an already reduced (H, W, l) tensor or a sequence of raw
    (H, W, F) per-block tensors; both produce the same stack.
    """
    if isinstance(blocks, np.ndarray) and blocks.ndim == 3:
        stack = np.asarray(blocks, dtype=np.float64)
    else:
        stack = np.stack([mean_cell_state(b) for b in blocks], axis=2)
    if stack.shape[2] < 2:
        raise ValueError(f"cell state stack needs >= 2 blocks, got {stack.shape[2]}")
    if not np.isfinite(stack).all():
        raise ValueError("cell state stack has non-finite values")
    return stack


def stability_heatmaps(stack: np.ndarray) -> list[np.ndarray]:
    """Absolute difference between the first block's mean state and each later one."""
    stack = build_cell_state_stack(stack)
    first = stack[..., 0]
    return [np.abs(first - stack[..., j]) for j in range(1, stack.shape[2])]
