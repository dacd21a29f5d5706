import numpy as np
import pytest

from segquality import heatmaps
from segquality.pipeline import process_stream
from segquality.synth import SynthConfig, generate_stream
from segquality.tensor_io import read_manifest


def _config(**overrides):
    base = dict(
        height=48,
        width=64,
        num_classes=8,
        num_blocks=4,
        num_frames=12,
        num_objects=5,
        seed=11,
    )
    base.update(overrides)
    return SynthConfig(**base)


def test_clean_stream_has_perfect_quality(tmp_path):
    config = _config(error_rate=0.0, jitter=0, flash_rate=0.0)
    manifest = generate_stream(config, tmp_path / "clean")
    rows_by_frame, _ = process_stream(manifest, 0)
    for rows in rows_by_frame:
        for row in rows:
            assert row.iou_adj == 1.0


def test_same_seed_is_byte_identical(tmp_path):
    config = _config(num_frames=4)
    m1 = generate_stream(config, tmp_path / "a")
    m2 = generate_stream(_config(num_frames=4), tmp_path / "b")
    for i in range(4):
        for kind in ("softmax", "cell_state", "ground_truth"):
            a = open(m1.path(i, kind), "rb").read()
            b = open(m2.path(i, kind), "rb").read()
            assert a == b
    assert (
        open(tmp_path / "a" / "manifest.json", "rb").read()
        == open(tmp_path / "b" / "manifest.json", "rb").read()
    )


def test_different_seed_differs(tmp_path):
    m1 = generate_stream(_config(num_frames=2), tmp_path / "a")
    m2 = generate_stream(_config(num_frames=2, seed=12), tmp_path / "b")
    assert open(m1.path(0, "softmax"), "rb").read() != open(
        m2.path(0, "softmax"), "rb"
    ).read()


def test_manifest_is_valid_and_loadable(tmp_path):
    generate_stream(_config(num_frames=3), tmp_path)
    manifest = read_manifest(tmp_path / "manifest.json")
    assert manifest.num_frames == 3
    probs = manifest.load_softmax(0)
    heatmaps.validate_softmax(probs)
    labels = manifest.load_ground_truth(0)
    assert set(np.unique(labels)) <= set(range(8))
    # at least background plus some objects
    assert len(np.unique(labels)) >= 3


def test_predicted_labels_match_generated_segments(tmp_path):
    # the softened softmax must still argmax to the intended label field
    config = _config(error_rate=0.3, jitter=1, num_frames=5)
    manifest = generate_stream(config, tmp_path)
    for i in range(manifest.num_frames):
        probs = manifest.load_softmax(i)
        labels = heatmaps.predicted_labels(probs)
        # every predicted class is a valid class and boundaries are softened
        ent, _, _ = heatmaps.dispersion_heatmaps(probs)
        assert labels.min() >= 0 and labels.max() < config.num_classes
        assert ent.max() > 0.1  # boundary softening leaves entropy signal


def test_error_rate_binomial_fraction(tmp_path):
    config = SynthConfig(
        height=48,
        width=64,
        num_classes=10,
        num_blocks=3,
        num_frames=70,
        num_objects=8,
        error_rate=0.2,
        jitter=0,
        flash_rate=0.0,
        seed=42,
    )
    manifest = generate_stream(config, tmp_path)
    rows_by_frame, _ = process_stream(manifest, 0)
    rows = [row for rows in rows_by_frame for row in rows]
    assert len(rows) >= 500
    zero_fraction = float(np.mean([row.iou_adj == 0.0 for row in rows]))
    # 8 of 9 segments per frame are objects, each failing with p 0.2
    assert abs(zero_fraction - 0.2 * 8 / 9) < 0.05
    assert abs(zero_fraction - 0.2) < 0.05


def test_flipped_segments_have_amplified_stability(tmp_path):
    config = SynthConfig(
        height=48,
        width=64,
        num_classes=10,
        num_blocks=6,
        num_frames=40,
        num_objects=6,
        error_rate=0.25,
        jitter=0,
        flash_rate=0.0,
        seed=5,
    )
    manifest = generate_stream(config, tmp_path)
    rows_by_frame, _ = process_stream(manifest, num_stability=manifest.num_blocks - 1)
    from segquality.seg_metrics import feature_names

    names = feature_names(config.num_classes, manifest.num_blocks - 1)
    stab_idx = names.index("cellstab1_mean")
    err, good = [], []
    for rows in rows_by_frame:
        for row in rows:
            if row.class_id == 0:
                continue  # background
            (err if row.iou_adj == 0.0 else good).append(row.features[stab_idx])
    assert len(err) > 20 and len(good) > 20
    assert float(np.mean(err)) > float(np.mean(good))
    # planted gain of 3x: demand a clear margin, not just an inequality
    assert float(np.mean(err)) > 1.5 * float(np.mean(good))


def test_stationary_zero_corruption_stream_is_constant(tmp_path):
    # confidence ranges pinned to a point so the per-frame draws are constant
    config = _config(
        velocity_min=0.0,
        velocity_max=0.0,
        error_rate=0.0,
        jitter=0,
        flash_rate=0.0,
        cell_noise=0.0,
        correct_confidence=(0.9, 0.9),
        num_frames=6,
    )
    manifest = generate_stream(config, tmp_path)
    first = {
        kind: open(manifest.path(0, kind), "rb").read()
        for kind in ("softmax", "cell_state", "ground_truth")
    }
    for i in range(1, 6):
        for kind, payload in first.items():
            assert open(manifest.path(i, kind), "rb").read() == payload


def test_config_validation():
    with pytest.raises(ValueError, match="error_rate"):
        _config(error_rate=1.5)
    with pytest.raises(ValueError, match="num_classes"):
        _config(num_classes=1)
    with pytest.raises(ValueError, match="velocity"):
        _config(velocity_min=2.0, velocity_max=1.0)
