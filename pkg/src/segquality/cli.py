"""Command-line pipeline: synth | extract | track | dataset | train | eval.

Every stage reads and writes on-disk artifacts, so stages are resumable and
their outputs are pure functions of the declared inputs and seeds.
"""

from __future__ import annotations

import dataclasses
import json

import click
import numpy as np

from .dataset import SplitSpec, read_dataset, split_indices, standardize, write_dataset
from .evaluation import run_experiment, run_time_series_experiment
from .meta_models import FAMILIES, TASKS, ModelSpec, train_model
from .pipeline import (
    apply_tracking,
    assemble_dataset,
    process_stream,
    read_feature_csv,
    read_tracking_csv,
    write_feature_csv,
    write_segment_csv,
    write_tracking_csv,
)
from .synth import SynthConfig, generate_stream
from .tensor_io import ManifestError, TensorFormatError, read_manifest
from .tracking import TrackingParams


def _fail(message: str) -> None:
    raise click.ClickException(message)


def _load_manifest(path):
    try:
        return read_manifest(path)
    except (ManifestError, TensorFormatError) as exc:
        _fail(str(exc))


def _tracking_options(func):
    for name, default, help_text in reversed(
        [
            ("c-near", 10.0, "same-frame grouping distance (pixels)"),
            ("c-over", 0.35, "overlap ratio threshold"),
            ("c-dist", 100.0, "center distance threshold (pixels)"),
            ("c-lin", 50.0, "regression match distance (pixels)"),
            ("window", 5, "frames kept for center regression"),
        ]
    ):
        func = click.option(
            f"--{name}", default=default, show_default=True, help=help_text
        )(func)
    return func


def _params_from(c_near, c_over, c_dist, c_lin, window) -> TrackingParams:
    try:
        return TrackingParams(
            c_near=c_near,
            c_over=c_over,
            c_dist=c_dist,
            c_lin=c_lin,
            history_window=window,
        )
    except ValueError as exc:
        _fail(str(exc))


@click.group()
@click.version_option()
def main():
    """Segment-wise quality prediction for video segmentation streams."""


@main.command("synth")
@click.option("--out", required=True, type=click.Path(), help="output directory")
@click.option("--config", type=click.Path(exists=True), help="JSON config file")
@click.option("--height", type=int, default=None)
@click.option("--width", type=int, default=None)
@click.option("--classes", "num_classes", type=int, default=None)
@click.option("--blocks", "num_blocks", type=int, default=None)
@click.option("--frames", "num_frames", type=int, default=None)
@click.option("--objects", "num_objects", type=int, default=None)
@click.option("--error-rate", type=float, default=None)
@click.option("--jitter", type=int, default=None)
@click.option("--flash-rate", type=float, default=None)
@click.option("--cell-noise", type=float, default=None)
@click.option("--seed", type=int, default=None)
def synth_cmd(out, config, **overrides):
    """Generate a deterministic synthetic stream."""
    values = {}
    if config:
        with open(config, "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in dataclasses.fields(SynthConfig)}
    unknown = set(values) - known
    if unknown:
        _fail(f"unknown synth config fields: {sorted(unknown)}")
    try:
        cfg = SynthConfig(**values)
        manifest = generate_stream(cfg, out)
    except ValueError as exc:
        _fail(str(exc))
    click.echo(
        f"wrote {manifest.num_frames} frames "
        f"({manifest.height}x{manifest.width}, c={manifest.num_classes}, "
        f"l={manifest.num_blocks}) to {out}"
    )


@main.command("extract")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="feature CSV path")
@click.option("--m", "num_stability", default=0, show_default=True, type=int)
@click.option("--tracking", "tracking_path", type=click.Path(exists=True))
@click.option("--segments-csv", type=click.Path(), help="also export segment table")
@click.option("--no-gt", is_flag=True, help="skip ground-truth quality targets")
def extract_cmd(manifest_path, out, num_stability, tracking_path, segments_csv, no_gt):
    """Compute per-segment dispersion/stability features (and quality targets)."""
    manifest = _load_manifest(manifest_path)
    if not 0 <= num_stability <= manifest.num_blocks - 1:
        _fail(
            f"--m must be in [0, {manifest.num_blocks - 1}] for this stream, "
            f"got {num_stability}"
        )
    rows_by_frame, _ = process_stream(
        manifest, num_stability, params=None, with_gt=not no_gt
    )
    if tracking_path:
        apply_tracking(rows_by_frame, read_tracking_csv(tracking_path))
    write_feature_csv(rows_by_frame, out, manifest.num_classes, num_stability)
    if segments_csv:
        from . import heatmaps, segmentation

        segments_by_frame = []
        track_table = read_tracking_csv(tracking_path) if tracking_path else {}
        for frame_index in range(manifest.num_frames):
            labels = heatmaps.predicted_labels(manifest.load_softmax(frame_index))
            segments = segmentation.connected_components(labels, frame_index)
            for seg in segments:
                entry = track_table.get((frame_index, seg.component_index))
                if entry:
                    seg.track_id = entry[0]
            segments_by_frame.append(segments)
        write_segment_csv(segments_by_frame, segments_csv)
    total = sum(len(rows) for rows in rows_by_frame)
    click.echo(f"wrote {total} segment rows to {out}")


@main.command("track")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path(), help="tracking CSV path")
@_tracking_options
def track_cmd(manifest_path, out, c_near, c_over, c_dist, c_lin, window):
    """Assign persistent track ids across the stream."""
    manifest = _load_manifest(manifest_path)
    params = _params_from(c_near, c_over, c_dist, c_lin, window)
    _, assignments = process_stream(manifest, 0, params=params, with_gt=False)
    write_tracking_csv(assignments, out)
    total = sum(len(a) for a in assignments)
    click.echo(f"wrote {total} assignments to {out}")


@main.command("dataset")
@click.option("--features", "features_path", required=True, type=click.Path(exists=True))
@click.option("--tracking", "tracking_path", type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="dataset CSV path")
@click.option("--header", "header_path", required=True, type=click.Path())
@click.option("--classes", "num_classes", required=True, type=int)
@click.option("--m", "num_stability", default=0, show_default=True, type=int)
@click.option("--history", "history", default=0, show_default=True, type=int)
def dataset_cmd(
    features_path, tracking_path, out, header_path, num_classes, num_stability, history
):
    """Assemble per-segment time-series records from feature and tracking CSVs."""
    try:
        rows_by_frame = read_feature_csv(features_path, num_classes, num_stability)
    except ValueError as exc:
        _fail(str(exc))
    if tracking_path:
        apply_tracking(rows_by_frame, read_tracking_csv(tracking_path))
    elif history > 0:
        _fail("--tracking is required when --history > 0")
    try:
        table = assemble_dataset(rows_by_frame, history, num_classes, num_stability)
    except ValueError as exc:
        _fail(str(exc))
    write_dataset(table, out, header_path)
    click.echo(f"wrote {len(table)} records to {out}")


@main.command("train")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--header", "header_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(), help="model JSON path")
@click.option("--family", type=click.Choice(FAMILIES), required=True)
@click.option("--task", type=click.Choice(TASKS), required=True)
@click.option("--m", "num_stability", default=0, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--run", default=0, show_default=True, type=int, help="split run index")
@click.option("--runs", default=10, show_default=True, type=int)
@click.option("--sample-size", default=None, type=int)
@click.option("--epochs", default=200, show_default=True, type=int)
def train_cmd(
    dataset_path,
    header_path,
    out,
    family,
    task,
    num_stability,
    seed,
    run,
    runs,
    sample_size,
    epochs,
):
    """Train one meta model on one deterministic split."""
    table = read_dataset(dataset_path, header_path)
    if num_stability > table.num_stability:
        _fail(
            f"--m must be in [0, {table.num_stability}] for this dataset, "
            f"got {num_stability}"
        )
    split_spec = SplitSpec(sample_size=sample_size, runs=runs, base_seed=seed)
    try:
        train_idx, val_idx, test_idx = split_indices(len(table), split_spec, run)
    except ValueError as exc:
        _fail(str(exc))
    flat = table.flat_features(num_stability)
    flat_tr, flat_va, _, _, _ = standardize(
        flat[train_idx], flat[val_idx], flat[test_idx]
    )
    y = table.labels if task == "classification" else table.iou
    spec = ModelSpec(family=family, task=task, seed=seed, max_epochs=epochs)
    if family == "shallow_lstm":
        steps = table.history + 1
        dim = table.slot_dim(num_stability)
        train_data = (
            flat_tr.reshape(-1, steps, dim)[:, ::-1, :].copy(),
            table.mask[train_idx][:, ::-1].copy(),
            y[train_idx],
        )
        val_data = (
            flat_va.reshape(-1, steps, dim)[:, ::-1, :].copy(),
            table.mask[val_idx][:, ::-1].copy(),
            y[val_idx],
        )
    else:
        train_data = (
            np.concatenate([flat_tr, table.mask[train_idx]], axis=1),
            y[train_idx],
        )
        val_data = (
            np.concatenate([flat_va, table.mask[val_idx]], axis=1),
            y[val_idx],
        )
    model = train_model(spec, train_data, val_data)
    model.save(out)
    click.echo(f"trained {family}/{task} on run {run}, saved to {out}")


@main.command("eval")
@click.option("--dataset", "dataset_path", type=click.Path(exists=True))
@click.option("--header", "header_path", type=click.Path(exists=True))
@click.option("--out-prefix", required=True, help="writes <prefix>.json and <prefix>.csv")
@click.option(
    "--families",
    default="gradient_boosting,linear",
    show_default=True,
    help="comma-separated model families",
)
@click.option("--tasks", default="classification,regression", show_default=True)
@click.option("--m-values", default="0", show_default=True, help="comma-separated")
@click.option(
    "--grid",
    type=click.Choice(["single-frame", "time-series"]),
    help="run the full experiment shape: all four families, both tasks, and "
    "the m sweep (single-frame) or the T sweep (time-series)",
)
@click.option(
    "--features",
    "features_path",
    type=click.Path(exists=True),
    help="feature CSV (time-series grid input)",
)
@click.option(
    "--tracking",
    "tracking_path",
    type=click.Path(exists=True),
    help="tracking CSV (time-series grid input)",
)
@click.option("--classes", "num_classes", type=int, help="time-series grid input")
@click.option("--m", "num_stability", type=int, help="time-series grid input")
@click.option(
    "--t-values",
    default="0,1,2,3,4,5,6,7,8,9,10",
    show_default=True,
    help="history lengths for the time-series grid",
)
@click.option("--runs", default=10, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--sample-size", default=None, type=int)
@click.option("--threads", default=1, show_default=True, type=int)
@click.option("--no-baselines", is_flag=True)
def eval_cmd(
    dataset_path,
    header_path,
    out_prefix,
    families,
    tasks,
    m_values,
    grid,
    features_path,
    tracking_path,
    num_classes,
    num_stability,
    t_values,
    runs,
    seed,
    sample_size,
    threads,
    no_baselines,
):
    """Run the experiment grid and emit a mean/std report (JSON and CSV)."""
    split_spec = SplitSpec(sample_size=sample_size, runs=runs, base_seed=seed)
    family_list = [f.strip() for f in families.split(",") if f.strip()]
    task_list = [t.strip() for t in tasks.split(",") if t.strip()]
    if grid is not None:
        family_list = list(FAMILIES)
        task_list = list(TASKS)
    for family in family_list:
        if family not in FAMILIES:
            _fail(f"unknown family {family!r}")
    for task in task_list:
        if task not in TASKS:
            _fail(f"unknown task {task!r}")

    if grid == "time-series":
        for flag, value in (
            ("--features", features_path),
            ("--tracking", tracking_path),
            ("--classes", num_classes),
            ("--m", num_stability),
        ):
            if value is None:
                _fail(f"{flag} is required for the time-series grid")
        try:
            t_list = [int(v) for v in t_values.split(",") if v.strip()]
            rows_by_frame = read_feature_csv(features_path, num_classes, num_stability)
            apply_tracking(rows_by_frame, read_tracking_csv(tracking_path))
            report = run_time_series_experiment(
                rows_by_frame,
                num_classes,
                num_stability,
                t_list,
                family_list,
                task_list,
                split_spec,
                workers=threads,
            )
        except ValueError as exc:
            _fail(str(exc))
    else:
        if dataset_path is None or header_path is None:
            _fail("--dataset and --header are required")
        table = read_dataset(dataset_path, header_path)
        if grid == "single-frame":
            if table.history != 0:
                _fail("the single-frame grid needs a dataset built with history 0")
            m_list = list(range(table.num_stability + 1))
        else:
            try:
                m_list = [int(v) for v in m_values.split(",") if v.strip()]
            except ValueError:
                _fail(f"--m-values must be integers, got {m_values!r}")
        try:
            report = run_experiment(
                table,
                family_list,
                task_list,
                m_list,
                split_spec,
                include_baselines=not no_baselines,
                workers=threads,
            )
        except ValueError as exc:
            _fail(str(exc))
    report.save_json(f"{out_prefix}.json")
    report.save_csv(f"{out_prefix}.csv")
    click.echo(f"wrote report to {out_prefix}.json and {out_prefix}.csv")


if __name__ == "__main__":
    main()
