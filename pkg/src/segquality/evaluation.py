"""Evaluation metrics, baselines, and the multi-split experiment harness."""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import MetaRecordTable, SplitSpec, split_indices, standardize
from .meta_models import ModelSpec, train_model
from .seg_metrics import ENTROPY_MEAN_INDEX

CLASSIFICATION_METRICS = ("acc", "auroc")
REGRESSION_METRICS = ("sigma", "r2")
HIGHER_IS_BETTER = {"acc": True, "auroc": True, "sigma": False, "r2": True}


def accuracy(labels, scores, threshold: float = 0.5) -> float:
    """Fraction of (score >= threshold) decisions that equal the labels."""
    labels = np.asarray(labels)
    scores = np.asarray(scores)
    if len(labels) != len(scores) or len(labels) == 0:
        raise ValueError("labels and scores must be equal-length and non-empty")
    return float(((scores >= threshold).astype(int) == labels).mean())


def auroc(labels, scores) -> float:
    """Probability a random positive outscores a random negative (ties 0.5).

    Rank-statistic formulation; equals the area under the threshold-sweep ROC
    curve with trapezoidal interpolation.
    """
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs at least one positive and one negative")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average ranks within tie groups (1-based)
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [len(scores)]))
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat(0.5 * (starts + 1 + ends), ends - starts)
    u_stat = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u_stat / (n_pos * n_neg))


def roc_points(labels, scores):
    """ROC curve points for external plotting: (fpr, tpr, threshold) rows.

    One point per distinct score, swept from the highest threshold down, with
    the (0, 0) start point; trapezoidal area under these points equals auroc.
    """
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("roc_points needs at least one positive and one negative")
    order = np.argsort(-scores, kind="mergesort")
    sorted_labels = labels[order]
    sorted_scores = scores[order]
    tp = np.cumsum(sorted_labels)
    fp = np.cumsum(~sorted_labels)
    last_of_group = np.append(sorted_scores[1:] != sorted_scores[:-1], True)
    rows = [(0.0, 0.0, float("inf"))]
    for i in np.flatnonzero(last_of_group):
        rows.append((fp[i] / n_neg, tp[i] / n_pos, float(sorted_scores[i])))
    return rows


def r_squared(targets, predictions) -> float:
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if len(targets) < 2:
        raise ValueError("r_squared needs at least two targets")
    ss_tot = float(((targets - targets.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ValueError("r_squared undefined for zero target variance")
    ss_res = float(((targets - predictions) ** 2).sum())
    return 1.0 - ss_res / ss_tot


def regression_sigma(targets, predictions) -> float:
    """Root mean squared residual."""
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if len(targets) == 0:
        raise ValueError("regression_sigma needs at least one pair")
    return float(np.sqrt(np.mean((targets - predictions) ** 2)))


def naive_baseline_accuracy(n_total: int, n_iou_zero: int) -> float:
    """Best accuracy achievable by random scoring: the majority-class rate."""
    if n_total < 1 or not 0 <= n_iou_zero <= n_total:
        raise ValueError("need 0 <= n_iou_zero <= n_total and n_total >= 1")
    return max(n_iou_zero, n_total - n_iou_zero) / n_total


@dataclass
class EvalCell:
    """Mean and std of every metric for one (family, task, m, T) grid point."""

    family: str
    task: str
    num_stability: int
    history: int
    metrics: dict[str, tuple[float, float]]
    per_run: dict[str, list[float]] = field(default_factory=dict)

    def row(self) -> dict:
        out = {
            "family": self.family,
            "task": self.task,
            "m": self.num_stability,
            "T": self.history,
        }
        for name, (mean, std) in self.metrics.items():
            out[f"{name}_mean"] = mean
            out[f"{name}_std"] = std
        return out


@dataclass
class EvalReport:
    cells: list[EvalCell]
    baselines: list[EvalCell]
    best: dict[str, dict] = field(default_factory=dict)

    def annotate_best(self) -> None:
        """Best m (and T) per (family, task, metric), as in the result tables."""
        self.best = {}
        for cell in self.cells:
            for metric, (mean, _) in cell.metrics.items():
                key = f"{cell.family}/{cell.task}/{metric}"
                current = self.best.get(key)
                better = current is None or (
                    mean > current["mean"]
                    if HIGHER_IS_BETTER[metric]
                    else mean < current["mean"]
                )
                if better:
                    self.best[key] = {
                        "mean": mean,
                        "m": cell.num_stability,
                        "T": cell.history,
                    }

    def to_dict(self) -> dict:
        return {
            "format": "segquality-report/1",
            "cells": [cell.row() for cell in self.cells],
            "baselines": [cell.row() for cell in self.baselines],
            "best": self.best,
        }

    def save_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def save_csv(self, path) -> None:
        rows = [cell.row() for cell in self.cells + self.baselines]
        columns = ["family", "task", "m", "T"]
        metric_cols = sorted({k for row in rows for k in row if k not in columns})
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(columns + metric_cols)
            for row in rows:
                writer.writerow(
                    [row.get(c, "") for c in columns]
                    + [repr(row[c]) if c in row else "" for c in metric_cols]
                )

    def find(self, family: str, task: str, num_stability: int, history: int) -> EvalCell:
        for cell in self.cells + self.baselines:
            if (
                cell.family == family
                and cell.task == task
                and cell.num_stability == num_stability
                and cell.history == history
            ):
                return cell
        raise KeyError(f"no cell for {family}/{task}/m={num_stability}/T={history}")


def _prepare_split(table: MetaRecordTable, num_stability: int, spec: SplitSpec, run: int):
    """Split, standardize with train statistics, and lay out model inputs."""
    train_idx, val_idx, test_idx = split_indices(len(table), spec, run)
    flat = table.flat_features(num_stability)
    flat_tr, flat_va, flat_te, mean, std = standardize(
        flat[train_idx], flat[val_idx], flat[test_idx]
    )
    mask = table.mask
    steps = table.history + 1
    dim = table.slot_dim(num_stability)

    def pack(flat_x, idx):
        with_mask = np.concatenate([flat_x, mask[idx]], axis=1)
        seq = flat_x.reshape(len(idx), steps, dim)[:, ::-1, :].copy()
        seq_mask = mask[idx][:, ::-1].copy()
        return with_mask, seq, seq_mask

    packed = {
        "train": pack(flat_tr, train_idx),
        "val": pack(flat_va, val_idx),
        "test": pack(flat_te, test_idx),
    }
    targets = {
        name: (table.labels[idx], table.iou[idx])
        for name, idx in (("train", train_idx), ("val", val_idx), ("test", test_idx))
    }
    return packed, targets


def _train_eval_once(
    table: MetaRecordTable,
    family: str,
    task: str,
    num_stability: int,
    spec: SplitSpec,
    run: int,
    model_spec: ModelSpec,
    feature_slice: slice | None = None,
) -> dict[str, float]:
    packed, targets = _prepare_split(table, num_stability, spec, run)

    def inputs(part):
        with_mask, seq, seq_mask = packed[part]
        labels, iou = targets[part]
        y = labels if task == "classification" else iou
        if family == "shallow_lstm":
            return (seq, seq_mask, y)
        x = with_mask if feature_slice is None else with_mask[:, feature_slice]
        return (x, y)

    model = train_model(model_spec, inputs("train"), inputs("val"))
    test_in = inputs("test")
    if family == "shallow_lstm":
        scores = model.predict(test_in[0], test_in[1])
    else:
        scores = model.predict(test_in[0])
    labels, iou = targets["test"]
    if task == "classification":
        return {"acc": accuracy(labels, scores), "auroc": auroc(labels, scores)}
    return {"sigma": regression_sigma(iou, scores), "r2": r_squared(iou, scores)}


def _summarize(per_run: dict[str, list[float]]) -> dict[str, tuple[float, float]]:
    return {
        name: (float(np.mean(vals)), float(np.std(vals)))
        for name, vals in per_run.items()
    }


def _grid_job(args):
    table, family, task, m, t_hist, spec, run, model_spec = args
    metrics = _train_eval_once(table, family, task, m, spec, run, model_spec)
    return (family, task, m, t_hist, run, metrics)


def run_experiment(
    table: MetaRecordTable,
    families,
    tasks,
    m_values,
    split_spec: SplitSpec,
    base_model_spec: ModelSpec | None = None,
    include_baselines: bool = True,
    workers: int = 1,
) -> EvalReport:
    """Evaluate the (family, task, m) grid over all split runs.

    The table's history length T is fixed by its construction; sweeping T means
    building tables for each T and calling this per table.  Results are
    averaged over `split_spec.runs` deterministic splits.
    """
    for m in m_values:
        if not 0 <= m <= table.num_stability:
            raise ValueError(
                f"m={m} outside [0, {table.num_stability}] for this dataset"
            )
    jobs = []
    for family in families:
        for task in tasks:
            for m in m_values:
                for run in range(split_spec.runs):
                    model_spec = _make_spec(base_model_spec, family, task, run)
                    jobs.append(
                        (table, family, task, m, table.history, split_spec, run, model_spec)
                    )
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_grid_job, jobs))
    else:
        outcomes = [_grid_job(job) for job in jobs]

    cells: dict[tuple, EvalCell] = {}
    for family, task, m, t_hist, run, metrics in outcomes:
        key = (family, task, m, t_hist)
        cell = cells.get(key)
        if cell is None:
            cell = EvalCell(family, task, m, t_hist, {}, {})
            cells[key] = cell
        for name, value in metrics.items():
            cell.per_run.setdefault(name, []).append(value)
    ordered = [cells[key] for key in sorted(cells)]
    for cell in ordered:
        cell.metrics = _summarize(cell.per_run)

    baselines = []
    if include_baselines:
        baselines.append(naive_baseline_cell(table))
        if table.history == 0:
            baselines.extend(
                entropy_baseline(table, split_spec, base_model_spec, tasks)
            )
    report = EvalReport(cells=ordered, baselines=baselines)
    report.annotate_best()
    return report


def run_time_series_experiment(
    rows_by_frame,
    num_classes: int,
    num_stability: int,
    t_values,
    families,
    tasks,
    split_spec: SplitSpec,
    base_model_spec: ModelSpec | None = None,
    workers: int = 1,
) -> EvalReport:
    """Sweep the history length: one record table per T, merged into one report.

    Each T is evaluated at m = num_stability plus the m = 0 baseline cell, so
    the report carries both the proposed metric set and the plain time-series
    baseline per history length.
    """
    from .dataset import build_time_series

    m_values = (0, num_stability) if num_stability > 0 else (0,)
    cells: list[EvalCell] = []
    baselines: list[EvalCell] = []
    for history in t_values:
        table = build_time_series(
            rows_by_frame, history, num_classes, num_stability
        )
        report = run_experiment(
            table,
            families,
            tasks,
            m_values,
            split_spec,
            base_model_spec=base_model_spec,
            include_baselines=(history == 0),
            workers=workers,
        )
        cells.extend(report.cells)
        baselines.extend(report.baselines)
    merged = EvalReport(cells=cells, baselines=baselines)
    merged.annotate_best()
    return merged


def _make_spec(base: ModelSpec | None, family: str, task: str, run: int) -> ModelSpec:
    if base is None:
        return ModelSpec(family=family, task=task, seed=run)
    return replace(base, family=family, task=task, seed=base.seed + run)


def naive_baseline_cell(table: MetaRecordTable) -> EvalCell:
    acc = naive_baseline_accuracy(len(table), int(table.labels.sum()))
    return EvalCell(
        family="naive",
        task="classification",
        num_stability=0,
        history=table.history,
        metrics={"acc": (acc, 0.0), "auroc": (0.5, 0.0)},
    )


def entropy_baseline(
    table: MetaRecordTable,
    split_spec: SplitSpec,
    base_model_spec: ModelSpec | None = None,
    tasks=("classification", "regression"),
) -> list[EvalCell]:
    """Single-frame gradient boosting on the mean segment entropy alone."""
    if table.history != 0:
        raise ValueError("entropy baseline expects a single-frame (T=0) dataset")
    column = slice(ENTROPY_MEAN_INDEX, ENTROPY_MEAN_INDEX + 1)
    cells = []
    for task in tasks:
        per_run: dict[str, list[float]] = {}
        for run in range(split_spec.runs):
            model_spec = _make_spec(base_model_spec, "gradient_boosting", task, run)
            metrics = _train_eval_once(
                table,
                "gradient_boosting",
                task,
                0,
                split_spec,
                run,
                model_spec,
                feature_slice=column,
            )
            for name, value in metrics.items():
                per_run.setdefault(name, []).append(value)
        cells.append(
            EvalCell(
                family="entropy_gb",
                task=task,
                num_stability=0,
                history=0,
                metrics=_summarize(per_run),
                per_run=per_run,
            )
        )
    return cells
