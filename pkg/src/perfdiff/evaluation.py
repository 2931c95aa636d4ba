"""Evaluation metrics: accuracy, ROC/AUC, sensitivity sweep, cross matrix.

The ROC sweeps the decision threshold across every distinct predicted
probability (ties grouped into single steps) and always spans (0,0) to
(1,1); AUC integrates it with the trapezoidal rule. When the pair set
contains a single class the curve degenerates and AUC is NaN.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from perfdiff.ast import Ast
from perfdiff.classifier import decide, predict_pair
from perfdiff.errors import EvalError
from perfdiff.pairs import PairDataset
from perfdiff.train import ModelBundle


@dataclass
class Metrics:
    accuracy: float
    roc_points: list[tuple[float, float]]
    auc: float
    n_pairs: int


@dataclass
class SensitivityRow:
    min_delta_ms: float
    n_pairs: int
    accuracy: float     # NaN when no pairs survive the filter


@dataclass
class SensitivityTable:
    rows: list[SensitivityRow] = field(default_factory=list)


def _encode_submissions(bundle: ModelBundle, dataset: PairDataset,
                        jobs: int | None = None) -> list[np.ndarray]:
    subs = dataset.submissions
    if jobs is not None and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(lambda s: bundle.encode(s.ast), subs))
    return [bundle.encode(s.ast) for s in subs]


def pair_scores(bundle: ModelBundle, dataset: PairDataset,
                jobs: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Predicted probabilities and true labels, in dataset order."""
    if not dataset.pairs:
        raise EvalError("cannot evaluate an empty pair set")
    z = _encode_submissions(bundle, dataset, jobs)
    scores = np.array(
        [predict_pair(bundle.classifier, z[p.first], z[p.second]) for p in dataset.pairs]
    )
    labels = np.array([p.label for p in dataset.pairs])
    return scores, labels


def roc_curve(scores: np.ndarray, labels: np.ndarray) -> list[tuple[float, float]]:
    """(FPR, TPR) points from (0,0) to (1,1), one step per distinct score."""
    pos = int(labels.sum())
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        return [(0.0, 0.0), (1.0, 1.0)]
    order = np.argsort(-scores, kind="stable")
    points = [(0.0, 0.0)]
    tp = fp = 0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and scores[order[j]] == scores[order[i]]:
            tp += int(labels[order[j]] == 1)
            fp += int(labels[order[j]] == 0)
            j += 1
        points.append((fp / neg, tp / pos))
        i = j
    return points


def auc_trapezoid(points: list[tuple[float, float]]) -> float:
    area = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        area += (x1 - x0) * (y0 + y1) / 2.0
    return area


def metrics_from_scores(scores: np.ndarray, labels: np.ndarray,
                        threshold: float) -> Metrics:
    decisions = np.array([decide(float(s), threshold) for s in scores])
    accuracy = float((decisions == labels).mean())
    pos = int(labels.sum())
    points = roc_curve(scores, labels)
    auc = auc_trapezoid(points) if 0 < pos < len(labels) else float("nan")
    return Metrics(accuracy=accuracy, roc_points=points, auc=auc, n_pairs=len(labels))


def evaluate(bundle: ModelBundle, dataset: PairDataset,
             jobs: int | None = None) -> Metrics:
    scores, labels = pair_scores(bundle, dataset, jobs)
    return metrics_from_scores(scores, labels, bundle.config.threshold)


def default_deltas(dataset: PairDataset) -> list[float]:
    """Quantile grid {0, p25, p50, p75, p90} of absolute runtime deltas."""
    deltas = np.array(
        [abs(dataset.runtimes(p)[0] - dataset.runtimes(p)[1]) for p in dataset.pairs]
    )
    return [0.0] + [float(np.percentile(deltas, q)) for q in (25, 50, 75, 90)]


def sensitivity_sweep(bundle: ModelBundle, dataset: PairDataset,
                      deltas: list[float] | None = None) -> SensitivityTable:
    """Accuracy restricted to pairs whose runtime gap meets each delta."""
    if deltas is None:
        deltas = default_deltas(dataset)
    scores, labels = pair_scores(bundle, dataset)
    gaps = np.array(
        [abs(dataset.runtimes(p)[0] - dataset.runtimes(p)[1]) for p in dataset.pairs]
    )
    rows = []
    for delta in deltas:
        mask = gaps >= delta
        n = int(mask.sum())
        if n == 0:
            rows.append(SensitivityRow(min_delta_ms=delta, n_pairs=0, accuracy=float("nan")))
            continue
        decisions = np.array(
            [decide(float(s), bundle.config.threshold) for s in scores[mask]]
        )
        rows.append(
            SensitivityRow(
                min_delta_ms=delta,
                n_pairs=n,
                accuracy=float((decisions == labels[mask]).mean()),
            )
        )
    return SensitivityTable(rows=rows)


def cross_eval(bundles: dict[str, ModelBundle],
               datasets: dict[str, PairDataset]) -> tuple[list[str], list[str], np.ndarray]:
    """accuracy[i][j] = accuracy of model tag i on dataset tag j."""
    model_tags = sorted(bundles)
    data_tags = sorted(datasets)
    if not model_tags or not data_tags:
        raise EvalError("cross_eval needs at least one model and one dataset")
    matrix = np.zeros((len(model_tags), len(data_tags)))
    for i, mt in enumerate(model_tags):
        for j, dt in enumerate(data_tags):
            matrix[i, j] = evaluate(bundles[mt], datasets[dt]).accuracy
    return model_tags, data_tags, matrix


def write_cross_csv(path, model_tags: list[str], data_tags: list[str],
                    matrix: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["train\\test"] + data_tags)
        for i, mt in enumerate(model_tags):
            writer.writerow([mt] + [repr(float(v)) for v in matrix[i]])


def export_embeddings(bundle: ModelBundle, asts: list[Ast],
                      codes_csv_path, nodes_csv_path) -> None:
    """Dump per-tree encodings and per-kind embedding rows as CSV."""
    d = bundle.encoder.d
    with open(codes_csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_id"] + [f"z{i + 1}" for i in range(d)])
        for ast in asts:
            z = bundle.encode(ast)
            writer.writerow([ast.source_id] + [repr(float(v)) for v in z])

    table = bundle.embeddings
    kinds = bundle.vocab.kinds()
    if table.unknown_slot:
        kinds = kinds + ["<unknown>"]
    with open(nodes_csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["kind"] + [f"e{i + 1}" for i in range(table.dim)])
        for row, kind in enumerate(kinds):
            writer.writerow([kind] + [repr(float(v)) for v in table.vectors[row]])


def report_dict(metrics: Metrics, sensitivity: SensitivityTable | None = None,
                threshold: float = 0.5) -> dict:
    """JSON-ready evaluation report."""
    out = {
        "n_pairs": metrics.n_pairs,
        "accuracy": metrics.accuracy,
        "auc": None if math.isnan(metrics.auc) else metrics.auc,
        "threshold": threshold,
        "roc_points": [[x, y] for x, y in metrics.roc_points],
    }
    if sensitivity is not None:
        out["sensitivity"] = [
            {
                "min_delta_ms": r.min_delta_ms,
                "n_pairs": r.n_pairs,
                "accuracy": None if math.isnan(r.accuracy) else r.accuracy,
            }
            for r in sensitivity.rows
        ]
    return out
