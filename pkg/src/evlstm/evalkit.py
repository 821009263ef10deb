"""Pooled grid features, a nearest-centroid classifier, and scoring."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .surfaces import Grid, normalize_grid


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray
    source: str = ""
    label: str | None = None


def pool_features(grid: Grid, factor: int, source: str = "", label: str | None = None) -> FeatureVector:
    """Average-pool each channel over factor x factor blocks, flattened channels-last."""
    H, W, C = grid.values.shape
    if factor < 1 or H % factor or W % factor:
        raise ValueError(f"pooling factor {factor} must divide grid size {W}x{H}")
    v = grid.values.reshape(H // factor, factor, W // factor, factor, C).mean(axis=(1, 3))
    return FeatureVector(v.reshape(-1), source, label)


def _cosine_distance(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    return 1.0 - float(np.dot(a, b) / (na * nb))


@dataclass
class CentroidModel:
    classes: list[str]
    centroids: np.ndarray  # (n_classes, dim)

    def __post_init__(self):
        if len(self.classes) != len(self.centroids):
            raise ValueError("one centroid per class required")


def fit_centroids(features: Sequence[FeatureVector]) -> CentroidModel:
    if not features:
        raise ValueError("no training features")
    if any(f.label is None for f in features):
        raise ValueError("every training feature needs a label")
    classes = sorted({f.label for f in features})
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    dim = len(features[0].values)
    if any(len(f.values) != dim for f in features):
        raise ValueError("feature dimensionality differs within the dataset")
    centroids = np.stack(
        [np.mean([f.values for f in features if f.label == c], axis=0) for c in classes]
    )
    return CentroidModel(classes, centroids)


def predict(model: CentroidModel, feature: FeatureVector | np.ndarray) -> str:
    """Nearest centroid by cosine distance; ties go to the first class name."""
    v = feature.values if isinstance(feature, FeatureVector) else np.asarray(feature, dtype=np.float64)
    if len(v) != model.centroids.shape[1]:
        raise ValueError("feature dimensionality does not match the model")
    best, best_d = None, np.inf
    for name, c in zip(model.classes, model.centroids):  # classes are sorted
        d = _cosine_distance(v, c)
        if d < best_d:
            best, best_d = name, d
    return best


@dataclass
class MetricsReport:
    classes: list[str]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    support: dict[str, int]
    confusion: np.ndarray  # rows = true class, columns = predicted class
    macro: dict[str, float] = field(default_factory=dict)
    accuracy: float = 0.0

    def to_dict(self) -> dict:
        return {
            "classes": self.classes,
            "per_class": {
                c: {
                    "precision": self.precision[c],
                    "recall": self.recall[c],
                    "f1": self.f1[c],
                    "support": self.support[c],
                }
                for c in self.classes
            },
            "macro": self.macro,
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
        }

    def confusion_csv(self) -> str:
        lines = ["true\\pred," + ",".join(self.classes)]
        for c, row in zip(self.classes, self.confusion.tolist()):
            lines.append(c + "," + ",".join(str(v) for v in row))
        return "\n".join(lines) + "\n"


def compute_metrics(predictions: Sequence[str], labels: Sequence[str]) -> MetricsReport:
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels differ in length")
    if not labels:
        raise ValueError("no predictions to score")
    classes = sorted(set(labels) | set(predictions))
    idx = {c: k for k, c in enumerate(classes)}
    cm = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for p, t in zip(predictions, labels):
        cm[idx[t], idx[p]] += 1
    precision, recall, f1, support = {}, {}, {}, {}
    for c, k in idx.items():
        tp = cm[k, k]
        fp = cm[:, k].sum() - tp
        fn = cm[k, :].sum() - tp
        precision[c] = float(tp / (tp + fp)) if tp + fp else 0.0
        recall[c] = float(tp / (tp + fn)) if tp + fn else 0.0
        pr = precision[c] + recall[c]
        f1[c] = 2 * precision[c] * recall[c] / pr if pr else 0.0
        support[c] = int(cm[k, :].sum())
    macro = {
        "precision": float(np.mean(list(precision.values()))),
        "recall": float(np.mean(list(recall.values()))),
        "f1": float(np.mean(list(f1.values()))),
    }
    accuracy = float(np.trace(cm) / cm.sum())
    return MetricsReport(classes, precision, recall, f1, support, cm, macro, accuracy)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def invariance_score(grids_a: Sequence[Grid], grids_b: Sequence[Grid]) -> float:
    """Mean cosine similarity over all (a, b) pairs of MaxAbs-normalized grids."""
    if not grids_a or not grids_b:
        raise ValueError("both grid sets must be non-empty")
    shape = grids_a[0].values.shape
    if any(g.values.shape != shape for g in (*grids_a, *grids_b)):
        raise ValueError("grid shapes differ")
    va = [normalize_grid(g, "maxabs").values.reshape(-1) for g in grids_a]
    vb = [normalize_grid(g, "maxabs").values.reshape(-1) for g in grids_b]
    return float(np.mean([cosine_similarity(a, b) for a in va for b in vb]))
