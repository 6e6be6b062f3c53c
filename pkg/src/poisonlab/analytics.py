"""Robustness metrics, embedding classifiers, and dataset-integrity checks.

Covers the clean-vs-poisoned comparison (accuracy, flip rates, macro
precision/recall/F1), a softmax regression validator trained on embeddings,
k-means topic clustering, lexicon polarity scoring, and a 2-D spectral
projection used for plot data. Abstentions are excluded from every metric
denominator and counted separately.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import LABEL_CODES, Dataset, Sentiment
from .embeddings import EmbeddingMatrix
from .icl import Prediction
from .seeding import numpy_rng
from .spectral import SpectralConfig, top_directions


class MetricError(ValueError):
    pass


SENTIMENTS = tuple(LABEL_CODES)


@dataclass(frozen=True)
class ConfusionTally:
    counts: tuple[tuple[int, ...], ...]  # [true][predicted]
    abstentions: int = 0

    @property
    def total(self) -> int:
        return sum(sum(row) for row in self.counts)


def tally_predictions(predictions: list[Prediction], truth: Dataset) -> ConfusionTally:
    counts = [[0, 0, 0] for _ in SENTIMENTS]
    abstentions = 0
    for prediction in predictions:
        true_label = truth.by_id(prediction.target_id).label
        if true_label is None:
            raise MetricError(f"target {prediction.target_id} has no ground-truth label")
        if prediction.abstained:
            abstentions += 1
            continue
        counts[LABEL_CODES[true_label]][LABEL_CODES[prediction.label]] += 1
    return ConfusionTally(counts=tuple(tuple(row) for row in counts), abstentions=abstentions)


def accuracy(predictions: list[Prediction], truth: Dataset) -> float:
    """Fraction of non-abstained predictions matching the ground truth."""
    correct = 0
    evaluated = 0
    for prediction in predictions:
        true_label = truth.by_id(prediction.target_id).label
        if true_label is None:
            raise MetricError(f"target {prediction.target_id} has no ground-truth label")
        if prediction.abstained:
            continue
        evaluated += 1
        if prediction.label is true_label:
            correct += 1
    if not evaluated:
        raise MetricError("no evaluated predictions (all abstained)")
    return correct / evaluated


def flip_rate(
    clean: list[Prediction], poisoned: list[Prediction]
) -> tuple[float, dict[Sentiment, float]]:
    """Fraction of common targets whose label changed, overall and keyed by
    the clean prediction's class. Pairs with an abstention on either side
    are excluded."""
    poisoned_by_id = {p.target_id: p for p in poisoned}
    flips = 0
    evaluated = 0
    per_class_flips = {s: 0 for s in SENTIMENTS}
    per_class_counts = {s: 0 for s in SENTIMENTS}
    for c in clean:
        p = poisoned_by_id.get(c.target_id)
        if p is None or c.abstained or p.abstained:
            continue
        evaluated += 1
        per_class_counts[c.label] += 1
        if c.label is not p.label:
            flips += 1
            per_class_flips[c.label] += 1
    if not evaluated:
        raise MetricError("no common evaluated prediction pairs")
    per_class = {
        s: (per_class_flips[s] / per_class_counts[s]) if per_class_counts[s] else 0.0
        for s in SENTIMENTS
    }
    return flips / evaluated, per_class


def macro_prf(tally: ConfusionTally) -> tuple[float, float, float]:
    """Unweighted macro precision/recall/F1 over the three classes.

    Zero denominators contribute 0, so degenerate classes still count in
    the mean.
    """
    if tally.total == 0:
        raise MetricError("empty confusion tally")
    precisions: list[float] = []
    recalls: list[float] = []
    f1s: list[float] = []
    for idx in range(len(SENTIMENTS)):
        tp = tally.counts[idx][idx]
        fp = sum(tally.counts[row][idx] for row in range(len(SENTIMENTS))) - tp
        fn = sum(tally.counts[idx]) - tp
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        precisions.append(precision)
        recalls.append(recall)
        f1s.append(f1)
    k = len(SENTIMENTS)
    return sum(precisions) / k, sum(recalls) / k, sum(f1s) / k


@dataclass(frozen=True)
class RobustnessReport:
    accuracy_clean: float
    accuracy_poisoned: float
    flip_rate: float
    per_class_flip: dict[Sentiment, float]
    macro_clean: tuple[float, float, float]
    macro_poisoned: tuple[float, float, float]
    abstentions_clean: int = 0
    abstentions_poisoned: int = 0

    @property
    def accuracy_drop(self) -> float:
        return self.accuracy_clean - self.accuracy_poisoned

    @property
    def poisoning_success_rate(self) -> float:
        # same quantity as flip_rate, published under a second name
        return self.flip_rate


def build_robustness_report(
    clean: list[Prediction], poisoned: list[Prediction], truth: Dataset
) -> RobustnessReport:
    overall, per_class = flip_rate(clean, poisoned)
    tally_clean = tally_predictions(clean, truth)
    tally_poisoned = tally_predictions(poisoned, truth)
    return RobustnessReport(
        accuracy_clean=accuracy(clean, truth),
        accuracy_poisoned=accuracy(poisoned, truth),
        flip_rate=overall,
        per_class_flip=per_class,
        macro_clean=macro_prf(tally_clean),
        macro_poisoned=macro_prf(tally_poisoned),
        abstentions_clean=tally_clean.abstentions,
        abstentions_poisoned=tally_poisoned.abstentions,
    )


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray  # (3, d)
    bias: np.ndarray  # (3,)
    loss_trace: tuple[float, ...]

    def predict(self, data: np.ndarray) -> np.ndarray:
        return np.argmax(data @ self.weights.T + self.bias, axis=1)

    def training_accuracy(self, data: np.ndarray, codes: np.ndarray) -> float:
        return float(np.mean(self.predict(data) == codes))


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def logreg_loss_and_grads(
    weights: np.ndarray,
    bias: np.ndarray,
    data: np.ndarray,
    codes: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus l2*||W||^2/2, with analytic gradients."""
    n = data.shape[0]
    probs = _softmax(data @ weights.T + bias)
    log_likelihood = -np.log(probs[np.arange(n), codes] + 1e-300).mean()
    with np.errstate(over="ignore"):
        # overflow surfaces as a non-finite loss, which train_logreg rejects
        loss = log_likelihood + 0.5 * l2 * float(np.sum(weights**2))
    delta = probs.copy()
    delta[np.arange(n), codes] -= 1.0
    delta /= n
    grad_w = delta.T @ data + l2 * weights
    grad_b = delta.sum(axis=0)
    return float(loss), grad_w, grad_b


def train_logreg(
    embeddings: EmbeddingMatrix,
    labels: list[Sentiment],
    epochs: int = 500,
    step: float = 0.5,
    l2: float = 1e-4,
    seed: int = 0,
) -> LogRegModel:
    """Full-batch gradient descent on a three-class softmax regression."""
    if len(labels) != embeddings.n:
        raise MetricError(f"{len(labels)} labels for {embeddings.n} rows")
    if embeddings.n < 3 or len(set(labels)) < len(SENTIMENTS):
        raise MetricError("need at least 3 examples covering all classes")
    data = embeddings.data
    codes = np.array([LABEL_CODES[label] for label in labels], dtype=np.int64)
    rng = numpy_rng(seed, "logreg_init")
    weights = 0.01 * rng.standard_normal((len(SENTIMENTS), embeddings.d))
    bias = np.zeros(len(SENTIMENTS), dtype=np.float64)
    trace: list[float] = []
    for _ in range(epochs):
        loss, grad_w, grad_b = logreg_loss_and_grads(weights, bias, data, codes, l2)
        if not np.isfinite(loss):
            raise MetricError("divergence; reduce step")
        trace.append(loss)
        weights = weights - step * grad_w
        bias = bias - step * grad_b
    return LogRegModel(weights=weights, bias=bias, loss_trace=tuple(trace))


@dataclass(frozen=True)
class ClusterAssignment:
    centroids: np.ndarray  # (k, d)
    labels: np.ndarray  # (n,)
    sizes: tuple[int, ...]
    inertia: float
    iterations: int
    inertia_trace: tuple[float, ...] = ()


def _kmeans_pp_init(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = data.shape[0]
    centroids = np.empty((k, data.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centroids[0] = data[first]
    chosen = {first}
    sq_dist = np.sum((data - centroids[0]) ** 2, axis=1)
    for i in range(1, k):
        total = sq_dist.sum()
        if total <= 0.0:
            # remaining points coincide with chosen centroids: pick any unused
            candidates = [j for j in range(n) if j not in chosen]
            pick = candidates[int(rng.integers(len(candidates)))]
        else:
            pick = int(rng.choice(n, p=sq_dist / total))
        centroids[i] = data[pick]
        chosen.add(pick)
        sq_dist = np.minimum(sq_dist, np.sum((data - centroids[i]) ** 2, axis=1))
    return centroids


def kmeans(
    embeddings: EmbeddingMatrix, k: int, seed: int = 0, max_iters: int = 300
) -> ClusterAssignment:
    """Lloyd iterations from a k-means++ start until assignments stabilize.

    An emptied cluster is reseeded to the point currently farthest from its
    assigned centroid.
    """
    data = embeddings.data
    n = data.shape[0]
    if k > n:
        raise MetricError(f"k={k} exceeds {n} rows")
    if k < 1:
        raise MetricError("k must be >= 1")
    rng = numpy_rng(seed, "kmeans_init")
    centroids = _kmeans_pp_init(data, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    iterations = 0
    trace: list[float] = []
    for iterations in range(1, max_iters + 1):
        new_labels, sq_dists = _kernels.nearest_centroids(data, centroids)
        for cluster in range(k):
            members = new_labels == cluster
            if not members.any():
                worst = int(np.argmax(sq_dists))
                centroids[cluster] = data[worst]
                new_labels[worst] = cluster
                sq_dists[worst] = 0.0
        trace.append(float(sq_dists.sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for cluster in range(k):
            members = labels == cluster
            centroids[cluster] = data[members].mean(axis=0)
    _, final_sq = _kernels.nearest_centroids(data, centroids)
    sizes = tuple(int(np.sum(labels == cluster)) for cluster in range(k))
    return ClusterAssignment(
        centroids=centroids,
        labels=labels,
        sizes=sizes,
        inertia=float(final_sq.sum()),
        iterations=iterations,
        inertia_trace=tuple(trace),
    )


class PolarityLexicon:
    """Signed word scores in [-1, 1] for lexicon polarity scoring."""

    def __init__(self, entries: dict[str, float]):
        if not entries:
            raise MetricError("empty polarity lexicon")
        for word, value in entries.items():
            if not -1.0 <= value <= 1.0:
                raise MetricError(f"polarity for {word!r} out of [-1,1]: {value}")
        self._entries = dict(entries)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, word: str) -> float | None:
        return self._entries.get(word)

    @classmethod
    def load(cls, path: str | Path) -> "PolarityLexicon":
        with open(path, encoding="utf-8") as fh:
            return cls({str(k): float(v) for k, v in json.load(fh).items()})


def bundled_polarity_lexicon() -> PolarityLexicon:
    path = Path(__file__).parent / "data" / "polarity_lexicon.json"
    return PolarityLexicon.load(path)


def text_polarity(text: str, lexicon: PolarityLexicon) -> float:
    values = [v for v in (lexicon.get(token.lower()) for token in text.split()) if v is not None]
    if not values:
        return 0.0
    return sum(values) / len(values)


def polarity_score(texts: list[str], lexicon: PolarityLexicon) -> float:
    """Mean per-text polarity over the whole collection."""
    if not texts:
        return 0.0
    return sum(text_polarity(text, lexicon) for text in texts) / len(texts)


def project_2d(embeddings: EmbeddingMatrix, seed: int = 0) -> np.ndarray:
    """Coordinates of every row on the top-2 singular directions of the input.

    The input is projected as given; normalize it first if the plot should
    match the defense's scored geometry.
    """
    if embeddings.n < 3:
        raise MetricError(f"need at least 3 rows to project, got {embeddings.n}")
    config = SpectralConfig(seed=seed)
    directions = top_directions(embeddings, 2, config)
    basis = np.stack([d.vector for d in directions], axis=1)
    return embeddings.data @ basis


ROBUSTNESS_HEADER = ["model", "accuracy", "precision", "recall", "f1"]


def write_robustness_csv(
    report: RobustnessReport, path: str | Path
) -> None:
    """Model-by-metrics table for the clean and poisoned prediction runs."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ROBUSTNESS_HEADER)
        for name, acc, macro in (
            ("ICL (Clean)", report.accuracy_clean, report.macro_clean),
            ("ICL (Poisoned)", report.accuracy_poisoned, report.macro_poisoned),
        ):
            writer.writerow([name] + [f"{v:.6f}" for v in (acc, *macro)])


def robustness_to_dict(report: RobustnessReport) -> dict:
    return {
        "accuracy_clean": report.accuracy_clean,
        "accuracy_poisoned": report.accuracy_poisoned,
        "accuracy_drop": report.accuracy_drop,
        "flip_rate": report.flip_rate,
        "poisoning_success_rate": report.poisoning_success_rate,
        "per_class_flip": {s.value: report.per_class_flip[s] for s in SENTIMENTS},
        "macro_clean": dict(zip(("precision", "recall", "f1"), report.macro_clean)),
        "macro_poisoned": dict(zip(("precision", "recall", "f1"), report.macro_poisoned)),
        "abstentions_clean": report.abstentions_clean,
        "abstentions_poisoned": report.abstentions_poisoned,
    }


def robustness_from_dict(payload: dict) -> RobustnessReport:
    return RobustnessReport(
        accuracy_clean=payload["accuracy_clean"],
        accuracy_poisoned=payload["accuracy_poisoned"],
        flip_rate=payload["flip_rate"],
        per_class_flip={s: payload["per_class_flip"][s.value] for s in SENTIMENTS},
        macro_clean=tuple(payload["macro_clean"][k] for k in ("precision", "recall", "f1")),
        macro_poisoned=tuple(payload["macro_poisoned"][k] for k in ("precision", "recall", "f1")),
        abstentions_clean=payload.get("abstentions_clean", 0),
        abstentions_poisoned=payload.get("abstentions_poisoned", 0),
    )


def write_robustness_json(report: RobustnessReport, path: str | Path, extra: dict | None = None) -> None:
    payload = robustness_to_dict(report)
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_cluster_csv(sizes: tuple[int, ...], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cluster", "size"])
        for cluster, size in enumerate(sizes):
            writer.writerow([cluster, size])


def write_polarity_json(avg_polarity: float, n_texts: int, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"avg_polarity": avg_polarity, "n_texts": n_texts}, fh, indent=2)
        fh.write("\n")


def write_plot_csv(
    row_ids: tuple[int, ...], coords: np.ndarray, flagged_ids: set[int], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "x", "y", "flagged"])
        for row_id, (x, y) in zip(row_ids, coords):
            writer.writerow([row_id, repr(float(x)), repr(float(y)), str(row_id in flagged_ids).lower()])
