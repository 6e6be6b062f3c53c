"""Spectral outlier defense over embedding matrices.

Four stages: z-score each feature column, find the dominant singular
direction by power iteration, score every row by its projection magnitude
onto that direction, and flag the top fraction of scores for removal.
A sweep driver reruns the whole defense across poisoning ratios and
accounts for both the flagged/poisoned ratio and the true recall.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .attack import AttackConfig, SynonymLexicon, eligible_positions, poison_support_set
from .corpus import Dataset
from .embeddings import EmbeddingMatrix, EmbeddingProvider
from .icl import PredictorConfig, Shot, SupportSet, run_icl
from .seeding import derive, numpy_rng


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class SpectralConfig:
    flag_fraction: float = 0.02
    svd_components: int = 1
    power_iters_max: int = 1000
    convergence_tol: float = 1e-10
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.flag_fraction < 1.0:
            raise SpectralError(f"flag_fraction must be in (0,1), got {self.flag_fraction}")
        if self.svd_components < 1:
            raise SpectralError("svd_components must be >= 1")
        if self.power_iters_max < 1:
            raise SpectralError("power_iters_max must be >= 1")


@dataclass(frozen=True)
class TopDirection:
    sigma: float
    vector: np.ndarray
    iterations: int
    converged: bool


@dataclass(frozen=True)
class SpectralReport:
    row_ids: tuple[int, ...]
    scores: tuple[float, ...]
    flagged_ids: tuple[int, ...]
    threshold: float
    n_total: int
    n_flagged: int

    @property
    def flag_rate(self) -> float:
        return self.n_flagged / self.n_total


@dataclass(frozen=True)
class DefenseEvalRow:
    poison_ratio: float
    n_poisoned: int
    n_flagged: int
    paper_ratio_rate: float | None
    true_recall: float | None
    post_defense_icl_accuracy: float | None


def zscore_normalize(matrix: EmbeddingMatrix) -> EmbeddingMatrix:
    """Standardize every column to mean 0 and population std 1.

    Constant columns carry no signal and are zeroed outright.
    """
    if matrix.n < 2:
        raise SpectralError(f"need at least 2 rows to normalize, got {matrix.n}")
    data = matrix.data
    mean = data.mean(axis=0)
    std = data.std(axis=0)  # population std (ddof=0)
    centered = data - mean
    out = np.divide(centered, std, out=np.zeros_like(centered), where=std > 0.0)
    return EmbeddingMatrix(row_ids=matrix.row_ids, data=out)


def top_singular_direction(matrix: EmbeddingMatrix, config: SpectralConfig) -> TopDirection:
    """Dominant right-singular direction and value via power iteration.

    The iteration runs on the d x d Gram operator from a seeded start
    vector; the returned direction is sign-fixed so its largest-magnitude
    component is positive. Non-convergence warns and returns the best
    iterate.
    """
    if matrix.n < 2:
        raise SpectralError(f"need at least 2 rows, got {matrix.n}")
    a = matrix.data
    rng = numpy_rng(config.seed, "power_start")
    v0 = rng.standard_normal(matrix.d)
    v, iterations, converged = _kernels.power_iteration(
        a, v0, config.convergence_tol, config.power_iters_max
    )
    if not converged:
        warnings.warn(
            f"power iteration did not converge in {config.power_iters_max} iterations",
            RuntimeWarning,
            stacklevel=2,
        )
    pivot = int(np.argmax(np.abs(v)))
    if v[pivot] < 0:
        v = -v
    sigma = float(np.linalg.norm(a @ v))
    return TopDirection(sigma=sigma, vector=v, iterations=iterations, converged=converged)


def top_directions(matrix: EmbeddingMatrix, r: int, config: SpectralConfig) -> list[TopDirection]:
    """Leading r right-singular directions via power iteration with deflation."""
    directions: list[TopDirection] = []
    work = matrix
    for component in range(r):
        sub = replace(config, seed=derive(config.seed, "component", component))
        top = top_singular_direction(work, sub)
        directions.append(top)
        if component + 1 < r:
            # remove the found direction from row space: A <- A (I - v v^T)
            deflated = work.data - np.outer(work.data @ top.vector, top.vector)
            work = EmbeddingMatrix(row_ids=work.row_ids, data=deflated)
    return directions


def outlier_scores(matrix: EmbeddingMatrix, direction: np.ndarray) -> np.ndarray:
    """Projection magnitude of every row onto a unit direction."""
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (matrix.d,):
        raise SpectralError(f"direction has shape {direction.shape}, matrix dimension is {matrix.d}")
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise SpectralError("direction is not a unit vector")
    return np.abs(matrix.data @ direction)


def multi_direction_scores(matrix: EmbeddingMatrix, directions: list[np.ndarray]) -> np.ndarray:
    """Sum of squared projections over several directions."""
    total = np.zeros(matrix.n, dtype=np.float64)
    for direction in directions:
        projection = matrix.data @ np.asarray(direction, dtype=np.float64)
        total += projection**2
    return total


def flag_and_filter(
    matrix: EmbeddingMatrix, scores: np.ndarray, config: SpectralConfig
) -> tuple[SpectralReport, EmbeddingMatrix]:
    """Flag the ceil(flag_fraction * n) highest-scoring rows and drop them.

    Ties break toward the lower row id. The clean matrix keeps the original
    row order.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (matrix.n,):
        raise SpectralError(f"{scores.shape[0]} scores for {matrix.n} rows")
    n = matrix.n
    n_flagged = int(np.ceil(config.flag_fraction * n))
    if n_flagged >= n:
        raise SpectralError("flag fraction removes everything")
    order = sorted(range(n), key=lambda i: (-scores[i], matrix.row_ids[i]))
    flagged_positions = order[:n_flagged]
    flagged_ids = tuple(matrix.row_ids[i] for i in flagged_positions)
    threshold = float(min(scores[i] for i in flagged_positions))
    flagged_set = set(flagged_positions)
    keep = [i for i in range(n) if i not in flagged_set]
    clean = EmbeddingMatrix(
        row_ids=tuple(matrix.row_ids[i] for i in keep),
        data=matrix.data[keep],
    )
    report = SpectralReport(
        row_ids=matrix.row_ids,
        scores=tuple(float(s) for s in scores),
        flagged_ids=flagged_ids,
        threshold=threshold,
        n_total=n,
        n_flagged=n_flagged,
    )
    return report, clean


def run_defense(
    matrix: EmbeddingMatrix, config: SpectralConfig
) -> tuple[SpectralReport, EmbeddingMatrix]:
    """Full defense pass: z-score, top direction(s), scores, flag and filter."""
    normalized = zscore_normalize(matrix)
    if config.svd_components == 1:
        top = top_singular_direction(normalized, config)
        scores = outlier_scores(normalized, top.vector)
    else:
        directions = top_directions(normalized, config.svd_components, config)
        scores = multi_direction_scores(normalized, [t.vector for t in directions])
    return flag_and_filter(normalized, scores, config)


def detection_rate(n_flagged: int, n_poisoned: int) -> float | None:
    """Flagged count over poisoned count (the tabulated "detection rate").

    This is not a true-positive rate and may exceed 1; undefined (None)
    when nothing was poisoned.
    """
    if n_poisoned == 0:
        return None
    return n_flagged / n_poisoned


def build_eval_row(
    poison_ratio: float,
    n_poisoned: int,
    n_flagged: int,
    flagged_ids: set[int],
    poisoned_ids: set[int],
    post_defense_icl_accuracy: float | None,
) -> DefenseEvalRow:
    rate = detection_rate(n_flagged, n_poisoned)
    if rate is None:
        warnings.warn("no poisoned examples; detection rate undefined", RuntimeWarning, stacklevel=2)
        recall = None
    else:
        recall = len(flagged_ids & poisoned_ids) / n_poisoned
    return DefenseEvalRow(
        poison_ratio=poison_ratio,
        n_poisoned=n_poisoned,
        n_flagged=n_flagged,
        paper_ratio_rate=rate,
        true_recall=recall,
        post_defense_icl_accuracy=post_defense_icl_accuracy,
    )


def defense_sweep(
    corpus: Dataset,
    provider: EmbeddingProvider,
    attack_template: AttackConfig,
    ratios: list[float],
    spectral: SpectralConfig,
    predictor: PredictorConfig,
    lexicon: SynonymLexicon,
    k: int = 5,
) -> list[DefenseEvalRow]:
    """Rerun poison -> embed -> defend -> post-defense ICL per ratio.

    The poisoned id set counts every position the attack selected, whether
    or not its random draw actually rewrote the text.
    """
    supports = corpus.with_split("support")
    targets = corpus.with_split("target")
    if not supports:
        raise SpectralError("corpus has no support examples")
    pool = SupportSet(tuple(Shot(id=ex.id, text=ex.text, label=ex.label) for ex in supports))
    rows: list[DefenseEvalRow] = []
    for index, ratio in enumerate(ratios):
        attack = replace(
            attack_template,
            poison_ratio=ratio,
            seed=derive(attack_template.seed, "sweep", index),
        )
        poisoned_pool, records = poison_support_set(pool, attack, lexicon)
        attempted = eligible_positions(attack, len(pool))
        poisoned_ids = {records[i].support_id for i in attempted}
        matrix = provider.embed([s.text for s in poisoned_pool], [s.id for s in poisoned_pool])
        report, _ = run_defense(matrix, spectral)
        clean_shots = [s for s in poisoned_pool if s.id not in set(report.flagged_ids)]
        accuracy = _post_defense_accuracy(clean_shots, targets, predictor, k, spectral.seed)
        rows.append(
            build_eval_row(
                poison_ratio=ratio,
                n_poisoned=len(poisoned_ids),
                n_flagged=report.n_flagged,
                flagged_ids=set(report.flagged_ids),
                poisoned_ids=poisoned_ids,
                post_defense_icl_accuracy=accuracy,
            )
        )
    return rows


def _post_defense_accuracy(clean_shots, targets, predictor, k, seed) -> float | None:
    from .analytics import accuracy
    from .corpus import Example

    labeled_targets = [ex for ex in targets if ex.label is not None]
    if not labeled_targets or len(clean_shots) < k:
        return None
    support_examples = tuple(
        Example(id=s.id, text=s.text, label=s.label, split="support") for s in clean_shots
    )
    support_dataset = Dataset(examples=support_examples)
    target_dataset = Dataset(examples=tuple(labeled_targets))
    predictions, _ = run_icl(
        target_dataset, support_dataset, attack=None, predictor=predictor, k=k,
        seed=derive(seed, "post_defense_icl"),
    )
    evaluated = [p for p in predictions if not p.abstained]
    if not evaluated:
        return None
    return accuracy(predictions, target_dataset)


SWEEP_HEADER = [
    "poison_ratio",
    "n_poisoned",
    "n_flagged",
    "paper_ratio_rate",
    "true_recall",
    "post_defense_icl_accuracy",
]


def write_sweep(rows: list[DefenseEvalRow], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row.poison_ratio,
                    row.n_poisoned,
                    row.n_flagged,
                    "" if row.paper_ratio_rate is None else repr(row.paper_ratio_rate),
                    "" if row.true_recall is None else repr(row.true_recall),
                    "" if row.post_defense_icl_accuracy is None else repr(row.post_defense_icl_accuracy),
                ]
            )


def read_sweep(path: str | Path) -> list[DefenseEvalRow]:
    rows: list[DefenseEvalRow] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SWEEP_HEADER:
            raise SpectralError(f"bad sweep header {header!r}")
        for record in reader:
            ratio, n_poisoned, n_flagged, rate, recall, acc = record
            rows.append(
                DefenseEvalRow(
                    poison_ratio=float(ratio),
                    n_poisoned=int(n_poisoned),
                    n_flagged=int(n_flagged),
                    paper_ratio_rate=float(rate) if rate else None,
                    true_recall=float(recall) if recall else None,
                    post_defense_icl_accuracy=float(acc) if acc else None,
                )
            )
    return rows


def write_spectral_report(report: SpectralReport, path: str | Path) -> None:
    payload = {
        "n_total": report.n_total,
        "n_flagged": report.n_flagged,
        "flag_rate": report.flag_rate,
        "threshold": report.threshold,
        "flagged_ids": list(report.flagged_ids),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def write_scores(report: SpectralReport, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["id", "score"])
        for row_id, score in zip(report.row_ids, report.scores):
            writer.writerow([row_id, repr(score)])
