"""Sentiment corpus loading, validation, splitting, and persistence.

The corpus is a flat list of short texts with optional three-way sentiment
labels. Files are CSV (header ``id,text,label,split``) or JSONL (one object
per line); both round-trip bit-exactly through the writers here.
"""

from __future__ import annotations

import csv
import json
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .seeding import stdlib_rng


class CorpusError(ValueError):
    """Malformed corpus file or contract violation."""


class Sentiment(Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    NEUTRAL = "Neutral"

    @classmethod
    def parse(cls, token: str) -> "Sentiment":
        """Case-insensitive parse of a label token into its canonical form."""
        normalized = token.strip().lower()
        for member in cls:
            if member.value.lower() == normalized:
                return member
        raise CorpusError(f"unknown label {token!r}")

    def __lt__(self, other: "Sentiment") -> bool:
        return LABEL_CODES[self] < LABEL_CODES[other]


# Canonical integer codes, fixed for reproducibility.
LABEL_CODES: dict[Sentiment, int] = {
    Sentiment.POSITIVE: 0,
    Sentiment.NEGATIVE: 1,
    Sentiment.NEUTRAL: 2,
}

SPLITS = ("support", "target", "train", "test", "unassigned")


@dataclass(frozen=True)
class Example:
    id: int
    text: str
    label: Sentiment | None = None
    split: str = "unassigned"

    def __post_init__(self) -> None:
        if self.id < 0:
            raise CorpusError(f"negative id {self.id}")
        if not self.text.strip():
            raise CorpusError(f"empty text for id {self.id}")
        if self.split not in SPLITS:
            raise CorpusError(f"unknown split {self.split!r} for id {self.id}")
        if self.split == "support" and self.label is None:
            raise CorpusError(f"support example {self.id} has no label")


@dataclass(frozen=True)
class LoadStats:
    dropped_empty: int = 0
    dropped_duplicates: int = 0


@dataclass(frozen=True)
class Dataset:
    examples: tuple[Example, ...]
    load_stats: LoadStats = field(default=LoadStats(), compare=False)

    def __post_init__(self) -> None:
        seen: set[int] = set()
        for ex in self.examples:
            if ex.id in seen:
                raise CorpusError(f"duplicate id {ex.id}")
            seen.add(ex.id)

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def class_counts(self) -> dict[Sentiment, int]:
        counts = Counter(ex.label for ex in self.examples if ex.label is not None)
        return {s: counts.get(s, 0) for s in Sentiment}

    def labeled(self) -> tuple[Example, ...]:
        return tuple(ex for ex in self.examples if ex.label is not None)

    def with_split(self, split: str) -> tuple[Example, ...]:
        return tuple(ex for ex in self.examples if ex.split == split)

    def by_id(self, example_id: int) -> Example:
        for ex in self.examples:
            if ex.id == example_id:
                return ex
        raise KeyError(example_id)


def _dedup_key(text: str) -> str:
    return unicodedata.normalize("NFC", text).strip()


def _build_dataset(rows: list[tuple[int, int | None, str, str, str]]) -> Dataset:
    """Assemble Examples from parsed (line_no, id, text, label, split) rows."""
    examples: list[Example] = []
    seen_texts: set[str] = set()
    dropped_empty = 0
    dropped_duplicates = 0
    next_id = 0
    for line_no, row_id, text, label_token, split in rows:
        if not text.strip():
            dropped_empty += 1
            continue
        key = _dedup_key(text)
        if key in seen_texts:
            dropped_duplicates += 1
            continue
        seen_texts.add(key)
        label: Sentiment | None = None
        if label_token:
            try:
                label = Sentiment.parse(label_token)
            except CorpusError:
                raise CorpusError(f"unknown label {label_token!r} at line {line_no}") from None
        if row_id is None:
            row_id = next_id
        next_id = max(next_id, row_id + 1)
        split = split or "unassigned"
        if split not in SPLITS:
            raise CorpusError(f"unknown split {split!r} at line {line_no}")
        examples.append(Example(id=row_id, text=text, label=label, split=split))
    return Dataset(
        examples=tuple(examples),
        load_stats=LoadStats(dropped_empty=dropped_empty, dropped_duplicates=dropped_duplicates),
    )


def load_dataset(path: str | Path, format: str | None = None) -> Dataset:
    """Load a corpus file, dropping empty-text rows and duplicate texts.

    Duplicates are keyed on the NFC-normalized, trimmed text; the first
    occurrence wins. Missing ids are assigned in file order.
    """
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    if format not in ("csv", "jsonl"):
        raise CorpusError(f"unknown corpus format {format!r}")
    if not path.exists():
        raise CorpusError(f"corpus file not found: {path}")
    rows: list[tuple[int, int | None, str, str, str]] = []
    with open(path, encoding="utf-8", newline="") as fh:
        if format == "csv":
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CorpusError(f"empty corpus file: {path}") from None
            if [h.strip() for h in header] != ["id", "text", "label", "split"]:
                raise CorpusError(f"bad CSV header {header!r} in {path}")
            for line_no, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 4:
                    raise CorpusError(f"malformed row at line {line_no}: expected 4 fields, got {len(row)}")
                id_token, text, label_token, split = row
                row_id = None
                if id_token.strip():
                    try:
                        row_id = int(id_token)
                    except ValueError:
                        raise CorpusError(f"malformed row at line {line_no}: bad id {id_token!r}") from None
                rows.append((line_no, row_id, text, label_token.strip(), split.strip()))
        else:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"malformed row at line {line_no}: {exc.msg}") from None
                if not isinstance(obj, dict) or "text" not in obj:
                    raise CorpusError(f"malformed row at line {line_no}: expected object with 'text'")
                row_id = obj.get("id")
                if row_id is not None and not isinstance(row_id, int):
                    raise CorpusError(f"malformed row at line {line_no}: id must be an integer")
                label_token = obj.get("label") or ""
                rows.append((line_no, row_id, str(obj["text"]), str(label_token), str(obj.get("split") or "")))
    return _build_dataset(rows)


def save_dataset(dataset: Dataset, path: str | Path, format: str | None = None) -> None:
    """Write a corpus file in canonical form (UTF-8, trailing newline)."""
    path = Path(path)
    if format is None:
        format = "csv" if path.suffix.lower() == ".csv" else "jsonl"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if format == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "text", "label", "split"])
            for ex in dataset:
                writer.writerow([ex.id, ex.text, ex.label.value if ex.label else "", ex.split])
        elif format == "jsonl":
            for ex in dataset:
                obj = {
                    "id": ex.id,
                    "text": ex.text,
                    "label": ex.label.value if ex.label else None,
                    "split": ex.split,
                }
                fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
        else:
            raise CorpusError(f"unknown corpus format {format!r}")


def impute_categorical(values: Sequence[object | None]) -> list[object]:
    """Fill missing entries with the most frequent observed value."""
    observed = [v for v in values if v is not None]
    if not observed:
        raise CorpusError("column has no observed values")
    mode = Counter(observed).most_common(1)[0][0]
    return [v if v is not None else mode for v in values]


def impute_numeric(values: Sequence[float | None]) -> list[float]:
    """Fill missing entries with the column mean."""
    observed = [v for v in values if v is not None]
    if not observed:
        raise CorpusError("column has no observed values")
    mean = sum(observed) / len(observed)
    return [v if v is not None else mean for v in values]


def impute_and_encode(dataset: Dataset) -> tuple[Dataset, dict[Sentiment, int]]:
    """Fill missing labels with the modal label; return the label-code table.

    A fully labeled dataset passes through unchanged.
    """
    labels = [ex.label for ex in dataset]
    filled = impute_categorical(labels)
    examples = tuple(
        ex if ex.label is not None else replace(ex, label=filled[i])
        for i, ex in enumerate(dataset.examples)
    )
    return Dataset(examples=examples, load_stats=dataset.load_stats), dict(LABEL_CODES)


def _round_half_up(x: float) -> int:
    return int(x + 0.5)


def stratified_split(dataset: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Split the labeled examples into train/test preserving class proportions.

    Per class the test count is round(test_fraction * class_count), half-up,
    with a minimum of one example; selection is a seeded shuffle within the
    class. Unlabeled examples are excluded from both splits.
    """
    if not 0.0 < test_fraction < 1.0:
        raise CorpusError(f"test_fraction must be in (0,1), got {test_fraction}")
    by_class: dict[Sentiment, list[Example]] = {}
    for ex in dataset:
        if ex.label is not None:
            by_class.setdefault(ex.label, []).append(ex)
    for sentiment, members in by_class.items():
        if len(members) < 2:
            raise CorpusError(f"class {sentiment.value} has fewer than 2 labeled examples")
    train: list[Example] = []
    test: list[Example] = []
    for sentiment in sorted(by_class, key=LABEL_CODES.__getitem__):
        members = list(by_class[sentiment])
        rng = stdlib_rng(seed, "stratified_split", sentiment.value)
        rng.shuffle(members)
        n_test = max(1, _round_half_up(test_fraction * len(members)))
        n_test = min(n_test, len(members) - 1)
        test.extend(members[:n_test])
        train.extend(members[n_test:])
    train.sort(key=lambda ex: ex.id)
    test.sort(key=lambda ex: ex.id)
    return (
        Dataset(tuple(replace(ex, split="train") for ex in train)),
        Dataset(tuple(replace(ex, split="test") for ex in test)),
    )


@dataclass(frozen=True)
class PartitionReport:
    filtered_indices: tuple[int, ...]
    warnings: tuple[str, ...]


def partition_support_target(dataset: Dataset, support_indices: Iterable[int]) -> tuple[Dataset, PartitionReport]:
    """Mark the listed positions as support examples and the rest as targets.

    Out-of-range positions, and positions pointing at unlabeled examples,
    are filtered out and reported rather than treated as fatal.
    """
    n = len(dataset)
    filtered: list[int] = []
    keep: set[int] = set()
    for idx in support_indices:
        if 0 <= idx < n and dataset.examples[idx].label is not None:
            keep.add(idx)
        else:
            filtered.append(idx)
    if not keep:
        raise CorpusError("empty support set")
    warnings: list[str] = []
    support_labels = {dataset.examples[i].label for i in keep}
    for sentiment in Sentiment:
        if sentiment not in support_labels:
            warnings.append(f"support set has no {sentiment.value} example")
    examples = tuple(
        replace(ex, split="support" if i in keep else "target")
        for i, ex in enumerate(dataset.examples)
    )
    report = PartitionReport(filtered_indices=tuple(filtered), warnings=tuple(warnings))
    return Dataset(examples=examples, load_stats=dataset.load_stats), report
