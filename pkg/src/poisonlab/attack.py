"""Support-set perturbation attacks: synonym replacement, negation insertion,
and randomized selection between them, with a per-example audit trail.

Attacks only rewrite text; labels are never touched.
"""

from __future__ import annotations

import csv
import json
import math
import random
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .corpus import Sentiment
from .seeding import stdlib_rng


class AttackError(ValueError):
    pass


class PerturbationKind(Enum):
    SYNONYM_REPLACEMENT = "synonym_replacement"
    NEGATION_INSERTION = "negation_insertion"
    UNCHANGED = "unchanged"

    @classmethod
    def parse(cls, token: str) -> "PerturbationKind":
        for member in cls:
            if member.value == token:
                return member
        raise AttackError(f"unknown perturbation kind {token!r}")


KIND_ORDER = (
    PerturbationKind.SYNONYM_REPLACEMENT,
    PerturbationKind.NEGATION_INSERTION,
    PerturbationKind.UNCHANGED,
)


class SynonymLexicon:
    """Word -> ordered synonym list, all lowercase, no self-mappings."""

    def __init__(self, entries: dict[str, list[str]]):
        for word, synonyms in entries.items():
            if not synonyms:
                raise AttackError(f"lexicon entry {word!r} has no synonyms")
            if word in synonyms:
                raise AttackError(f"lexicon entry {word!r} maps to itself")
            if word != word.lower() or any(s != s.lower() for s in synonyms):
                raise AttackError(f"lexicon entry {word!r} is not lowercase")
        self._entries = {w: list(s) for w, s in entries.items()}

    def __contains__(self, word: str) -> bool:
        return word in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def synonyms(self, word: str) -> list[str]:
        return list(self._entries[word])

    @classmethod
    def load(cls, path: str | Path) -> "SynonymLexicon":
        """Load a JSONL lexicon: one {"word": ..., "synonyms": [...]} per line."""
        entries: dict[str, list[str]] = {}
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise AttackError(f"malformed lexicon line {line_no}: {exc.msg}") from None
                if not isinstance(obj, dict) or "word" not in obj or "synonyms" not in obj:
                    raise AttackError(f"malformed lexicon line {line_no}: need 'word' and 'synonyms'")
                entries[str(obj["word"])] = [str(s) for s in obj["synonyms"]]
        return cls(entries)


def bundled_lexicon() -> SynonymLexicon:
    """The small synonym lexicon shipped with the package."""
    path = Path(__file__).parent / "data" / "lexicon.jsonl"
    return SynonymLexicon.load(path)


@dataclass(frozen=True)
class PerturbationRecord:
    support_id: int
    original: str
    perturbed: str
    kind: PerturbationKind
    label: Sentiment

    def __post_init__(self) -> None:
        unchanged = self.perturbed == self.original
        if unchanged != (self.kind is PerturbationKind.UNCHANGED):
            raise AttackError(
                f"record for support {self.support_id}: kind {self.kind.value} "
                f"inconsistent with perturbed text"
            )


@dataclass(frozen=True)
class AttackConfig:
    replacement_probability: float = 0.3
    kind_weights: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)
    seed: int = 0
    poison_ratio: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.replacement_probability <= 1.0:
            raise AttackError(f"replacement_probability out of range: {self.replacement_probability}")
        if not 0.0 <= self.poison_ratio <= 1.0:
            raise AttackError(f"poison_ratio out of range: {self.poison_ratio}")
        if len(self.kind_weights) != 3 or any(w < 0 for w in self.kind_weights):
            raise AttackError(f"kind_weights must be three non-negative reals: {self.kind_weights}")
        if abs(sum(self.kind_weights) - 1.0) > 1e-9:
            raise AttackError(f"kind_weights must sum to 1: {self.kind_weights}")


def synonym_replace(text: str, lexicon: SynonymLexicon, p: float, rng: random.Random) -> str:
    """Independently replace lexicon words with probability p.

    Tokens are whitespace-split and lowercased for lookup. A replaced token
    takes the first synonym not yet used in this text, cycling through the
    list on repeats. Tokens outside the lexicon keep their original form.
    """
    if not 0.0 <= p <= 1.0:
        raise AttackError(f"replacement probability out of range: {p}")
    used: dict[str, int] = {}
    out: list[str] = []
    replaced = False
    for token in text.split():
        key = token.lower()
        if key in lexicon and rng.random() < p:
            synonyms = lexicon.synonyms(key)
            index = used.get(key, 0)
            out.append(synonyms[index % len(synonyms)])
            used[key] = index + 1
            replaced = True
        else:
            out.append(token)
    return " ".join(out) if replaced else text


def negation_insert(text: str) -> str:
    """Insert a negation: the first standalone "is" becomes "is not".

    When no "is" token exists, "is not" goes after the first token. A text
    whose first "is" is already followed by "not" is left unchanged, which
    makes the operation idempotent.
    """
    tokens = text.split()
    if not tokens:
        return text
    for i, token in enumerate(tokens):
        if token.lower() == "is":
            if i + 1 < len(tokens) and tokens[i + 1].lower() == "not":
                return text
            return " ".join(tokens[: i + 1] + ["not"] + tokens[i + 1 :])
    return " ".join(tokens[:1] + ["is", "not"] + tokens[1:])


def _draw_kind(weights: tuple[float, float, float], rng: random.Random) -> PerturbationKind:
    u = rng.random()
    cumulative = 0.0
    for kind, weight in zip(KIND_ORDER, weights):
        cumulative += weight
        if u < cumulative:
            return kind
    return KIND_ORDER[-1]


def random_perturb(
    support_id: int,
    text: str,
    label: Sentiment,
    config: AttackConfig,
    lexicon: SynonymLexicon,
    rng: random.Random,
    kind: PerturbationKind | None = None,
) -> PerturbationRecord:
    """Apply a randomly chosen perturbation to one support example.

    The kind is drawn from config.kind_weights unless forced via ``kind``.
    A transform that leaves the text identical is recorded as unchanged so
    the audit log stays truthful.
    """
    if kind is None:
        kind = _draw_kind(config.kind_weights, rng)
    if kind is PerturbationKind.SYNONYM_REPLACEMENT:
        perturbed = synonym_replace(text, lexicon, config.replacement_probability, rng)
    elif kind is PerturbationKind.NEGATION_INSERTION:
        perturbed = negation_insert(text)
    else:
        perturbed = text
    if perturbed == text:
        kind = PerturbationKind.UNCHANGED
    return PerturbationRecord(support_id=support_id, original=text, perturbed=perturbed, kind=kind, label=label)


def eligible_positions(config: AttackConfig, n: int) -> set[int]:
    """Seeded choice of the ceil(poison_ratio * n) positions to perturb."""
    n_eligible = math.ceil(config.poison_ratio * n)
    if not n_eligible:
        return set()
    rng = stdlib_rng(config.seed, "poison.positions")
    return set(rng.sample(range(n), n_eligible))


def poison_support_set(
    supports: "SupportSet",
    config: AttackConfig,
    lexicon: SynonymLexicon,
) -> tuple["SupportSet", list[PerturbationRecord]]:
    """Perturb a seeded ceil(poison_ratio * k) subset of the support set.

    Returns the rewritten support set in input order plus one audit record
    per support example; positions outside the poisoned subset get
    unchanged records.
    """
    from .icl import Shot, SupportSet  # local import to avoid a module cycle

    shots = supports.shots
    if not shots:
        raise AttackError("empty support set")
    eligible = eligible_positions(config, len(shots))
    records: list[PerturbationRecord] = []
    poisoned: list[Shot] = []
    for position, shot in enumerate(shots):
        if position in eligible:
            rng = stdlib_rng(config.seed, "poison.record", position)
            record = random_perturb(shot.id, shot.text, shot.label, config, lexicon, rng)
        else:
            record = PerturbationRecord(
                support_id=shot.id,
                original=shot.text,
                perturbed=shot.text,
                kind=PerturbationKind.UNCHANGED,
                label=shot.label,
            )
        records.append(record)
        poisoned.append(Shot(id=shot.id, text=record.perturbed, label=shot.label))
    return SupportSet(tuple(poisoned)), records


def eligible_count(poison_ratio: float, n: int, rounding: str = "ceil") -> int:
    """Number of poisoning attempts for a pool of size n.

    This implementation uses ceiling; ``rounding="floor"`` reproduces the
    convention some published counts follow.
    """
    if rounding == "ceil":
        return math.ceil(poison_ratio * n)
    if rounding == "floor":
        return math.floor(poison_ratio * n)
    raise AttackError(f"unknown rounding {rounding!r}")


AUDIT_HEADER = ["support_id", "kind", "label", "original", "perturbed"]


def write_audit_log(records: list[PerturbationRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AUDIT_HEADER)
        for rec in records:
            writer.writerow([rec.support_id, rec.kind.value, rec.label.value, rec.original, rec.perturbed])


def read_audit_log(path: str | Path) -> list[PerturbationRecord]:
    records: list[PerturbationRecord] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != AUDIT_HEADER:
            raise AttackError(f"bad audit header {header!r}")
        for row in reader:
            support_id, kind, label, original, perturbed = row
            records.append(
                PerturbationRecord(
                    support_id=int(support_id),
                    original=original,
                    perturbed=perturbed,
                    kind=PerturbationKind.parse(kind),
                    label=Sentiment.parse(label),
                )
            )
    return records
