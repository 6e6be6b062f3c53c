"""Few-shot prompt construction, completion parsing, and predictors.

A prediction run pairs each unlabeled target with its own seeded draw of k
labeled support examples, optionally poisons that support set, renders the
prompt, and asks a predictor for the completion. Two predictors ship: a
deterministic mock (token-overlap nearest neighbour vote, so text
perturbations can actually flip labels offline) and a generic HTTP
completion client.
"""

from __future__ import annotations

import csv
import hashlib
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import requests

from .attack import AttackConfig, PerturbationRecord, SynonymLexicon, poison_support_set
from .corpus import LABEL_CODES, Dataset, Example, Sentiment
from .seeding import derive, stdlib_rng


class PredictorError(RuntimeError):
    pass


class UnparseableCompletion(ValueError):
    """Completion contains no recognizable label word."""


@dataclass(frozen=True)
class Shot:
    id: int
    text: str
    label: Sentiment

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"empty shot text for support {self.id}")


@dataclass(frozen=True)
class SupportSet:
    shots: tuple[Shot, ...]

    def __post_init__(self) -> None:
        if len(self.shots) < 1:
            raise ValueError("a support set needs at least one shot")

    def __len__(self) -> int:
        return len(self.shots)

    def __iter__(self):
        return iter(self.shots)

    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=8)
        for shot in self.shots:
            h.update(f"{shot.id}\x1f{shot.text}\x1f{shot.label.value}\x1e".encode("utf-8"))
        return h.hexdigest()


@dataclass(frozen=True)
class Prompt:
    rendered: str
    target_id: int


@dataclass(frozen=True)
class Prediction:
    target_id: int
    label: Sentiment | None
    raw_completion: str
    support_fingerprint: str = ""

    @property
    def abstained(self) -> bool:
        return self.label is None


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "mock"
    endpoint: str | None = None
    max_retries: int = 3
    timeout: float = 30.0
    temperature: float = 0.0
    backoff_base: float = 0.25

    def __post_init__(self) -> None:
        if self.kind not in ("mock", "http"):
            raise ValueError(f"unknown predictor kind {self.kind!r}")
        if (self.kind == "http") != (self.endpoint is not None):
            raise ValueError("endpoint must be set exactly when kind is 'http'")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def sample_support(labeled: Dataset, k: int, seed: int, target_id: int) -> SupportSet:
    """Draw k distinct labeled supports for one target, keyed on (seed, target id).

    The target itself is never drawn, and the same (seed, target_id) always
    yields the same support set.
    """
    pool = [ex for ex in labeled if ex.label is not None and ex.id != target_id]
    if len(pool) < k:
        raise ValueError(f"need {k} support examples, only {len(pool)} available")
    rng = stdlib_rng(seed, "support_sample", target_id)
    chosen = rng.sample(pool, k)
    return SupportSet(tuple(Shot(id=ex.id, text=ex.text, label=ex.label) for ex in chosen))


def _render_label(label: Sentiment) -> str:
    # lowercase in prompts; files use the capitalized canonical form
    return label.value.lower()


def build_prompt(supports: SupportSet, target: Example) -> Prompt:
    """Render the few-shot prompt: one Tweet/Sentiment block per shot, then
    the target block ending exactly with "Sentiment:"."""
    if not target.text:
        raise ValueError("target text is empty")
    blocks = [f"Tweet: {shot.text}\nSentiment: {_render_label(shot.label)}\n\n" for shot in supports]
    rendered = "".join(blocks) + f"Tweet: {target.text}\nSentiment:"
    return Prompt(rendered=rendered, target_id=target.id)


_LABEL_WORD = re.compile(r"\b(positive|negative|neutral)\b", re.IGNORECASE)


def parse_label(completion: str) -> Sentiment:
    """Return the first sentiment word found in a completion, any casing."""
    match = _LABEL_WORD.search(completion)
    if match is None:
        raise UnparseableCompletion(f"unparseable completion: {completion!r}")
    return Sentiment.parse(match.group(1))


def _tokens(text: str) -> frozenset[str]:
    return frozenset(token.lower() for token in text.split())


def _jaccard(a: frozenset[str], b: frozenset[str]) -> float:
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def predict_mock(supports: SupportSet, target_text: str, target_id: int) -> Prediction:
    """Deterministic stand-in predictor: majority label among the supports
    most token-similar to the target.

    Similarity is Jaccard overlap of lowercased whitespace tokens. Ties in
    the vote break by canonical label order; all-zero similarity falls back
    to Neutral. Being a pure function of the shot texts makes the mock
    sensitive to support perturbations.
    """
    target_tokens = _tokens(target_text)
    similarities = [_jaccard(target_tokens, _tokens(shot.text)) for shot in supports]
    best = max(similarities)
    if best == 0.0:
        label = Sentiment.NEUTRAL
    else:
        votes: dict[Sentiment, int] = {}
        for shot, similarity in zip(supports, similarities):
            if similarity == best:
                votes[shot.label] = votes.get(shot.label, 0) + 1
        top = max(votes.values())
        label = min((s for s, v in votes.items() if v == top), key=LABEL_CODES.__getitem__)
    return Prediction(
        target_id=target_id,
        label=label,
        raw_completion=label.value,
        support_fingerprint=supports.fingerprint(),
    )


def predict_http(prompt: Prompt, config: PredictorConfig, session: requests.Session | None = None) -> Prediction:
    """POST the prompt to a completion endpoint and parse the label.

    Retries transport errors and 5xx responses with exponential backoff;
    an unparseable completion is recorded as an abstention, not an error.
    """
    if config.kind != "http" or config.endpoint is None:
        raise PredictorError("predict_http needs an http predictor config with an endpoint")
    body = {"prompt": prompt.rendered, "max_tokens": 8, "temperature": config.temperature}
    post = session.post if session is not None else requests.post
    attempts = config.max_retries + 1
    last_error: str = ""
    for attempt in range(attempts):
        if attempt:
            time.sleep(config.backoff_base * (2 ** (attempt - 1)))
        try:
            response = post(config.endpoint, json=body, timeout=config.timeout)
        except requests.RequestException as exc:
            last_error = str(exc)
            continue
        if response.status_code >= 500:
            last_error = f"server returned {response.status_code}"
            continue
        if response.status_code != 200:
            raise PredictorError(f"predictor returned {response.status_code}: {response.text[:200]}")
        try:
            completion = str(response.json()["completion"])
        except (ValueError, KeyError) as exc:
            raise PredictorError(f"bad predictor response: {exc}") from None
        prompt_hash = hashlib.blake2b(prompt.rendered.encode("utf-8"), digest_size=8).hexdigest()
        try:
            label = parse_label(completion)
        except UnparseableCompletion:
            return Prediction(prompt.target_id, None, completion, prompt_hash)
        return Prediction(prompt.target_id, label, completion, prompt_hash)
    raise PredictorError(f"predictor unreachable after {attempts} attempts: {last_error}")


def _predict_one(
    target: Example,
    supports_pool: Dataset,
    attack: AttackConfig | None,
    predictor: PredictorConfig,
    lexicon: SynonymLexicon | None,
    k: int,
    seed: int,
) -> tuple[Prediction, list[PerturbationRecord]]:
    supports = sample_support(supports_pool, k, seed, target.id)
    records: list[PerturbationRecord] = []
    if attack is not None:
        if lexicon is None:
            raise ValueError("an attack run needs a synonym lexicon")
        per_target = replace(attack, seed=derive(attack.seed, "icl.poison", target.id))
        supports, records = poison_support_set(supports, per_target, lexicon)
    if predictor.kind == "mock":
        prediction = predict_mock(supports, target.text, target.id)
    else:
        prompt = build_prompt(supports, target)
        prediction = predict_http(prompt, predictor)
        prediction = replace(prediction, support_fingerprint=supports.fingerprint())
    return prediction, records


def run_icl(
    targets: Dataset,
    supports: Dataset,
    attack: AttackConfig | None,
    predictor: PredictorConfig,
    k: int = 5,
    seed: int = 0,
    lexicon: SynonymLexicon | None = None,
    max_concurrency: int = 1,
) -> tuple[list[Prediction], list[PerturbationRecord]]:
    """Predict every target against its own (optionally poisoned) support draw.

    Returns predictions ordered by target id plus the concatenated
    perturbation audit records. Abstentions are kept in the prediction list,
    never raised.
    """
    ordered = sorted(targets, key=lambda ex: ex.id)
    results: list[tuple[Prediction, list[PerturbationRecord]]] = []
    if max_concurrency > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            results = list(
                pool.map(
                    lambda ex: _predict_one(ex, supports, attack, predictor, lexicon, k, seed),
                    ordered,
                )
            )
    else:
        results = [_predict_one(ex, supports, attack, predictor, lexicon, k, seed) for ex in ordered]
    predictions = [prediction for prediction, _ in results]
    audit: list[PerturbationRecord] = []
    for _, records in results:
        audit.extend(records)
    return predictions, audit


PREDICTIONS_HEADER = ["target_id", "label", "raw_completion", "abstained"]


def write_predictions(predictions: list[Prediction], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PREDICTIONS_HEADER)
        for p in predictions:
            writer.writerow(
                [p.target_id, p.label.value if p.label else "", p.raw_completion, str(p.abstained).lower()]
            )


def read_predictions(path: str | Path) -> list[Prediction]:
    predictions: list[Prediction] = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != PREDICTIONS_HEADER:
            raise ValueError(f"bad predictions header {header!r}")
        for target_id, label, raw, abstained in reader:
            predictions.append(
                Prediction(
                    target_id=int(target_id),
                    label=Sentiment.parse(label) if abstained == "false" else None,
                    raw_completion=raw,
                )
            )
    return predictions
