"""Encode corpus texts with a sentence-embedding model.

Reads the corpus JSONL schema ({"id", "text", ...} per line), encodes the
texts in batches, and writes the vector JSONL schema ({"id", "vector"} per
line) in input order. The bridge contains no defense logic; it is an
encoder adapter only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DEFAULT_MODEL = "all-MiniLM-L6-v2"


class BridgeError(ValueError):
    pass


class ModelUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class BridgeConfig:
    model: str = DEFAULT_MODEL
    input_path: Path = Path("corpus.jsonl")
    output_path: Path = Path("vectors.jsonl")
    batch_size: int = 64

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise BridgeError(f"batch size must be >= 1, got {self.batch_size}")


def load_model(name: str):
    """Load the sentence-embedding model, or explain how to make it available."""
    try:
        from sentence_transformers import SentenceTransformer
    except ImportError as exc:
        raise ModelUnavailable(
            f"sentence-transformers is not installed ({exc}); "
            "run: pip install sentence-transformers"
        ) from None
    try:
        return SentenceTransformer(name)
    except Exception as exc:
        raise ModelUnavailable(
            f"could not load model {name!r}: {exc}. "
            "Download it once on a connected machine "
            f"(SentenceTransformer('{name}')) or point --model at a local path."
        ) from None


def read_corpus(path: Path) -> list[tuple[int, str]]:
    rows: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BridgeError(f"malformed input line {line_no}: {exc.msg}") from None
            if not isinstance(obj, dict) or "text" not in obj:
                raise BridgeError(f"malformed input line {line_no}: expected object with 'text'")
            row_id = obj.get("id")
            if not isinstance(row_id, int):
                raise BridgeError(f"malformed input line {line_no}: 'id' must be an integer")
            rows.append((row_id, str(obj["text"])))
    return rows


def encode_file(config: BridgeConfig, model=None) -> int:
    """Encode input texts to the vector JSONL file; returns the line count.

    ``model`` is injectable for testing; by default the configured
    sentence-embedding model is loaded.
    """
    rows = read_corpus(config.input_path)
    if model is None and rows:
        model = load_model(config.model)
    with open(config.output_path, "w", encoding="utf-8") as fh:
        for start in range(0, len(rows), config.batch_size):
            batch = rows[start : start + config.batch_size]
            vectors = model.encode(
                [text for _, text in batch],
                batch_size=config.batch_size,
                show_progress_bar=False,
            )
            for (row_id, _), vector in zip(batch, vectors):
                payload = {"id": row_id, "vector": [float(v) for v in vector]}
                fh.write(json.dumps(payload) + "\n")
    return len(rows)
