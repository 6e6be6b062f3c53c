import functools
import json
import os

import numpy as np
import pytest


class StubModel:
    """Deterministic drop-in for a sentence-embedding model (test double)."""

    dimension = 384

    def encode(self, texts, batch_size=32, show_progress_bar=False):
        rows = []
        for text in texts:
            rng = np.random.default_rng(abs(hash(text)) % (2**32))
            rows.append(rng.standard_normal(self.dimension).astype(np.float32))
        return np.stack(rows) if rows else np.empty((0, self.dimension), dtype=np.float32)


@pytest.fixture
def stub_model():
    return StubModel()


@pytest.fixture
def corpus_file(tmp_path):
    def write(rows):
        path = tmp_path / "corpus.jsonl"
        with open(path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        return path

    return write


@functools.lru_cache(maxsize=1)
def cached_real_model():
    """The default model from the local cache, or None.

    Tests never download: the load runs in offline mode so environments
    without the cached model skip the real-model assertions quickly.
    """
    saved = {k: os.environ.get(k) for k in ("HF_HUB_OFFLINE", "TRANSFORMERS_OFFLINE")}
    os.environ["HF_HUB_OFFLINE"] = "1"
    os.environ["TRANSFORMERS_OFFLINE"] = "1"
    try:
        from embed_bridge.encoder import load_model

        return load_model("all-MiniLM-L6-v2")
    except Exception:
        return None
    finally:
        for key, value in saved.items():
            if value is None:
                os.environ.pop(key, None)
            else:
                os.environ[key] = value


@pytest.fixture
def real_model():
    model = cached_real_model()
    if model is None:
        pytest.skip(
            "all-MiniLM-L6-v2 not available locally; download it once on a "
            "connected machine to run the real-model round-trip"
        )
    return model
