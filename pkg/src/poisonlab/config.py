"""Run configuration: one JSON document plus POISONLAB_* overrides.

Environment overrides apply to paths and the master seed only.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from .attack import AttackConfig
from .embeddings import EmbeddingProvider
from .icl import PredictorConfig
from .seeding import derive
from .spectral import SpectralConfig


class ConfigError(ValueError):
    pass


ENV_OVERRIDES = {
    "POISONLAB_CORPUS": "corpus",
    "POISONLAB_LEXICON": "lexicon",
    "POISONLAB_VECTORS": "vectors",
    "POISONLAB_OUT": "out_dir",
    "POISONLAB_SEED": "master_seed",
}


@dataclass(frozen=True)
class RunConfig:
    corpus: Path
    out_dir: Path
    lexicon: Path | None = None  # None selects the bundled lexicon
    vectors: Path | None = None
    shots: int = 5
    master_seed: int = 0
    attack: AttackConfig = field(default_factory=AttackConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    embedding: EmbeddingProvider = field(default_factory=EmbeddingProvider)
    ratios: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    support_indices: tuple[int, ...] | None = None
    logreg_test_fraction: float = 0.25
    cluster_k: int = 5

    def __post_init__(self) -> None:
        if self.shots < 1:
            raise ConfigError(f"shots must be >= 1, got {self.shots}")
        for ratio in self.ratios:
            if not 0.0 < ratio <= 1.0:
                raise ConfigError(f"ratios must lie in (0,1], got {ratio}")

    def validate_paths(self) -> None:
        if not self.corpus.exists():
            raise ConfigError(f"corpus: path does not exist: {self.corpus}")
        if self.lexicon is not None and not self.lexicon.exists():
            raise ConfigError(f"lexicon: path does not exist: {self.lexicon}")
        if self.vectors is not None and not self.vectors.exists():
            raise ConfigError(f"vectors: path does not exist: {self.vectors}")


def _require(obj: dict, key: str, kind: type, where: str):
    if key not in obj:
        raise ConfigError(f"{where}: missing required field '{key}'")
    value = obj[key]
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{where}: field '{key}' must be {kind.__name__}")
    return value


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a config file; environment and CLI overrides win."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")

    for env_var, key in ENV_OVERRIDES.items():
        value = os.environ.get(env_var)
        if value is not None:
            raw[key] = int(value) if key == "master_seed" else value
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value

    corpus = Path(_require(raw, "corpus", str, "config"))
    out_dir = Path(_require(raw, "out_dir", str, "config"))
    master_seed = int(raw.get("master_seed", 0))
    # paths in the config are resolved relative to the config file
    base = path.parent
    if not corpus.is_absolute():
        corpus = base / corpus
    lexicon = raw.get("lexicon")
    if lexicon is not None:
        lexicon = Path(lexicon)
        if not lexicon.is_absolute():
            lexicon = base / lexicon
    vectors = raw.get("vectors")
    if vectors is not None:
        vectors = Path(vectors)
        if not vectors.is_absolute():
            vectors = base / vectors

    attack_raw = raw.get("attack", {})
    try:
        attack = AttackConfig(
            replacement_probability=float(attack_raw.get("replacement_probability", 0.3)),
            kind_weights=tuple(attack_raw.get("kind_weights", (1 / 3, 1 / 3, 1 / 3))),
            seed=derive(master_seed, "attack"),
            poison_ratio=float(attack_raw.get("poison_ratio", 1.0)),
        )
        spectral_raw = raw.get("spectral", {})
        spectral = SpectralConfig(
            flag_fraction=float(spectral_raw.get("flag_fraction", 0.02)),
            svd_components=int(spectral_raw.get("svd_components", 1)),
            power_iters_max=int(spectral_raw.get("power_iters_max", 1000)),
            convergence_tol=float(spectral_raw.get("convergence_tol", 1e-10)),
            seed=derive(master_seed, "spectral"),
        )
        predictor_raw = raw.get("predictor", {})
        predictor = PredictorConfig(
            kind=predictor_raw.get("kind", "mock"),
            endpoint=predictor_raw.get("endpoint"),
            max_retries=int(predictor_raw.get("max_retries", 3)),
            timeout=float(predictor_raw.get("timeout", 30.0)),
            temperature=float(predictor_raw.get("temperature", 0.0)),
        )
        embedding_raw = raw.get("embedding", {})
        embedding = EmbeddingProvider(
            kind="file" if vectors is not None else embedding_raw.get("kind", "synthetic"),
            path=str(vectors) if vectors is not None else None,
            dimension=int(embedding_raw.get("dimension", 32)),
            seed=derive(master_seed, "embedding"),
        )
        support_indices = raw.get("support_indices")
        config = RunConfig(
            corpus=corpus,
            out_dir=Path(out_dir),
            lexicon=lexicon,
            vectors=vectors,
            shots=int(raw.get("shots", 5)),
            master_seed=master_seed,
            attack=attack,
            spectral=spectral,
            predictor=predictor,
            embedding=embedding,
            ratios=tuple(float(r) for r in raw.get("ratios", (0.25, 0.5, 0.75, 1.0))),
            support_indices=tuple(support_indices) if support_indices is not None else None,
            logreg_test_fraction=float(raw.get("logreg_test_fraction", 0.25)),
            cluster_k=int(raw.get("cluster_k", 5)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from None
    config.validate_paths()
    return config


def config_fingerprint(path: str | Path) -> str:
    import hashlib

    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
