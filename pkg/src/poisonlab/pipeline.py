"""Pipeline stages behind the CLI: ingest, attack, predict, eval, defend,
sweep, manifest. Each stage reads/writes the artifact files under the run's
output directory, so stages can be rerun individually.
"""

from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

import numpy as np

from . import analytics, attack, corpus, embeddings, icl, spectral
from .config import RunConfig
from .seeding import derive

ARTIFACTS = {
    "corpus": "corpus.jsonl",
    "audit": "audit.csv",
    "pool_audit": "pool_audit.csv",
    "support_poisoned": "support_poisoned.jsonl",
    "predictions_clean": "predictions_clean.csv",
    "predictions_poisoned": "predictions_poisoned.csv",
    "robustness_csv": "robustness.csv",
    "robustness_json": "robustness.json",
    "embeddings": "embeddings.jsonl",
    "spectral": "spectral.json",
    "scores": "spectral_scores.csv",
    "plot": "plot.csv",
    "clusters": "clusters.csv",
    "polarity": "polarity.json",
    "defense": "defense.json",
    "sweep": "sweep.csv",
    "manifest": "manifest.json",
}


def artifact_path(out_dir: Path, name: str) -> Path:
    return out_dir / ARTIFACTS[name]


def _load_lexicon(config: RunConfig) -> attack.SynonymLexicon:
    if config.lexicon is None:
        return attack.bundled_lexicon()
    return attack.SynonymLexicon.load(config.lexicon)


def stage_ingest(config: RunConfig) -> corpus.Dataset:
    """Load, dedup, optionally partition, and persist the canonical corpus."""
    dataset = corpus.load_dataset(config.corpus)
    if config.support_indices is not None:
        dataset, report = corpus.partition_support_target(dataset, config.support_indices)
        for warning in report.warnings:
            print(f"warning: {warning}")
        if report.filtered_indices:
            print(f"warning: filtered {len(report.filtered_indices)} invalid support indices")
    if not dataset.with_split("support"):
        raise corpus.CorpusError("corpus has no support examples (set split or support_indices)")
    if not dataset.with_split("target"):
        raise corpus.CorpusError("corpus has no target examples")
    corpus.save_dataset(dataset, artifact_path(config.out_dir, "corpus"))
    return dataset


def _load_corpus_artifact(config: RunConfig) -> corpus.Dataset:
    path = artifact_path(config.out_dir, "corpus")
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}; run ingest first")
    return corpus.load_dataset(path)


def _support_pool(dataset: corpus.Dataset) -> icl.SupportSet:
    supports = dataset.with_split("support")
    return icl.SupportSet(
        tuple(icl.Shot(id=ex.id, text=ex.text, label=ex.label) for ex in supports)
    )


def stage_attack(config: RunConfig, dataset: corpus.Dataset | None = None) -> list[attack.PerturbationRecord]:
    """Poison the whole support pool once and persist pool + audit."""
    dataset = dataset or _load_corpus_artifact(config)
    pool = _support_pool(dataset)
    poisoned_pool, records = attack.poison_support_set(pool, config.attack, _load_lexicon(config))
    attack.write_audit_log(records, artifact_path(config.out_dir, "pool_audit"))
    poisoned_examples = tuple(
        corpus.Example(id=s.id, text=s.text, label=s.label, split="support") for s in poisoned_pool
    )
    corpus.save_dataset(
        corpus.Dataset(examples=poisoned_examples),
        artifact_path(config.out_dir, "support_poisoned"),
    )
    return records


def stage_predict(config: RunConfig, dataset: corpus.Dataset | None = None) -> None:
    """Clean and poisoned per-target ICL runs plus the per-query audit log."""
    dataset = dataset or _load_corpus_artifact(config)
    supports = corpus.Dataset(examples=dataset.with_split("support"))
    targets = corpus.Dataset(examples=dataset.with_split("target"))
    lexicon = _load_lexicon(config)
    clean, _ = icl.run_icl(
        targets, supports, attack=None, predictor=config.predictor,
        k=config.shots, seed=config.master_seed,
    )
    poisoned, records = icl.run_icl(
        targets, supports, attack=config.attack, predictor=config.predictor,
        k=config.shots, seed=config.master_seed, lexicon=lexicon,
    )
    icl.write_predictions(clean, artifact_path(config.out_dir, "predictions_clean"))
    icl.write_predictions(poisoned, artifact_path(config.out_dir, "predictions_poisoned"))
    attack.write_audit_log(records, artifact_path(config.out_dir, "audit"))


def stage_eval(config: RunConfig, dataset: corpus.Dataset | None = None) -> analytics.RobustnessReport:
    """Clean-vs-poisoned robustness metrics from the stored predictions."""
    dataset = dataset or _load_corpus_artifact(config)
    for name in ("predictions_clean", "predictions_poisoned"):
        if not artifact_path(config.out_dir, name).exists():
            raise FileNotFoundError(f"missing artifact {artifact_path(config.out_dir, name)}; run predict first")
    clean = icl.read_predictions(artifact_path(config.out_dir, "predictions_clean"))
    poisoned = icl.read_predictions(artifact_path(config.out_dir, "predictions_poisoned"))
    truth = corpus.Dataset(examples=dataset.with_split("target"))
    report = analytics.build_robustness_report(clean, poisoned, truth)
    analytics.write_robustness_csv(report, artifact_path(config.out_dir, "robustness_csv"))
    analytics.write_robustness_json(report, artifact_path(config.out_dir, "robustness_json"))
    return report


def stage_defend(config: RunConfig, dataset: corpus.Dataset | None = None) -> spectral.SpectralReport:
    """Spectral defense over the poisoned support pool plus the post-defense
    validators (ICL accuracy, embedding classifier, polarity, clusters, plot)."""
    dataset = dataset or _load_corpus_artifact(config)
    pool_path = artifact_path(config.out_dir, "support_poisoned")
    if not pool_path.exists():
        raise FileNotFoundError(f"missing artifact {pool_path}; run attack first")
    poisoned_pool = corpus.load_dataset(pool_path)
    texts = [ex.text for ex in poisoned_pool]
    ids = [ex.id for ex in poisoned_pool]
    labels = [ex.label for ex in poisoned_pool]

    matrix = config.embedding.embed(texts, ids)
    embeddings.write_vectors(matrix, artifact_path(config.out_dir, "embeddings"))
    report, _ = spectral.run_defense(matrix, config.spectral)
    spectral.write_spectral_report(report, artifact_path(config.out_dir, "spectral"))
    spectral.write_scores(report, artifact_path(config.out_dir, "scores"))

    flagged = set(report.flagged_ids)
    normalized = spectral.zscore_normalize(matrix)
    coords = analytics.project_2d(normalized, seed=derive(config.master_seed, "plot"))
    analytics.write_plot_csv(matrix.row_ids, coords, flagged, artifact_path(config.out_dir, "plot"))

    keep = [i for i, row_id in enumerate(ids) if row_id not in flagged]
    clean_examples = tuple(poisoned_pool.examples[i] for i in keep)
    clean_texts = [ex.text for ex in clean_examples]
    # downstream validators see the raw (un-normalized) embedding geometry
    clean_matrix = matrix.select_ids([ex.id for ex in clean_examples])

    lexicon = analytics.bundled_polarity_lexicon()
    avg_polarity = analytics.polarity_score(clean_texts, lexicon)
    analytics.write_polarity_json(avg_polarity, len(clean_texts), artifact_path(config.out_dir, "polarity"))

    k = min(config.cluster_k, len(clean_examples))
    clusters = analytics.kmeans(
        clean_matrix, k=k, seed=derive(config.master_seed, "clusters")
    )
    analytics.write_cluster_csv(clusters.sizes, artifact_path(config.out_dir, "clusters"))

    defense_extra = _post_defense_validation(config, dataset, clean_examples, clean_matrix)
    defense_extra["n_flagged"] = report.n_flagged
    defense_extra["n_total"] = report.n_total
    defense_extra["flag_rate"] = report.flag_rate
    defense_extra["avg_polarity"] = avg_polarity
    defense_extra["cluster_sizes"] = list(clusters.sizes)
    with open(artifact_path(config.out_dir, "defense"), "w", encoding="utf-8") as fh:
        json.dump(defense_extra, fh, indent=2)
        fh.write("\n")
    return report


def _post_defense_validation(config, dataset, clean_examples, clean_matrix) -> dict:
    """Post-defense ICL accuracy on targets and a held-out softmax classifier."""
    targets = corpus.Dataset(examples=dataset.with_split("target"))
    result: dict = {
        "post_defense_icl_accuracy": None,
        "logreg_train_accuracy": None,
        "logreg_test_accuracy": None,
    }
    support_dataset = corpus.Dataset(examples=clean_examples)
    if len(clean_examples) >= config.shots and any(ex.label is not None for ex in targets):
        predictions, _ = icl.run_icl(
            targets, support_dataset, attack=None, predictor=config.predictor,
            k=config.shots, seed=derive(config.master_seed, "post_defense_icl"),
        )
        if any(not p.abstained for p in predictions):
            result["post_defense_icl_accuracy"] = analytics.accuracy(predictions, targets)

    try:
        train, test = corpus.stratified_split(
            support_dataset, config.logreg_test_fraction, seed=derive(config.master_seed, "logreg_split")
        )
        train_matrix = clean_matrix.select_ids([ex.id for ex in train])
        test_matrix = clean_matrix.select_ids([ex.id for ex in test])
        model = analytics.train_logreg(
            train_matrix,
            [ex.label for ex in train],
            seed=derive(config.master_seed, "logreg"),
        )
        train_codes = np.array([corpus.LABEL_CODES[ex.label] for ex in train])
        test_codes = np.array([corpus.LABEL_CODES[ex.label] for ex in test])
        result["logreg_train_accuracy"] = model.training_accuracy(train_matrix.data, train_codes)
        result["logreg_test_accuracy"] = model.training_accuracy(test_matrix.data, test_codes)
    except (corpus.CorpusError, analytics.MetricError) as exc:
        result["logreg_note"] = str(exc)
    return result


def stage_sweep(config: RunConfig, dataset: corpus.Dataset | None = None) -> list[spectral.DefenseEvalRow]:
    """Defense evaluation across the configured poisoning ratios."""
    dataset = dataset or _load_corpus_artifact(config)
    rows = spectral.defense_sweep(
        dataset,
        config.embedding,
        config.attack,
        list(config.ratios),
        config.spectral,
        config.predictor,
        _load_lexicon(config),
        k=config.shots,
    )
    spectral.write_sweep(rows, artifact_path(config.out_dir, "sweep"))
    return rows


def write_manifest(config: RunConfig, config_path: Path, started: float) -> None:
    """Checksums and timings for a completed run. The only artifact holding
    wall-clock values, so byte comparisons of reruns can skip just this file."""
    checksums = {}
    for name, filename in ARTIFACTS.items():
        path = config.out_dir / filename
        if name != "manifest" and path.exists():
            checksums[filename] = hashlib.sha256(path.read_bytes()).hexdigest()
    payload = {
        "config_file": str(config_path),
        "config_sha256": hashlib.sha256(config_path.read_bytes()).hexdigest(),
        "master_seed": config.master_seed,
        "artifact_sha256": checksums,
        "started_unix": started,
        "elapsed_seconds": time.time() - started,
    }
    with open(artifact_path(config.out_dir, "manifest"), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def run_all(config: RunConfig, config_path: Path) -> dict:
    """The full experiment in pipeline order. Returns headline numbers."""
    started = time.time()
    config.out_dir.mkdir(parents=True, exist_ok=True)
    failed_marker = config.out_dir / "FAILED"
    if failed_marker.exists():
        failed_marker.unlink()
    try:
        dataset = stage_ingest(config)
        stage_attack(config, dataset)
        stage_predict(config, dataset)
        report = stage_eval(config, dataset)
        spectral_report = stage_defend(config, dataset)
        rows = stage_sweep(config, dataset)
    except Exception:
        failed_marker.write_text("run failed; see traceback\n", encoding="utf-8")
        raise
    write_manifest(config, config_path, started)
    return {
        "robustness": report,
        "spectral": spectral_report,
        "sweep": rows,
    }
