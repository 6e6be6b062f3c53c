import numpy as np
import pytest

from oracles import accuracy_oracle, flip_oracle, macro_prf_oracle
from poisonlab.analytics import (
    ClusterAssignment,
    ConfusionTally,
    MetricError,
    PolarityLexicon,
    RobustnessReport,
    accuracy,
    bundled_polarity_lexicon,
    build_robustness_report,
    flip_rate,
    kmeans,
    logreg_loss_and_grads,
    macro_prf,
    polarity_score,
    project_2d,
    tally_predictions,
    text_polarity,
    train_logreg,
    write_cluster_csv,
)
from poisonlab.corpus import Dataset, Example, Sentiment
from poisonlab.embeddings import EmbeddingMatrix, synthetic_embed
from poisonlab.icl import Prediction
from poisonlab.seeding import numpy_rng

P, N, NU = Sentiment.POSITIVE, Sentiment.NEGATIVE, Sentiment.NEUTRAL
NAMES = {P: "Positive", N: "Negative", NU: "Neutral"}


def preds(pairs):
    return [
        Prediction(target_id=i, label=label, raw_completion=label.value if label else "???")
        for i, label in pairs
    ]


def truth_of(labels):
    return Dataset(
        examples=tuple(
            Example(id=i, text=f"text {i}", label=label, split="target")
            for i, label in enumerate(labels)
        )
    )


class TestAccuracy:
    def test_two_of_three(self):
        truth = truth_of([P, N, NU])
        predictions = preds([(0, P), (1, N), (2, P)])
        assert abs(accuracy(predictions, truth) - 2 / 3) <= 1e-9

    def test_all_abstained_errors(self):
        truth = truth_of([P, N])
        predictions = preds([(0, None), (1, None)])
        with pytest.raises(MetricError, match="abstained"):
            accuracy(predictions, truth)

    def test_abstentions_excluded_from_denominator(self):
        truth = truth_of([P, N, NU, P])
        predictions = preds([(0, P), (1, None), (2, NU), (3, N)])
        assert accuracy(predictions, truth) == 2 / 3


class TestFlipRate:
    def test_hand_count(self):
        clean = preds([(0, P), (1, N), (2, NU)])
        poisoned = preds([(0, P), (1, P), (2, NU)])
        overall, per_class = flip_rate(clean, poisoned)
        assert abs(overall - 1 / 3) <= 1e-12
        assert per_class == {P: 0.0, N: 1.0, NU: 0.0}

    def test_identity_gives_zero(self):
        clean = preds([(0, P), (1, N), (2, NU)])
        overall, per_class = flip_rate(clean, clean)
        assert overall == 0.0
        assert all(rate == 0.0 for rate in per_class.values())

    def test_symmetric_overall(self):
        rng = np.random.default_rng(0)
        labels = list(Sentiment)
        a = preds([(i, labels[int(rng.integers(3))]) for i in range(40)])
        b = preds([(i, labels[int(rng.integers(3))]) for i in range(40)])
        assert flip_rate(a, b)[0] == flip_rate(b, a)[0]

    def test_abstained_pairs_excluded(self):
        clean = preds([(0, P), (1, None), (2, NU)])
        poisoned = preds([(0, N), (1, P), (2, None)])
        overall, _ = flip_rate(clean, poisoned)
        assert overall == 1.0  # only target 0 evaluated

    def test_no_common_pairs_errors(self):
        with pytest.raises(MetricError, match="common"):
            flip_rate(preds([(0, None)]), preds([(0, P)]))


class TestMacroPrf:
    def test_perfect_diagonal(self):
        tally = ConfusionTally(counts=((5, 0, 0), (0, 4, 0), (0, 0, 3)))
        assert macro_prf(tally) == (1.0, 1.0, 1.0)

    def test_hand_computed_confusion(self):
        # truth P: predicted P once, N once; truth N: predicted N twice;
        # truth NU: predicted NU once, P once
        tally = ConfusionTally(counts=((1, 1, 0), (0, 2, 0), (1, 0, 1)))
        pairs = (
            [("Positive", "Positive"), ("Positive", "Negative")]
            + [("Negative", "Negative")] * 2
            + [("Neutral", "Neutral"), ("Neutral", "Positive")]
        )
        expected = macro_prf_oracle(pairs)
        got = macro_prf(tally)
        assert np.allclose(got, expected, atol=1e-12)
        assert np.allclose(got, (0.7222222222222222, 0.6666666666666666, 0.6555555555555556))

    def test_absent_class_contributes_zeros(self):
        # Neutral never true and never predicted
        tally = ConfusionTally(counts=((2, 0, 0), (0, 2, 0), (0, 0, 0)))
        precision, recall, f1 = macro_prf(tally)
        assert precision == recall == f1 == 2 / 3


class TestMetricOracleSuite:
    def test_random_fixtures_match_recounts(self):
        labels = list(Sentiment)
        rng = np.random.default_rng(42)
        for trial in range(60):
            n = int(rng.integers(3, 40))
            truth_labels = [labels[int(rng.integers(3))] for _ in range(n)]
            truth = truth_of(truth_labels)

            def draw():
                out = []
                for i in range(n):
                    if rng.random() < 0.1:
                        out.append((i, None))
                    else:
                        out.append((i, labels[int(rng.integers(3))]))
                return out

            clean_pairs, poisoned_pairs = draw(), draw()
            clean, poisoned = preds(clean_pairs), preds(poisoned_pairs)

            acc_pairs = [
                (NAMES[truth_labels[i]], NAMES[label] if label else None)
                for i, label in clean_pairs
            ]
            try:
                expected_acc = accuracy_oracle(acc_pairs)
            except ZeroDivisionError:
                with pytest.raises(MetricError):
                    accuracy(clean, truth)
            else:
                assert abs(accuracy(clean, truth) - expected_acc) <= 1e-12

            clean_map = {i: NAMES[label] if label else None for i, label in clean_pairs}
            pois_map = {i: NAMES[label] if label else None for i, label in poisoned_pairs}
            try:
                expected_flip, expected_per_class = flip_oracle(clean_map, pois_map)
            except ZeroDivisionError:
                with pytest.raises(MetricError):
                    flip_rate(clean, poisoned)
            else:
                overall, per_class = flip_rate(clean, poisoned)
                assert abs(overall - expected_flip) <= 1e-12
                for sentiment in Sentiment:
                    assert abs(per_class[sentiment] - expected_per_class[sentiment.value]) <= 1e-12

            expected_prf = macro_prf_oracle(acc_pairs)
            got_prf = macro_prf(tally_predictions(clean, truth))
            assert np.allclose(got_prf, expected_prf, atol=1e-12)


class TestRobustnessReport:
    def test_drop_is_exact_difference(self):
        clean = preds([(0, P), (1, N), (2, NU)])
        poisoned = preds([(0, N), (1, N), (2, NU)])
        report = build_robustness_report(clean, poisoned, truth_of([P, N, NU]))
        assert report.accuracy_drop == report.accuracy_clean - report.accuracy_poisoned
        assert report.poisoning_success_rate == report.flip_rate


def separable_fixture(n_per_class=20, d=8, spread=0.05, separation=10.0, seed=0):
    rng = np.random.default_rng(seed)
    centers = separation * np.eye(3, d)
    rows, labels = [], []
    for class_index, sentiment in enumerate(Sentiment):
        block = centers[class_index] + spread * rng.standard_normal((n_per_class, d))
        rows.append(block)
        labels.extend([sentiment] * n_per_class)
    matrix = EmbeddingMatrix(row_ids=tuple(range(3 * n_per_class)), data=np.vstack(rows))
    return matrix, labels


class TestLogReg:
    def test_gradient_matches_central_differences(self):
        matrix, labels = separable_fixture(n_per_class=2, d=4, spread=1.0, separation=1.0)
        data = matrix.data
        codes = np.array([{P: 0, N: 1, NU: 2}[label] for label in labels])
        l2 = 1e-3
        rng = numpy_rng(123, "gradcheck")
        for _ in range(5):
            weights = 0.5 * rng.standard_normal((3, 4))
            bias = 0.5 * rng.standard_normal(3)
            _, grad_w, grad_b = logreg_loss_and_grads(weights, bias, data, codes, l2)
            analytic = np.concatenate([grad_w.ravel(), grad_b])
            h = 1e-5
            numeric = np.empty_like(analytic)
            theta = np.concatenate([weights.ravel(), bias])

            def loss_at(vector):
                w = vector[:12].reshape(3, 4)
                b = vector[12:]
                return logreg_loss_and_grads(w, b, data, codes, l2)[0]

            for i in range(theta.size):
                up, down = theta.copy(), theta.copy()
                up[i] += h
                down[i] -= h
                numeric[i] = (loss_at(up) - loss_at(down)) / (2 * h)
            rel = np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)
            assert rel <= 1e-6

    def test_separable_clusters_reach_perfect_training_accuracy(self):
        matrix, labels = separable_fixture()
        model = train_logreg(matrix, labels, seed=1)
        codes = np.array([{P: 0, N: 1, NU: 2}[label] for label in labels])
        assert model.training_accuracy(matrix.data, codes) == 1.0

    def test_loss_trace_non_increasing(self):
        matrix, labels = separable_fixture()
        model = train_logreg(matrix, labels, seed=1)
        diffs = np.diff(model.loss_trace)
        assert np.all(diffs <= 1e-12)

    def test_duplicating_rows_leaves_predictions_unchanged(self):
        matrix, labels = separable_fixture(n_per_class=5)
        doubled = EmbeddingMatrix(
            row_ids=tuple(range(2 * matrix.n)),
            data=np.vstack([matrix.data, matrix.data]),
        )
        model_single = train_logreg(matrix, labels, seed=3)
        model_double = train_logreg(doubled, labels + labels, seed=3)
        assert np.array_equal(
            model_single.predict(matrix.data), model_double.predict(matrix.data)
        )

    def test_divergence_detected(self):
        matrix, labels = separable_fixture(n_per_class=3, separation=50.0)
        with pytest.raises(MetricError, match="divergence"):
            train_logreg(matrix, labels, step=1e9, epochs=50, seed=0)

    def test_missing_class_rejected(self):
        matrix, _ = separable_fixture(n_per_class=2)
        with pytest.raises(MetricError, match="classes"):
            train_logreg(matrix, [P] * matrix.n, seed=0)


def blob_fixture(sizes, d=6, separation=30.0, spread=0.5, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i, size in enumerate(sizes):
        center = rng.standard_normal(d)
        center *= separation / np.linalg.norm(center)
        rows.append(center + spread * rng.standard_normal((size, d)))
    data = np.vstack(rows)
    return EmbeddingMatrix(row_ids=tuple(range(data.shape[0])), data=data)


class TestKmeans:
    def test_recovers_blob_sizes(self):
        sizes = (30, 10, 40, 10, 20)
        hits = 0
        for seed in range(20):
            matrix = blob_fixture(sizes, seed=seed)
            result = kmeans(matrix, k=5, seed=seed)
            if sorted(result.sizes) == sorted(sizes):
                hits += 1
        assert hits >= 19  # >= 95% of 20 seeds

    def test_k_equals_n_zero_inertia(self):
        rng = np.random.default_rng(0)
        matrix = EmbeddingMatrix(row_ids=tuple(range(6)), data=rng.standard_normal((6, 3)))
        result = kmeans(matrix, k=6, seed=0)
        assert result.inertia == 0.0
        assert sorted(result.sizes) == [1] * 6

    def test_k_exceeding_n_errors(self):
        rng = np.random.default_rng(0)
        matrix = EmbeddingMatrix(row_ids=(0, 1), data=rng.standard_normal((2, 3)))
        with pytest.raises(MetricError):
            kmeans(matrix, k=3, seed=0)

    def test_inertia_trace_non_increasing(self):
        for seed in range(5):
            matrix = blob_fixture((15, 25, 10), seed=seed, separation=3.0, spread=2.0)
            result = kmeans(matrix, k=3, seed=seed)
            diffs = np.diff(result.inertia_trace)
            assert np.all(diffs <= 1e-9)

    def test_centroids_are_member_means_at_convergence(self):
        matrix = blob_fixture((12, 18), seed=3)
        result = kmeans(matrix, k=2, seed=3)
        for cluster in range(2):
            members = matrix.data[result.labels == cluster]
            assert np.allclose(result.centroids[cluster], members.mean(axis=0), atol=1e-9)

    def test_sizes_sum_to_n(self):
        matrix = blob_fixture((9, 7, 5), seed=1)
        result = kmeans(matrix, k=3, seed=1)
        assert sum(result.sizes) == matrix.n

    def test_published_cluster_sizes_echo(self, tmp_path):
        sizes = (15_258, 4_228, 17_471, 4_099, 8_355)
        path = tmp_path / "clusters.csv"
        write_cluster_csv(sizes, path)
        content = path.read_text(encoding="utf-8")
        assert content.splitlines()[0] == "cluster,size"
        for size in sizes:
            assert str(size) in content


class TestPolarity:
    def test_single_token(self):
        lexicon = PolarityLexicon({"good": 1.0, "bad": -1.0})
        assert polarity_score(["good"], lexicon) == 1.0

    def test_symmetry(self):
        lexicon = PolarityLexicon({"good": 1.0, "bad": -1.0})
        assert polarity_score(["good", "bad"], lexicon) == 0.0

    def test_tokens_outside_lexicon_score_zero(self):
        lexicon = PolarityLexicon({"good": 1.0})
        assert text_polarity("entirely unknown words", lexicon) == 0.0

    def test_permutation_invariant(self):
        lexicon = bundled_polarity_lexicon()
        texts = [f"good bad fine terrible tweet {i}" for i in range(10)]
        assert polarity_score(texts, lexicon) == polarity_score(texts[::-1], lexicon)

    def test_bundled_lexicon_size(self):
        assert len(bundled_polarity_lexicon()) >= 300

    def test_removal_stability(self):
        lexicon = bundled_polarity_lexicon()
        rng = np.random.default_rng(0)
        vocabulary = ["good", "bad", "great", "awful", "fine", "terrible", "happy", "sad", "news", "virus"]
        texts = [
            " ".join(vocabulary[int(rng.integers(len(vocabulary)))] for _ in range(6))
            for _ in range(1000)
        ]
        base = polarity_score(texts, lexicon)
        drop = int(np.ceil(0.02 * len(texts)))
        for seed in range(20):
            seeded = np.random.default_rng(seed)
            removed = set(seeded.choice(len(texts), size=drop, replace=False).tolist())
            kept = [text for i, text in enumerate(texts) if i not in removed]
            assert abs(polarity_score(kept, lexicon) - base) <= 0.05


class TestProject2d:
    def test_rank_two_distances_preserved(self):
        rng = np.random.default_rng(7)
        latent = rng.standard_normal((40, 2))
        basis, _ = np.linalg.qr(rng.standard_normal((10, 2)))
        data = latent @ basis.T  # rank-2 rows in d=10
        matrix = EmbeddingMatrix(row_ids=tuple(range(40)), data=data)
        coords = project_2d(matrix, seed=0)
        original = np.linalg.norm(data[:, None, :] - data[None, :, :], axis=2)
        projected = np.linalg.norm(coords[:, None, :] - coords[None, :, :], axis=2)
        mask = original > 0
        rel = np.abs(projected[mask] - original[mask]) / original[mask]
        assert float(rel.max()) <= 1e-6

    def test_already_two_dimensional(self):
        # axis-aligned 2-D rows project onto themselves up to sign
        data = [[3.0, 0.0], [0.0, 1.0], [-3.0, 0.0], [0.0, -1.0]]
        matrix = EmbeddingMatrix(row_ids=(0, 1, 2, 3), data=data)
        coords = project_2d(matrix, seed=0)
        assert np.allclose(np.abs(coords), np.abs(np.array(data)), atol=1e-8)

    def test_planted_outliers_separate_in_plot(self):
        rng = np.random.default_rng(3)
        direction = rng.standard_normal(16)
        direction /= np.linalg.norm(direction)
        clean = rng.standard_normal((98, 16))
        poison = rng.standard_normal((2, 16)) + 8.0 * direction
        matrix = EmbeddingMatrix(
            row_ids=tuple(range(100)), data=np.vstack([clean, poison])
        )
        coords = project_2d(matrix, seed=0)
        clean_centroid = coords[:98].mean(axis=0)
        clean_dist = np.linalg.norm(coords[:98] - clean_centroid, axis=1).mean()
        poison_dist = np.linalg.norm(coords[98:] - clean_centroid, axis=1).mean()
        assert poison_dist > clean_dist

    def test_too_few_rows(self):
        matrix = EmbeddingMatrix(row_ids=(0, 1), data=[[1.0, 2.0], [3.0, 4.0]])
        with pytest.raises(MetricError):
            project_2d(matrix, seed=0)
