import re

import pytest

from poisonlab.attack import AttackConfig
from poisonlab.corpus import Dataset, Example, Sentiment
from poisonlab.icl import (
    Prediction,
    PredictorConfig,
    Prompt,
    Shot,
    SupportSet,
    UnparseableCompletion,
    build_prompt,
    parse_label,
    predict_mock,
    read_predictions,
    run_icl,
    sample_support,
    write_predictions,
)

P, N, NU = Sentiment.POSITIVE, Sentiment.NEGATIVE, Sentiment.NEUTRAL


def labeled_dataset(n=20, split="support"):
    examples = tuple(
        Example(id=i, text=f"support tweet number {i}", label=list(Sentiment)[i % 3], split=split)
        for i in range(n)
    )
    return Dataset(examples=examples)


class TestSampleSupport:
    def test_exhaustive_draw(self):
        ds = labeled_dataset(5)
        supports = sample_support(ds, 5, seed=0, target_id=99)
        assert sorted(s.id for s in supports) == [0, 1, 2, 3, 4]

    def test_deterministic_per_target(self):
        ds = labeled_dataset(30)
        a = sample_support(ds, 5, seed=4, target_id=7)
        b = sample_support(ds, 5, seed=4, target_id=7)
        assert a == b

    def test_target_never_included(self):
        ds = labeled_dataset(10)
        for target_id in range(10):
            supports = sample_support(ds, 5, seed=1, target_id=target_id)
            assert target_id not in {s.id for s in supports}

    def test_too_few_supports_errors(self):
        with pytest.raises(ValueError, match="only"):
            sample_support(labeled_dataset(3), 5, seed=0, target_id=99)

    def test_distinct_targets_mostly_distinct_draws(self):
        ds = labeled_dataset(100)
        draws = [
            frozenset(s.id for s in sample_support(ds, 5, seed=0, target_id=1000 + t))
            for t in range(1000)
        ]
        differing = sum(1 for a, b in zip(draws, draws[1:]) if a != b)
        assert differing / (len(draws) - 1) >= 0.99


class TestBuildPrompt:
    def test_published_two_block_prompt(self):
        supports = SupportSet(
            (Shot(id=0, text="Respiratory viruses HMPV propagates rapidly in crowded places", label=NU),)
        )
        target = Example(id=1, text="Respiratory viruses HMPV spreads easily crowded places")
        prompt = build_prompt(supports, target)
        assert prompt.rendered == (
            "Tweet: Respiratory viruses HMPV propagates rapidly in crowded places\n"
            "Sentiment: neutral\n"
            "\n"
            "Tweet: Respiratory viruses HMPV spreads easily crowded places\n"
            "Sentiment:"
        )

    def test_zero_shots_unconstructible(self):
        with pytest.raises(ValueError):
            SupportSet(())

    def test_counting_five_shots(self):
        supports = SupportSet(
            tuple(Shot(id=i, text=f"text {i}", label=list(Sentiment)[i % 3]) for i in range(5))
        )
        prompt = build_prompt(supports, Example(id=9, text="target text"))
        assert prompt.rendered.count("Tweet: ") == 6
        assert prompt.rendered.count("Sentiment") == 6

    def test_ends_with_bare_sentiment(self):
        supports = SupportSet((Shot(id=0, text="a b", label=P),))
        prompt = build_prompt(supports, Example(id=1, text="c d"))
        assert prompt.rendered.endswith("Sentiment:")
        assert not prompt.rendered.endswith(" ") and not prompt.rendered.endswith("\n")

    def test_prompt_grammar(self):
        grammar = re.compile(
            r"^(Tweet: [^\n]+\nSentiment: (positive|negative|neutral)\n\n)+"
            r"Tweet: [^\n]+\nSentiment:$"
        )
        for k in (1, 3, 5):
            supports = SupportSet(
                tuple(Shot(id=i, text=f"shot text {i}", label=list(Sentiment)[i % 3]) for i in range(k))
            )
            prompt = build_prompt(supports, Example(id=50, text="the target"))
            assert grammar.match(prompt.rendered), prompt.rendered


class TestParseLabel:
    def test_direct_match(self):
        assert parse_label(" Positive\n\nTweet:") is P

    def test_case_insensitive_word_match(self):
        assert parse_label("I'd say this is negative.") is N

    def test_unparseable_raises(self):
        with pytest.raises(UnparseableCompletion):
            parse_label("sentiment unclear")

    def test_embedded_words_do_not_match(self):
        with pytest.raises(UnparseableCompletion):
            parse_label("positively glowing")

    def test_first_occurrence_wins(self):
        assert parse_label("neutral, maybe negative") is NU

    def test_round_trip_all_labels(self):
        for sentiment in Sentiment:
            assert parse_label(sentiment.value) is sentiment
            assert parse_label(f"Sentiment: {sentiment.value.lower()}") is sentiment


class TestPredictMock:
    def test_exact_overlap(self):
        supports = SupportSet((Shot(id=0, text="great vaccine news", label=P),))
        prediction = predict_mock(supports, "great vaccine news", 9)
        assert prediction.label is P

    def test_zero_overlap_falls_back_to_neutral(self):
        supports = SupportSet((Shot(id=0, text="alpha beta", label=P),))
        prediction = predict_mock(supports, "gamma delta", 9)
        assert prediction.label is NU

    def test_tie_breaks_by_canonical_order(self):
        supports = SupportSet(
            (Shot(id=0, text="same text", label=NU), Shot(id=1, text="same text", label=N))
        )
        prediction = predict_mock(supports, "same text", 9)
        assert prediction.label is N  # Negative < Neutral canonically

    def test_order_insensitive(self):
        shots = (
            Shot(id=0, text="virus is bad", label=N),
            Shot(id=1, text="virus is good", label=P),
            Shot(id=2, text="virus report out", label=NU),
        )
        a = predict_mock(SupportSet(shots), "virus is here", 9)
        b = predict_mock(SupportSet(shots[::-1]), "virus is here", 9)
        assert a.label is b.label

    def test_negation_flips_nearest_support_vote(self):
        # hand-evaluated: clean similarities 1.0 / 0.75 / 0.75 give Positive;
        # negating the top support drops it to 0.75, a three-way tie where
        # Negative holds the majority
        from poisonlab.attack import negation_insert

        clean = SupportSet(
            (
                Shot(id=0, text="vaccine is working", label=P),
                Shot(id=1, text="vaccine is working slowly", label=N),
                Shot(id=2, text="vaccine is working poorly", label=N),
            )
        )
        target = "vaccine is working"
        assert predict_mock(clean, target, 9).label is P
        poisoned = SupportSet(
            (
                Shot(id=0, text=negation_insert("vaccine is working"), label=P),
                clean.shots[1],
                clean.shots[2],
            )
        )
        assert predict_mock(poisoned, target, 9).label is N

    def test_raw_completion_parses_back(self):
        supports = SupportSet((Shot(id=0, text="x y", label=P),))
        prediction = predict_mock(supports, "x y", 3)
        assert parse_label(prediction.raw_completion) is prediction.label


def flip_fixture():
    """Three supports, three targets; always-negate poisoning flips exactly
    two of the three mock predictions (hand-evaluated Jaccard arithmetic)."""
    supports = Dataset(
        examples=(
            Example(id=0, text="virus is not dangerous", label=P, split="support"),
            Example(id=1, text="virus is dangerous", label=N, split="support"),
            Example(id=2, text="virus dangerous", label=N, split="support"),
        )
    )
    targets = Dataset(
        examples=(
            Example(id=10, text="virus is not dangerous", label=P, split="target"),
            Example(id=11, text="virus is not scary", label=P, split="target"),
            Example(id=12, text="virus is spreading", label=N, split="target"),
        )
    )
    attack = AttackConfig(kind_weights=(0.0, 1.0, 0.0), seed=123, poison_ratio=1.0)
    return supports, targets, attack


class TestRunIcl:
    def test_deterministic(self, lexicon):
        ds = labeled_dataset(20)
        targets = Dataset(
            examples=tuple(Example(id=100 + i, text=f"target tweet {i}", split="target") for i in range(10))
        )
        config = PredictorConfig(kind="mock")
        a, _ = run_icl(targets, ds, None, config, k=5, seed=3)
        b, _ = run_icl(targets, ds, None, config, k=5, seed=3)
        assert a == b

    def test_zero_poison_equals_no_attack(self, lexicon):
        ds = labeled_dataset(20)
        targets = Dataset(
            examples=tuple(Example(id=100 + i, text=f"support tweet number {i}", split="target") for i in range(8))
        )
        config = PredictorConfig(kind="mock")
        none_run, none_records = run_icl(targets, ds, None, config, k=5, seed=3)
        zero = AttackConfig(seed=77, poison_ratio=0.0)
        zero_run, zero_records = run_icl(targets, ds, zero, config, k=5, seed=3, lexicon=lexicon)
        assert none_run == zero_run
        assert none_records == []
        assert all(r.perturbed == r.original for r in zero_records)

    def test_engineered_two_of_three_flip(self, lexicon):
        supports, targets, attack = flip_fixture()
        config = PredictorConfig(kind="mock")
        clean, _ = run_icl(targets, supports, None, config, k=3, seed=0)
        poisoned, records = run_icl(targets, supports, attack, config, k=3, seed=0, lexicon=lexicon)
        flipped = [c.target_id for c, p in zip(clean, poisoned) if c.label is not p.label]
        assert flipped == [10, 11]
        assert len(records) == 9  # one per shot per target

    def test_concurrent_matches_sequential(self, lexicon):
        ds = labeled_dataset(20)
        targets = Dataset(
            examples=tuple(Example(id=100 + i, text=f"target tweet {i}", split="target") for i in range(10))
        )
        config = PredictorConfig(kind="mock")
        seq, _ = run_icl(targets, ds, None, config, k=5, seed=3)
        par, _ = run_icl(targets, ds, None, config, k=5, seed=3, max_concurrency=4)
        assert seq == par


class TestPredictionsFile:
    def test_round_trip_including_abstention(self, tmp_path):
        predictions = [
            Prediction(target_id=1, label=P, raw_completion="Positive"),
            Prediction(target_id=2, label=None, raw_completion="???"),
            Prediction(target_id=3, label=NU, raw_completion="it is neutral"),
        ]
        path = tmp_path / "preds.csv"
        write_predictions(predictions, path)
        loaded = read_predictions(path)
        assert [(p.target_id, p.label, p.abstained) for p in loaded] == [
            (1, P, False),
            (2, None, True),
            (3, NU, False),
        ]
        header = path.read_text(encoding="utf-8").splitlines()[0]
        assert header == "target_id,label,raw_completion,abstained"
