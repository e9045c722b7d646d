from __future__ import annotations

import json

import numpy as np
import pytest

from spoilkit.cascade import (
    CascadeConfig,
    HyperParams,
    ScorerError,
    SearchSpace,
    TagPrediction,
    default_search_space,
    evaluate_cascade,
    predict_tag,
    run_sweep,
    sample_configs,
    split_by_id_hash,
    train_baseline,
)
from spoilkit.corpus import Corpus, Record, SpoilerTag
from spoilkit.metrics import balanced_accuracy
from spoilkit.synthetic import separable_corpus


class ConstScorer:
    def __init__(self, value: float):
        self.value = value
        self.calls = 0

    def score(self, text: str) -> float:
        self.calls += 1
        return self.value


class FailingScorer:
    def score(self, text: str) -> float:
        raise ConnectionError("backend down")


def make_corpus(tag_sequence) -> Corpus:
    spoilers = {
        SpoilerTag.MULTI: ["one", "two"],
        SpoilerTag.PASSAGE: ["a longer answer that runs past five words"],
        SpoilerTag.PHRASE: ["short"],
    }
    records = [
        Record(id=str(i), title=f"title number {i}", paragraphs=["body"],
               spoilers=spoilers[tag], tag=tag)
        for i, tag in enumerate(tag_sequence)
    ]
    return Corpus("toy", records)


# --- predict_tag -------------------------------------------------------------


def test_predict_tag_accepts_multi_without_consulting_model2():
    model2 = ConstScorer(0.8)
    prediction = predict_tag("a title", ConstScorer(0.9), model2)
    assert prediction.tag is SpoilerTag.MULTI
    assert prediction.multi_score == 0.9
    assert prediction.passage_score is None
    assert model2.calls == 0


def test_predict_tag_routes_to_passage():
    prediction = predict_tag("a title", ConstScorer(0.1), ConstScorer(0.8))
    assert prediction.tag is SpoilerTag.PASSAGE
    assert prediction.passage_score == 0.8


def test_predict_tag_routes_to_phrase():
    prediction = predict_tag("a title", ConstScorer(0.1), ConstScorer(0.2))
    assert prediction.tag is SpoilerTag.PHRASE


def test_predict_tag_invariants_over_threshold_grid():
    for t1 in (0.3, 0.7):
        for t2 in (0.3, 0.7):
            config = CascadeConfig(multi_threshold=t1, passage_threshold=t2)
            for s1 in (0.2, 0.8):
                for s2 in (0.2, 0.8):
                    model2 = ConstScorer(s2)
                    p = predict_tag("t", ConstScorer(s1), model2, config)
                    assert (p.tag is SpoilerTag.MULTI) == (p.multi_score >= t1)
                    if p.tag is SpoilerTag.MULTI:
                        assert p.passage_score is None
                        assert model2.calls == 0
                    else:
                        assert (p.tag is SpoilerTag.PASSAGE) == (p.passage_score >= t2)


def test_predict_tag_rejects_empty_title():
    with pytest.raises(ValueError, match="non-empty"):
        predict_tag("   ", ConstScorer(0.5), ConstScorer(0.5))


def test_predict_tag_names_the_failing_model():
    with pytest.raises(ScorerError, match="model1"):
        predict_tag("t", FailingScorer(), ConstScorer(0.5))
    with pytest.raises(ScorerError, match="model2"):
        predict_tag("t", ConstScorer(0.1), FailingScorer())


def test_cascade_config_rejects_boundary_thresholds():
    for bad in (0.0, 1.0, -0.2, 1.5):
        with pytest.raises(ValueError):
            CascadeConfig(multi_threshold=bad)


# --- evaluate_cascade --------------------------------------------------------


class GoldTitleScorer:
    """Scores 1.0 exactly for titles whose gold tag is the positive class."""

    def __init__(self, corpus: Corpus, positive: SpoilerTag, rest: set[SpoilerTag]):
        self._positive = {r.title for r in corpus.records if r.tag is positive}

    def score(self, text: str) -> float:
        return 1.0 if text in self._positive else 0.0


def test_evaluate_cascade_perfect_scorers():
    corpus = make_corpus([SpoilerTag.PHRASE, SpoilerTag.PHRASE,
                          SpoilerTag.PASSAGE, SpoilerTag.PASSAGE,
                          SpoilerTag.MULTI, SpoilerTag.MULTI])
    model1 = GoldTitleScorer(corpus, SpoilerTag.MULTI, set())
    model2 = GoldTitleScorer(corpus, SpoilerTag.PASSAGE, set())
    report = evaluate_cascade(corpus, model1, model2)
    assert report.model1_balanced_accuracy == 1.0
    assert report.model2_balanced_accuracy == 1.0
    assert report.cascade_balanced_accuracy == 1.0
    assert report.confusion[SpoilerTag.MULTI][SpoilerTag.MULTI] == 2


def test_evaluate_cascade_constant_zero_scorers_predict_phrase():
    corpus = make_corpus([SpoilerTag.PHRASE, SpoilerTag.PHRASE,
                          SpoilerTag.PASSAGE, SpoilerTag.PASSAGE,
                          SpoilerTag.MULTI, SpoilerTag.MULTI])
    report = evaluate_cascade(corpus, ConstScorer(0.0), ConstScorer(0.0))
    assert all(
        report.confusion[gold][SpoilerTag.PHRASE] == 2 for gold in SpoilerTag
    )
    # recalls 1 (phrase), 0, 0
    assert abs(report.cascade_balanced_accuracy - 1 / 3) <= 1e-12


def test_evaluate_cascade_known_confusion_table():
    # model1 misses one multi; model2 mislabels one phrase as passage
    corpus = make_corpus([SpoilerTag.MULTI, SpoilerTag.MULTI,
                          SpoilerTag.PASSAGE, SpoilerTag.PASSAGE,
                          SpoilerTag.PHRASE, SpoilerTag.PHRASE])

    class TableScorer:
        def __init__(self, table):
            self.table = table

        def score(self, text):
            return self.table[text]

    titles = [r.title for r in corpus.records]
    model1 = TableScorer({titles[0]: 0.9, titles[1]: 0.1, titles[2]: 0.0,
                          titles[3]: 0.0, titles[4]: 0.0, titles[5]: 0.0})
    model2 = TableScorer({titles[0]: 0.5, titles[1]: 0.9, titles[2]: 0.9,
                          titles[3]: 0.9, titles[4]: 0.9, titles[5]: 0.1})
    report = evaluate_cascade(corpus, model1, model2)
    # cascade recalls: multi 1/2, passage 2/2, phrase 1/2
    assert abs(report.cascade_balanced_accuracy - (0.5 + 1.0 + 0.5) / 3) <= 1e-12
    assert report.confusion[SpoilerTag.MULTI][SpoilerTag.PASSAGE] == 1
    assert report.confusion[SpoilerTag.PHRASE][SpoilerTag.PASSAGE] == 1
    # model1 binary: multi recall 1/2, rest recall 4/4
    assert abs(report.model1_balanced_accuracy - (0.5 + 1.0) / 2) <= 1e-12
    # model2 binary over gold non-multi: passage recall 1, phrase recall 1/2
    assert abs(report.model2_balanced_accuracy - (1.0 + 0.5) / 2) <= 1e-12


def test_evaluate_cascade_three_class_score_equals_metric_on_its_own_pairs():
    corpus = make_corpus([SpoilerTag.MULTI, SpoilerTag.PASSAGE, SpoilerTag.PHRASE] * 4)
    rng = np.random.default_rng(3)
    table1 = {r.title: float(rng.uniform()) for r in corpus.records}
    table2 = {r.title: float(rng.uniform()) for r in corpus.records}

    class Lookup:
        def __init__(self, table):
            self.table = table

        def score(self, text):
            return self.table[text]

    report = evaluate_cascade(corpus, Lookup(table1), Lookup(table2))
    pairs = [(r.tag, p.tag) for r, p in zip(corpus.records, report.predictions)]
    assert report.cascade_balanced_accuracy == balanced_accuracy(pairs)


def test_evaluate_cascade_requires_all_gold_classes():
    corpus = make_corpus([SpoilerTag.PHRASE, SpoilerTag.PASSAGE])
    with pytest.raises(ValueError, match="missing gold classes"):
        evaluate_cascade(corpus, ConstScorer(0.5), ConstScorer(0.5))


# --- native baseline ---------------------------------------------------------


def test_train_baseline_separable_corpus_fits_perfectly():
    corpus = separable_corpus(120, seed=1)
    hp = HyperParams(batch_size=16, epochs=5, learning_rate=0.5, weight_decay=0.001)
    scorer = train_baseline(corpus, "multi-vs-rest", hp, seed=0)
    pairs = [
        (r.tag is SpoilerTag.MULTI, scorer.score(r.title) >= 0.5) for r in corpus.records
    ]
    assert balanced_accuracy(pairs) == 1.0


def test_train_baseline_is_deterministic():
    corpus = separable_corpus(60, seed=2)
    hp = HyperParams(batch_size=8, epochs=3, learning_rate=0.3, weight_decay=0.1)
    first = train_baseline(corpus, "passage-vs-phrase", hp, seed=4)
    second = train_baseline(corpus, "passage-vs-phrase", hp, seed=4)
    for record in corpus.records:
        assert first.score(record.title) == second.score(record.title)


def test_train_baseline_epoch_loss_non_increasing_on_separable_fixture():
    corpus = separable_corpus(90, seed=3)
    hp = HyperParams(batch_size=16, epochs=6, learning_rate=0.2, weight_decay=0.001)
    scorer = train_baseline(corpus, "multi-vs-rest", hp, seed=0)
    losses = scorer.epoch_losses
    assert len(losses) == 6
    assert all(later <= earlier for earlier, later in zip(losses, losses[1:]))


def test_train_baseline_null_distribution_on_random_labels():
    rng = np.random.default_rng(8)
    tags = [SpoilerTag.MULTI, SpoilerTag.PHRASE, SpoilerTag.PASSAGE]
    records = [
        Record(id=str(i), title=" ".join(
            "".join(rng.choice(list("abcdefghij"), size=5)) for _ in range(4)
        ), paragraphs=["p"], spoilers=["s", "s2"], tag=tags[int(rng.integers(3))])
        for i in range(150)
    ]
    corpus = Corpus("random-labels", records)
    train, held = split_by_id_hash(corpus)
    hp = HyperParams(batch_size=16, epochs=3, learning_rate=0.3, weight_decay=0.01)
    accuracies = []
    for seed in range(20):
        scorer = train_baseline(train, "multi-vs-rest", hp, seed=seed)
        pairs = [
            (r.tag is SpoilerTag.MULTI, scorer.score(r.title) >= 0.5)
            for r in held.records
        ]
        accuracies.append(balanced_accuracy(pairs))
    mean = sum(accuracies) / len(accuracies)
    assert 0.35 <= mean <= 0.65


def test_train_baseline_single_class_errors():
    corpus = make_corpus([SpoilerTag.PHRASE, SpoilerTag.PHRASE])
    hp = HyperParams(batch_size=4, epochs=1, learning_rate=0.1, weight_decay=0.1)
    with pytest.raises(ValueError, match="single class"):
        train_baseline(corpus, "multi-vs-rest", hp, seed=0)


def test_train_baseline_nonfinite_loss_signals_bad_learning_rate():
    corpus = separable_corpus(60, seed=5)
    hp = HyperParams(batch_size=4, epochs=40, learning_rate=1e12, weight_decay=0.9)
    with np.errstate(all="ignore"), pytest.raises(ValueError, match="non-finite"):
        train_baseline(corpus, "multi-vs-rest", hp, seed=0)


def test_hyperparams_validation():
    with pytest.raises(ValueError):
        HyperParams(batch_size=0, epochs=1, learning_rate=0.1, weight_decay=0.1)
    with pytest.raises(ValueError):
        HyperParams(batch_size=1, epochs=1, learning_rate=-0.1, weight_decay=0.1)
    with pytest.raises(ValueError):
        HyperParams(batch_size=1, epochs=1, learning_rate=0.1, weight_decay=1.0)


# --- config sampling and the sweep -------------------------------------------


def test_sample_configs_deterministic():
    space = default_search_space()
    first = sample_configs(space, 5, seed=9)
    second = sample_configs(space, 5, seed=9)
    assert first == second
    assert len(first) == 5


def test_sample_configs_respects_search_space():
    space = default_search_space()
    for hp in sample_configs(space, 200, seed=1):
        assert hp.batch_size in space.batch_sizes
        assert hp.epochs in space.epochs
        assert 1e-5 <= hp.learning_rate <= 1e-3
        assert hp.weight_decay in space.weight_decays


def test_sample_configs_degenerate_space():
    space = SearchSpace(batch_sizes=[8], epochs=[2], lr_range=(1e-4, 1e-4 + 1e-12),
                        weight_decays=[0.1])
    configs = sample_configs(space, 4, seed=0)
    assert all(c.batch_size == 8 and c.epochs == 2 and c.weight_decay == 0.1
               for c in configs)
    assert all(abs(c.learning_rate - 1e-4) < 1e-10 for c in configs)


def test_search_space_validation():
    with pytest.raises(ValueError):
        SearchSpace(batch_sizes=[], epochs=[2], lr_range=(1e-5, 1e-3), weight_decays=[0.1])
    with pytest.raises(ValueError):
        SearchSpace(batch_sizes=[8], epochs=[2], lr_range=(1e-3, 1e-5), weight_decays=[0.1])


def test_run_sweep_single_trial():
    corpus = separable_corpus(60, seed=0)
    result = run_sweep(corpus, "multi-vs-rest", default_search_space(), trials=1, seed=0)
    assert len(result.trials) == 1


def test_run_sweep_deterministic_ranked_list():
    corpus = separable_corpus(100, seed=0)
    space = default_search_space()
    first = run_sweep(corpus, "passage-vs-phrase", space, trials=10, seed=2)
    second = run_sweep(corpus, "passage-vs-phrase", space, trials=10, seed=2)
    assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(
        second.to_dict(), sort_keys=True
    )


def test_run_sweep_finds_perfect_trial_on_separable_corpus():
    corpus = separable_corpus(200, seed=0)
    result = run_sweep(corpus, "multi-vs-rest", default_search_space(), trials=10, seed=0)
    assert result.best().balanced_accuracy == 1.0
    assert [t.balanced_accuracy for t in result.trials] == sorted(
        (t.balanced_accuracy for t in result.trials), reverse=True
    )


def test_run_sweep_parallel_matches_serial():
    corpus = separable_corpus(80, seed=4)
    space = default_search_space()
    serial = run_sweep(corpus, "multi-vs-rest", space, trials=6, seed=1, workers=1)
    parallel = run_sweep(corpus, "multi-vs-rest", space, trials=6, seed=1, workers=4)
    assert json.dumps(serial.to_dict(), sort_keys=True) == json.dumps(
        parallel.to_dict(), sort_keys=True
    )


def test_run_sweep_records_failures_without_aborting():
    corpus = make_corpus([SpoilerTag.PHRASE] * 6 + [SpoilerTag.MULTI] * 2)
    # passage-vs-phrase sees only phrase records: every trial fails
    result = run_sweep(corpus, "passage-vs-phrase", default_search_space(),
                       trials=3, seed=0)
    assert result.trials == []
    assert len(result.failures) == 3
    assert all("single class" in f["error"] for f in result.failures)


def test_split_by_id_hash_partitions_and_is_deterministic():
    corpus = separable_corpus(100, seed=0)
    train1, held1 = split_by_id_hash(corpus)
    train2, held2 = split_by_id_hash(corpus)
    assert [r.id for r in train1.records] == [r.id for r in train2.records]
    assert len(train1) + len(held1) == len(corpus)
    assert {r.id for r in train1.records}.isdisjoint({r.id for r in held1.records})
    assert 0.10 <= len(held1) / len(corpus) <= 0.35


def test_tag_prediction_dataclass_shape():
    p = TagPrediction(SpoilerTag.MULTI, 0.9)
    assert p.passage_score is None
