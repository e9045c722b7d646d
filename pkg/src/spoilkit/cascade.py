"""Spoiler-type prediction as a cascade of two binary classifiers.

Model 1 separates multi spoilers from the rest; Model 2, consulted only
when multi is rejected, separates passage from phrase. Classifiers see
the title only. A native baseline (logistic regression over hashed
character 3-5-grams, trained by mini-batch gradient descent) stands in
for heavyweight backends so the sweep machinery runs offline.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Protocol

import numpy as np

from .corpus import Corpus, Record, SpoilerTag
from .metrics import balanced_accuracy

Task = Literal["multi-vs-rest", "passage-vs-phrase"]

TASKS: tuple[Task, ...] = ("multi-vs-rest", "passage-vs-phrase")


class ScorerError(RuntimeError):
    """A binary scorer failed; carries which cascade model it backed."""

    def __init__(self, model_id: str, cause: Exception):
        super().__init__(f"scorer for {model_id} failed: {cause}")
        self.model_id = model_id


class BinaryScorer(Protocol):
    def score(self, text: str) -> float:
        """Probability of the positive class for ``text``."""
        ...


@dataclass
class CascadeConfig:
    multi_threshold: float = 0.5
    passage_threshold: float = 0.5

    def __post_init__(self):
        for name, value in (
            ("multi_threshold", self.multi_threshold),
            ("passage_threshold", self.passage_threshold),
        ):
            if not 0.0 < value < 1.0:
                raise ValueError(f"{name} must lie strictly inside (0, 1), got {value}")


@dataclass
class TagPrediction:
    """Cascade output. ``passage_score`` is None when Model 1 already
    accepted multi (Model 2 was never consulted)."""

    tag: SpoilerTag
    multi_score: float
    passage_score: float | None = None


def _run_scorer(scorer: BinaryScorer, model_id: str, text: str) -> float:
    try:
        return scorer.score(text)
    except Exception as exc:
        raise ScorerError(model_id, exc) from exc


def predict_tag(
    title: str,
    model1: BinaryScorer,
    model2: BinaryScorer,
    config: CascadeConfig | None = None,
) -> TagPrediction:
    """Classify a title: Model 1 first, Model 2 only if multi is rejected."""
    if not title.strip():
        raise ValueError("title must be non-empty")
    config = config or CascadeConfig()
    multi_score = _run_scorer(model1, "model1 (multi-vs-rest)", title)
    if multi_score >= config.multi_threshold:
        return TagPrediction(SpoilerTag.MULTI, multi_score)
    passage_score = _run_scorer(model2, "model2 (passage-vs-phrase)", title)
    tag = SpoilerTag.PASSAGE if passage_score >= config.passage_threshold else SpoilerTag.PHRASE
    return TagPrediction(tag, multi_score, passage_score)


@dataclass
class CascadeReport:
    """Balanced accuracies for both binary tasks and the full cascade."""

    model1_balanced_accuracy: float
    model2_balanced_accuracy: float
    cascade_balanced_accuracy: float
    confusion: dict[SpoilerTag, dict[SpoilerTag, int]]
    predictions: list[TagPrediction]

    def confusion_as_dict(self) -> dict:
        return {
            gold.value: {pred.value: n for pred, n in row.items()}
            for gold, row in self.confusion.items()
        }


def evaluate_cascade(
    corpus: Corpus,
    model1: BinaryScorer,
    model2: BinaryScorer,
    config: CascadeConfig | None = None,
) -> CascadeReport:
    """Score a labeled corpus three ways.

    Model 1 is judged on multi-vs-rest over every record; Model 2 on
    passage-vs-phrase over gold non-multi records only (queried directly,
    regardless of what the cascade would do); the cascade on the full
    3-class decision, with a 3x3 confusion table.
    """
    config = config or CascadeConfig()
    records = [r for r in corpus.records if r.tag is not None]
    if not records:
        raise ValueError("evaluate_cascade requires a labeled corpus")

    gold_tags = {r.tag for r in records}
    if gold_tags != set(SpoilerTag):
        missing = sorted(t.value for t in set(SpoilerTag) - gold_tags)
        raise ValueError(f"corpus is missing gold classes: {', '.join(missing)}")

    predictions = [predict_tag(r.title, model1, model2, config) for r in records]

    model1_pairs = [
        (r.tag is SpoilerTag.MULTI, p.multi_score >= config.multi_threshold)
        for r, p in zip(records, predictions)
    ]
    model2_pairs = [
        (
            r.tag is SpoilerTag.PASSAGE,
            _run_scorer(model2, "model2 (passage-vs-phrase)", r.title)
            >= config.passage_threshold,
        )
        for r in records
        if r.tag is not SpoilerTag.MULTI
    ]
    cascade_pairs = [(r.tag, p.tag) for r, p in zip(records, predictions)]

    confusion = {gold: {pred: 0 for pred in SpoilerTag} for gold in SpoilerTag}
    for gold, pred in cascade_pairs:
        confusion[gold][pred] += 1

    return CascadeReport(
        model1_balanced_accuracy=balanced_accuracy(model1_pairs),
        model2_balanced_accuracy=balanced_accuracy(model2_pairs),
        cascade_balanced_accuracy=balanced_accuracy(cascade_pairs),
        confusion=confusion,
        predictions=predictions,
    )


# --- native baseline -------------------------------------------------------

N_FEATURES = 4096
_CHAR_NGRAM_ORDERS = (3, 4, 5)


def _hash_features(title: str, n_features: int) -> np.ndarray:
    """Counts of hashed character 3-5-grams of the lowercased title."""
    x = np.zeros(n_features, dtype=np.float64)
    text = title.lower()
    for n in _CHAR_NGRAM_ORDERS:
        for i in range(len(text) - n + 1):
            bucket = zlib.crc32(text[i : i + n].encode("utf-8")) % n_features
            x[bucket] += 1.0
    return x


@dataclass
class HyperParams:
    batch_size: int
    epochs: int
    learning_rate: float
    weight_decay: float

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive integers")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= self.weight_decay < 1.0:
            raise ValueError("weight_decay must lie in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "weight_decay": self.weight_decay,
        }


@dataclass
class SearchSpace:
    batch_sizes: list[int]
    epochs: list[int]
    lr_range: tuple[float, float]
    weight_decays: list[float]

    def __post_init__(self):
        if not (self.batch_sizes and self.epochs and self.weight_decays):
            raise ValueError("all candidate lists must be non-empty")
        low, high = self.lr_range
        if not 0 < low < high:
            raise ValueError(f"lr_range must satisfy 0 < low < high, got {self.lr_range}")


def default_search_space() -> SearchSpace:
    """The standard title-classifier search space: batch sizes 8/12/16,
    2-5 epochs, learning rate log-uniform over (1e-5, 1e-3), weight
    decay 0.1-0.5."""
    return SearchSpace(
        batch_sizes=[8, 12, 16],
        epochs=[2, 3, 4, 5],
        lr_range=(1e-5, 1e-3),
        weight_decays=[0.1, 0.2, 0.3, 0.4, 0.5],
    )


class NgramLogisticScorer:
    """Logistic regression over hashed character n-gram counts.

    Deterministic for a fixed training seed; ``epoch_losses`` records the
    mean training loss after each epoch.
    """

    def __init__(self, weights: np.ndarray, bias: float, n_features: int,
                 epoch_losses: list[float]):
        self._weights = weights
        self._bias = bias
        self._n_features = n_features
        self.epoch_losses = epoch_losses

    def score(self, text: str) -> float:
        logit = float(self._weights @ _hash_features(text, self._n_features) + self._bias)
        return 1.0 / (1.0 + math.exp(-logit))


def _task_examples(corpus: Corpus, task: Task) -> tuple[list[Record], np.ndarray]:
    records = [r for r in corpus.records if r.tag is not None]
    if task == "multi-vs-rest":
        labels = np.array([r.tag is SpoilerTag.MULTI for r in records], dtype=np.float64)
    elif task == "passage-vs-phrase":
        records = [r for r in records if r.tag is not SpoilerTag.MULTI]
        labels = np.array([r.tag is SpoilerTag.PASSAGE for r in records], dtype=np.float64)
    else:
        raise ValueError(f"unknown task: {task!r}")
    return records, labels


def train_baseline(
    corpus: Corpus,
    task: Task,
    hp: HyperParams,
    seed: int,
    n_features: int = N_FEATURES,
) -> NgramLogisticScorer:
    """Train the native binary baseline for ``task`` on titles.

    Mini-batch gradient descent on the logistic loss with L2 strength
    ``hp.weight_decay`` (bias unregularized). Raises on a single-class
    corpus or when the loss goes non-finite (bad learning rate).
    """
    records, y = _task_examples(corpus, task)
    if len(set(y.tolist())) < 2:
        raise ValueError(f"corpus has a single class for task {task!r}")

    X = np.stack([_hash_features(r.title, n_features) for r in records])
    n = len(records)
    rng = np.random.default_rng(seed)
    w = np.zeros(n_features)
    b = 0.0
    epoch_losses: list[float] = []

    for _ in range(hp.epochs):
        order = rng.permutation(n)
        for start in range(0, n, hp.batch_size):
            batch = order[start : start + hp.batch_size]
            Xb, yb = X[batch], y[batch]
            p = 1.0 / (1.0 + np.exp(-(Xb @ w + b)))
            error = p - yb
            w -= hp.learning_rate * (Xb.T @ error / len(batch) + hp.weight_decay * w)
            b -= hp.learning_rate * float(error.mean())
        logits = X @ w + b
        # log(1 + e^z) evaluated stably for large |z|
        loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
        if not math.isfinite(loss):
            raise ValueError(
                f"training loss became non-finite (learning_rate={hp.learning_rate})"
            )
        epoch_losses.append(loss)

    return NgramLogisticScorer(w, b, n_features, epoch_losses)


# --- hyperparameter sweep --------------------------------------------------


@dataclass
class TrialResult:
    params: HyperParams
    balanced_accuracy: float
    model_id: str
    seed: int

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "balanced_accuracy": self.balanced_accuracy,
            "model_id": self.model_id,
            "seed": self.seed,
        }


@dataclass
class SweepResult:
    task: str
    seed: int
    trials: list[TrialResult]  # ranked, best first
    failures: list[dict] = field(default_factory=list)
    correlations: dict[str, float | None] = field(default_factory=dict)

    def best(self) -> TrialResult:
        if not self.trials:
            raise ValueError("sweep produced no successful trials")
        return self.trials[0]

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "trials": [t.to_dict() for t in self.trials],
            "failures": self.failures,
            "correlations": self.correlations,
        }


def sample_configs(space: SearchSpace, count: int, seed: int) -> list[HyperParams]:
    """Random search: discrete fields uniform over their candidates,
    learning rate log-uniform over ``space.lr_range``."""
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    low, high = space.lr_range
    configs = []
    for _ in range(count):
        configs.append(
            HyperParams(
                batch_size=int(rng.choice(space.batch_sizes)),
                epochs=int(rng.choice(space.epochs)),
                learning_rate=float(np.exp(rng.uniform(np.log(low), np.log(high)))),
                weight_decay=float(rng.choice(space.weight_decays)),
            )
        )
    return configs


def split_by_id_hash(corpus: Corpus, modulus: int = 5) -> tuple[Corpus, Corpus]:
    """Deterministic ~80/20 split: a record is held out when the CRC32 of
    its id is 0 mod ``modulus``."""
    train, held = [], []
    for record in corpus.records:
        (held if zlib.crc32(record.id.encode("utf-8")) % modulus == 0 else train).append(record)
    return (
        Corpus(split_name=f"{corpus.split_name}-train", records=train),
        Corpus(split_name=f"{corpus.split_name}-heldout", records=held),
    )


def _binary_balanced_accuracy(
    scorer: BinaryScorer, corpus: Corpus, task: Task, threshold: float = 0.5
) -> float:
    records, y = _task_examples(corpus, task)
    pairs = [
        (bool(label), scorer.score(r.title) >= threshold) for r, label in zip(records, y)
    ]
    return balanced_accuracy(pairs)


def _pearson(xs: list[float], ys: list[float]) -> float | None:
    if len(xs) < 2:
        return None
    x = np.asarray(xs)
    y = np.asarray(ys)
    if x.std() == 0.0 or y.std() == 0.0:
        return None
    return float(np.corrcoef(x, y)[0, 1])


def run_sweep(
    corpus: Corpus,
    task: Task,
    space: SearchSpace,
    trials: int,
    seed: int,
    eval_corpus: Corpus | None = None,
    workers: int = 1,
) -> SweepResult:
    """Random-search the baseline's hyperparameters.

    Each trial trains on the train portion of ``corpus`` (a deterministic
    80/20 id-hash split, unless ``eval_corpus`` supplies the held-out
    side) and is scored by held-out balanced accuracy. Trials are ranked
    best-first; training failures are recorded per-trial rather than
    aborting the sweep. ``correlations`` reports the Pearson correlation
    of each hyperparameter with accuracy (log10 for the learning rate).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if eval_corpus is None:
        train_corpus, held_corpus = split_by_id_hash(corpus)
    else:
        train_corpus, held_corpus = corpus, eval_corpus

    configs = sample_configs(space, trials, seed)

    def run_trial(index: int) -> TrialResult | dict:
        hp = configs[index]
        trial_seed = seed + index
        try:
            scorer = train_baseline(train_corpus, task, hp, trial_seed)
            accuracy = _binary_balanced_accuracy(scorer, held_corpus, task)
        except ValueError as exc:
            return {"params": hp.to_dict(), "seed": trial_seed, "error": str(exc)}
        return TrialResult(hp, accuracy, task, trial_seed)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run_trial, range(trials)))
    else:
        outcomes = [run_trial(i) for i in range(trials)]

    results = [o for o in outcomes if isinstance(o, TrialResult)]
    failures = [o for o in outcomes if isinstance(o, dict)]
    ranked = sorted(
        range(len(results)), key=lambda i: (-results[i].balanced_accuracy, i)
    )
    results = [results[i] for i in ranked]

    accuracies = [t.balanced_accuracy for t in results]
    correlations = {
        "batch_size": _pearson([float(t.params.batch_size) for t in results], accuracies),
        "epochs": _pearson([float(t.params.epochs) for t in results], accuracies),
        "log10_learning_rate": _pearson(
            [math.log10(t.params.learning_rate) for t in results], accuracies
        ),
        "weight_decay": _pearson([t.params.weight_decay for t in results], accuracies),
    }
    return SweepResult(task=task, seed=seed, trials=results, failures=failures,
                       correlations=correlations)
