"""Evaluation metrics: BLEU-4 and balanced accuracy, plus their tokenizer.

BLEU-4 here is the geometric mean of clipped 1..4-gram precisions under
uniform weights, scaled by the brevity penalty e^{-(r/c - 1)^+}. No
smoothing is applied: a zero precision over a non-empty n-gram set zeroes
the score. Orders for which the hypothesis has no n-grams at all (fewer
than n tokens) carry no evidence and are excluded from the mean, so a
short hypothesis identical to its reference still scores 1.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Sequence

# Maximal alphanumeric runs, else one token per non-whitespace character.
_TOKEN_RE = re.compile(r"[^\W_]+|\S")

MAX_ORDER = 4

TokenSequence = list[str]
LabeledPairs = Sequence[tuple[Hashable, Hashable]]


def tokenize(text: str) -> TokenSequence:
    """Lowercase ``text`` and split into alphanumeric runs and single
    punctuation characters; whitespace is discarded."""
    return _TOKEN_RE.findall(text.lower())


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    """Multiset of the ``n``-grams of ``tokens`` (empty for short inputs)."""
    if n < 1:
        raise ValueError(f"n-gram order must be >= 1, got {n}")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def modified_precision(hyp: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int]:
    """Clipped and total ``n``-gram counts of ``hyp`` against ``ref``.

    Returns ``(clipped, total)`` so the caller controls division by
    zero: ``total`` is the number of n-grams in the hypothesis and
    ``clipped`` caps each hypothesis n-gram count at its reference count.
    """
    hyp_counts = ngram_counts(hyp, n)
    if not hyp_counts:
        return 0, 0
    ref_counts = ngram_counts(ref, n)
    clipped = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    return clipped, sum(hyp_counts.values())


def brevity_penalty(c: int, r: int) -> float:
    """e^{-(r/c - 1)^+} with the limits fixed as: 1 when r = 0, and 0
    when c = 0 with r > 0 (an empty hypothesis is maximally penalized)."""
    if r == 0:
        return 1.0
    if c == 0:
        return 0.0
    return math.exp(-max(r / c - 1.0, 0.0))


@dataclass
class BleuBreakdown:
    """Per-pair BLEU-4 result with the quantities behind the score.

    ``precisions`` holds p_1..p_4. An order the hypothesis is too short
    to populate contributes a neutral factor and is recorded as 1.0, so
    ``score == brevity_penalty * prod(p_n ** 0.25)`` always holds and a
    zero precision always means a zero score. An empty hypothesis scores
    0 with all precisions reported as 0.
    """

    precisions: tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    score: float

    def to_dict(self) -> dict:
        return {
            "precisions": list(self.precisions),
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "score": self.score,
        }


def _bleu_from_counts(
    order_counts: Sequence[tuple[int, int]], c: int, r: int
) -> BleuBreakdown:
    bp = brevity_penalty(c, r)
    if c == 0:
        return BleuBreakdown((0.0, 0.0, 0.0, 0.0), bp, c, r, 0.0)
    precisions: list[float] = []
    log_sum = 0.0
    zero = False
    for clipped, total in order_counts:
        if total == 0:
            precisions.append(1.0)  # no n-grams of this order: neutral
            continue
        p = clipped / total
        precisions.append(p)
        if p == 0.0:
            zero = True
        else:
            log_sum += math.log(p) / MAX_ORDER
    score = 0.0 if zero else bp * math.exp(log_sum)
    return BleuBreakdown(tuple(precisions), bp, c, r, score)


def bleu4(hypothesis: str, reference: str) -> BleuBreakdown:
    """Sentence-level BLEU-4 between two raw strings."""
    hyp = tokenize(hypothesis)
    ref = tokenize(reference)
    counts = [modified_precision(hyp, ref, n) for n in range(1, MAX_ORDER + 1)]
    return _bleu_from_counts(counts, len(hyp), len(ref))


def _join(text: str | Sequence[str]) -> str:
    """Multi-span spoilers are compared as one space-joined string."""
    if isinstance(text, str):
        return text
    return " ".join(text)


def corpus_bleu4(pairs: Sequence[tuple[str | Sequence[str], str | Sequence[str]]]) -> float:
    """Arithmetic mean of per-pair BLEU-4 scores.

    Each pair is ``(hypothesis, reference)``; either side may be a list
    of spans, joined with single spaces before comparison.
    """
    if not pairs:
        raise ValueError("corpus_bleu4 requires at least one pair")
    return math.fsum(bleu4(_join(h), _join(r)).score for h, r in pairs) / len(pairs)


def pooled_corpus_bleu4(
    pairs: Sequence[tuple[str | Sequence[str], str | Sequence[str]]]
) -> float:
    """Corpus-level BLEU-4 from pooled n-gram counts and pooled lengths."""
    if not pairs:
        raise ValueError("pooled_corpus_bleu4 requires at least one pair")
    totals = [[0, 0] for _ in range(MAX_ORDER)]
    c = r = 0
    for raw_hyp, raw_ref in pairs:
        hyp = tokenize(_join(raw_hyp))
        ref = tokenize(_join(raw_ref))
        c += len(hyp)
        r += len(ref)
        for n in range(1, MAX_ORDER + 1):
            clipped, total = modified_precision(hyp, ref, n)
            totals[n - 1][0] += clipped
            totals[n - 1][1] += total
    return _bleu_from_counts([tuple(t) for t in totals], c, r).score


def balanced_accuracy(pairs: LabeledPairs) -> float:
    """Mean per-class recall over the gold classes in ``pairs``.

    ``pairs`` holds ``(gold, predicted)`` labels. Equivalent to weighting
    every sample by the inverse size of its gold class; predictions
    outside the gold label domain simply count as incorrect. The
    computation groups by class first, so the result is exactly
    invariant under permutation of the pair list.
    """
    if not pairs:
        raise ValueError("balanced_accuracy requires at least one labeled pair")
    totals: Counter = Counter()
    correct: Counter = Counter()
    for gold, predicted in pairs:
        totals[gold] += 1
        if predicted == gold:
            correct[gold] += 1
    classes = sorted(totals, key=repr)
    recalls = [correct[label] / totals[label] for label in classes]
    return math.fsum(recalls) / len(classes)
