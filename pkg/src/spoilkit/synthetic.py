"""Deterministic synthetic corpora for tests, demos, and experiments.

Three families:

* separable classification corpora, where each spoiler type carries its
  own marker vocabulary in the title, so a working classifier can reach
  balanced accuracy 1.0;
* planted-span corpora, where the article starts with a span that is the
  unique best rarity-weighted match for the title, so extraction has a
  known right answer;
* paraphrase corpora plus a mock completion backend that answers with a
  synonym-substituted copy of the gold spoiler, for studying how n-gram
  overlap metrics treat generated text.
"""

from __future__ import annotations

import re
import string
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Record, SpoilerTag

_TITLE_LINE_RE = re.compile(r"^Title: (.*)$", re.MULTILINE)

_CLASS_MARKERS = {
    SpoilerTag.MULTI: ["numbered", "listicle", "roundup", "ranked", "countdown"],
    SpoilerTag.PASSAGE: ["narrative", "longform", "chronicle", "detailed", "indepth"],
    SpoilerTag.PHRASE: ["quickfire", "snappy", "minimal", "oneword", "terse"],
}

_SPOILERS = {
    SpoilerTag.MULTI: ["first hidden reason", "second hidden reason"],
    SpoilerTag.PASSAGE: ["a single span of text that runs well past five words"],
    SpoilerTag.PHRASE: ["short answer"],
}


def _word(rng: np.random.Generator, taken: set[str], length_range=(5, 9)) -> str:
    """A fresh random lowercase word not seen before."""
    while True:
        length = int(rng.integers(*length_range))
        word = "".join(rng.choice(list(string.ascii_lowercase), size=length))
        if word not in taken:
            taken.add(word)
            return word


def separable_corpus(n: int = 200, seed: int = 0, split_name: str = "synthetic") -> Corpus:
    """A corpus whose titles are linearly separable for both binary
    classification tasks; tags cycle phrase, passage, multi."""
    rng = np.random.default_rng(seed)
    tags = [SpoilerTag.PHRASE, SpoilerTag.PASSAGE, SpoilerTag.MULTI]
    records = []
    for i in range(n):
        tag = tags[i % 3]
        markers = list(rng.choice(_CLASS_MARKERS[tag], size=3, replace=False))
        title = f"{markers[0]} {markers[1]} {markers[2]} story {i}"
        records.append(
            Record(
                id=str(i),
                title=title,
                paragraphs=[f"article body for item {i}", "and one more line"],
                spoilers=list(_SPOILERS[tag]),
                tag=tag,
            )
        )
    return Corpus(split_name=split_name, records=records)


@dataclass
class PlantedRecord:
    """A record together with the span extraction is expected to find."""

    record: Record
    planted: str
    start_token: int
    end_token: int


def _make_planted(
    rng: np.random.Generator,
    index: int,
    tag: SpoilerTag,
    taken: set[str],
    filler_vocab: list[str],
) -> PlantedRecord:
    if tag is SpoilerTag.PHRASE:
        span_len = int(rng.integers(1, 6))
    elif tag is SpoilerTag.PASSAGE:
        span_len = int(rng.integers(6, 13))
    else:
        raise ValueError("planted records are single-span (phrase or passage)")
    markers = [_word(rng, taken) for _ in range(span_len)]
    filler_len = int(rng.integers(40, 90))
    filler = list(rng.choice(filler_vocab, size=filler_len))
    # planted span sits at token 0: no same-score span can start earlier,
    # and any longer span containing it loses the shorter-tie rule
    tokens = markers + filler
    planted = " ".join(markers)
    record = Record(
        id=str(index),
        title=" ".join(markers),
        paragraphs=[" ".join(tokens)],
        spoilers=[planted],
        tag=tag,
    )
    return PlantedRecord(record, planted, 0, span_len)


def planted_corpus(
    n: int,
    seed: int = 0,
    tags: tuple[SpoilerTag, ...] = (SpoilerTag.PHRASE, SpoilerTag.PASSAGE),
    split_name: str = "planted",
) -> tuple[Corpus, list[PlantedRecord]]:
    """Records whose title is exactly the planted article-initial span."""
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    filler_vocab = [_word(rng, taken) for _ in range(60)]
    planted = [
        _make_planted(rng, i, tags[i % len(tags)], taken, filler_vocab) for i in range(n)
    ]
    corpus = Corpus(split_name=split_name, records=[p.record for p in planted])
    return corpus, planted


def multi_planted_corpus(
    n: int, seed: int = 0, split_name: str = "planted-multi"
) -> Corpus:
    """Multi-tag records with two marker groups separated by more than the
    maximum span length, so no single span covers both."""
    rng = np.random.default_rng(seed)
    taken: set[str] = set()
    filler_vocab = [_word(rng, taken) for _ in range(60)]
    records = []
    for i in range(n):
        group_a = [_word(rng, taken) for _ in range(int(rng.integers(2, 5)))]
        group_b = [_word(rng, taken) for _ in range(int(rng.integers(2, 5)))]
        gap = list(rng.choice(filler_vocab, size=int(rng.integers(45, 70))))
        tail = list(rng.choice(filler_vocab, size=int(rng.integers(5, 15))))
        tokens = group_a + gap + group_b + tail
        records.append(
            Record(
                id=str(i),
                title=" ".join(group_a + group_b),
                paragraphs=[" ".join(tokens)],
                spoilers=[" ".join(group_a), " ".join(group_b)],
                tag=SpoilerTag.MULTI,
            )
        )
    return Corpus(split_name=split_name, records=records)


def paraphrase_corpus(
    n: int = 100, seed: int = 0
) -> tuple[Corpus, dict[str, str]]:
    """Planted-span records plus a synonym map covering every gold token."""
    rng = np.random.default_rng(seed)
    corpus, planted = planted_corpus(n, seed=seed, split_name="paraphrase")
    taken = {t for p in planted for t in p.planted.split()}
    synonyms = {token: _word(rng, taken) for token in sorted(taken)}
    return corpus, synonyms


class ParaphrasingBackend:
    """Mock completion backend that answers with the synonym-substituted
    gold spoiler of the prompt's target record (located by title)."""

    def __init__(self, corpus: Corpus, synonyms: dict[str, str]):
        self._by_title = {r.title: r for r in corpus.records}
        self._synonyms = synonyms
        self.calls = 0

    def complete(self, prompt: str, max_tokens: int) -> str:
        self.calls += 1
        titles = _TITLE_LINE_RE.findall(prompt)
        if not titles:
            raise ValueError("prompt contains no Title line")
        record = self._by_title.get(titles[-1])
        if record is None:
            raise KeyError(f"prompt targets an unknown title: {titles[-1]!r}")
        paraphrased = [
            " ".join(self._synonyms.get(tok, tok) for tok in spoiler.split())
            for spoiler in record.spoilers
        ]
        return ", ".join(paraphrased)


def gold_scorer(corpus: Corpus, task: str):
    """A perfect BinaryScorer for ``task`` that looks gold labels up by
    exact title; unknown titles score 0.5."""
    positive = SpoilerTag.MULTI if task == "multi-vs-rest" else SpoilerTag.PASSAGE
    by_title = {r.title: r.tag for r in corpus.records}

    class _GoldScorer:
        def score(self, text: str) -> float:
            tag = by_title.get(text)
            if tag is None:
                return 0.5
            return 1.0 if tag is positive else 0.0

    return _GoldScorer()
