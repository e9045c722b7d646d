"""Spoiler production: one-shot prompt building plus extractive selection.

Two routes produce a spoiler for a (title, article) pair. The generative
route renders a one-shot prompt (a worked example of the same spoiler
type, then the target) and asks a completion backend. The extractive
route selects article spans directly, scoring each candidate by
rarity-weighted overlap with the title, under the per-type span-length
rules: a phrase is at most 5 tokens, a passage more than 5, a multi
spoiler at least two non-overlapping spans.
"""

from __future__ import annotations

import logging
import re
from collections import Counter
from dataclasses import dataclass
from typing import Literal

from .backend import BackendError, CompletionBackend
from .cascade import TagPrediction
from .corpus import Corpus, Record, SpoilerTag, full_text
from .metrics import _TOKEN_RE, tokenize

logger = logging.getLogger(__name__)

INSTRUCTION = "Predict the spoiler to the clickbait title similar to the example below:"
TRUNCATION_MARKER = "[...]"

PHRASE_MAX_TOKENS = 5
PASSAGE_MAX_TOKENS = 40
MULTI_MAX_SPANS = 5
# a further span is kept only while it scores at least this fraction of
# the first span's score
MULTI_MIN_GAIN = 0.25

_WORD_RE = re.compile(r"\S+")

SpoilMode = Literal["generative", "extractive", "fallback"]


class PromptError(ValueError):
    """The prompt could not be built as requested."""


class GenerationError(RuntimeError):
    """The completion backend produced an unusable completion."""


class ExtractionError(ValueError):
    """No article span can satisfy the requested spoiler type."""


@dataclass
class PromptTemplate:
    """The one-shot structure for a spoiler type: a fixed instruction and
    one completed exemplar."""

    tag: SpoilerTag
    instruction: str
    exemplar_title: str
    exemplar_article: str
    exemplar_spoiler: str


@dataclass
class Prompt:
    rendered: str
    tag: SpoilerTag
    source_record_id: str


@dataclass
class SpanCandidate:
    start_token: int
    end_token: int  # exclusive
    text: str
    score: float


@dataclass
class SpoilerPrediction:
    texts: list[str]
    method: Literal["generative", "extractive"]
    tag: SpoilerTag

    def joined(self) -> str:
        return " ".join(self.texts)


# --- prompt construction ---------------------------------------------------


def _truncate_words(text: str, budget: int) -> str:
    """Keep at most ``budget`` whitespace-delimited words of ``text``,
    appending the truncation marker when anything was cut."""
    matches = list(_WORD_RE.finditer(text))
    if len(matches) <= budget:
        return text
    if budget == 0:
        return TRUNCATION_MARKER
    return text[: matches[budget - 1].end()] + TRUNCATION_MARKER


def _render(template: PromptTemplate, exemplar_article: str,
            target_title: str, target_article: str) -> str:
    return (
        f"{template.instruction}\n"
        f"\n"
        f"Title: {template.exemplar_title}\n"
        f"\n"
        f"Article: {exemplar_article}\n"
        f"\n"
        f"Spoiler: {template.exemplar_spoiler}\n"
        f"\n"
        f"Title: {target_title}\n"
        f"\n"
        f"Article: {target_article}\n"
        f"\n"
        f"Spoiler:"
    )


def template_for(tag: SpoilerTag, exemplar: Record) -> PromptTemplate:
    if exemplar.tag is not tag:
        raise PromptError(
            f"exemplar record {exemplar.id} is tagged {exemplar.tag and exemplar.tag.value}, "
            f"but a {tag.value} exemplar was requested"
        )
    return PromptTemplate(
        tag=tag,
        instruction=INSTRUCTION,
        exemplar_title=exemplar.title,
        exemplar_article=full_text(exemplar),
        exemplar_spoiler=", ".join(exemplar.spoilers),
    )


def build_prompt(tag: SpoilerTag, target: Record, exemplar: Record,
                 truncation_budget: int = 1000) -> Prompt:
    """Render the one-shot prompt for ``target`` using ``exemplar``.

    ``truncation_budget`` counts whitespace-delimited words over the whole
    prompt. The instruction, both titles, and the exemplar spoiler are
    always included in full; whatever budget remains is split evenly
    between the two articles, each cut at a word boundary with the
    truncation marker appended when shortened.
    """
    if exemplar.id == target.id:
        raise PromptError("exemplar and target must be different records")
    template = template_for(tag, exemplar)
    target_article = full_text(target)

    skeleton = _render(template, "", target.title, "")
    fixed_words = len(skeleton.split())
    remaining = truncation_budget - fixed_words
    if remaining < 0:
        raise PromptError(
            f"truncation budget {truncation_budget} cannot fit the instruction, "
            f"titles, and exemplar spoiler ({fixed_words} words)"
        )
    per_article = remaining // 2
    rendered = _render(
        template,
        _truncate_words(template.exemplar_article, per_article),
        target.title,
        _truncate_words(target_article, per_article),
    )
    return Prompt(rendered=rendered, tag=tag, source_record_id=target.id)


def select_exemplars(
    corpus: Corpus, overrides: dict[SpoilerTag, str] | None = None
) -> dict[SpoilerTag, Record]:
    """One exemplar per tag: the first record of that tag in corpus order,
    unless ``overrides`` maps the tag to a specific record id."""
    overrides = overrides or {}
    exemplars: dict[SpoilerTag, Record] = {}
    by_id = corpus.by_id()
    for tag, record_id in overrides.items():
        if record_id not in by_id:
            raise PromptError(f"exemplar override id {record_id!r} not found in corpus")
        exemplars[tag] = by_id[record_id]
    for record in corpus.records:
        if record.tag is not None and record.tag not in exemplars:
            exemplars[record.tag] = record
    return exemplars


# --- generative route ------------------------------------------------------


def generate_spoiler(backend: CompletionBackend, prompt: Prompt,
                     max_output_tokens: int = 100) -> SpoilerPrediction:
    """Ask the completion backend to finish the prompt.

    The completion is whitespace-trimmed and a leading "Spoiler:" echo is
    stripped; multi completions are split on ", ". Span-length rules are
    not enforced on generated text — deviations are logged as warnings.
    """
    completion = backend.complete(prompt.rendered, max_output_tokens).strip()
    if completion.startswith("Spoiler:"):
        completion = completion[len("Spoiler:"):].strip()
    if not completion:
        raise GenerationError(
            f"backend returned an empty completion for record {prompt.source_record_id}"
        )
    texts = completion.split(", ") if prompt.tag is SpoilerTag.MULTI else [completion]
    _warn_on_length_violations(texts, prompt.tag, prompt.source_record_id)
    return SpoilerPrediction(texts=texts, method="generative", tag=prompt.tag)


def _warn_on_length_violations(texts: list[str], tag: SpoilerTag, record_id: str):
    if tag is SpoilerTag.MULTI:
        if len(texts) < 2:
            logger.warning("record %s: multi completion yielded %d span(s)",
                           record_id, len(texts))
        return
    n_tokens = len(tokenize(texts[0]))
    if tag is SpoilerTag.PHRASE and n_tokens > PHRASE_MAX_TOKENS:
        logger.warning("record %s: phrase completion has %d tokens", record_id, n_tokens)
    elif tag is SpoilerTag.PASSAGE and n_tokens <= PHRASE_MAX_TOKENS:
        logger.warning("record %s: passage completion has only %d tokens",
                       record_id, n_tokens)


# --- extractive route ------------------------------------------------------


def tokenize_with_offsets(text: str) -> list[tuple[str, int, int]]:
    """Lowercased tokens with their character spans in the original text."""
    return [(m.group(0).lower(), m.start(), m.end()) for m in _TOKEN_RE.finditer(text)]


def score_span(candidate_tokens: list[str], title_tokens: list[str],
               article_token_frequencies: dict[str, int]) -> float:
    """Rarity-weighted title overlap of a candidate span.

    Sums 1/article_frequency over the distinct tokens the candidate
    shares with the title; tokens of length <= 2 are ignored.
    """
    title = {t for t in title_tokens if len(t) > 2}
    score = 0.0
    for token in set(candidate_tokens):
        if token in title and article_token_frequencies.get(token, 0) > 0:
            score += 1.0 / article_token_frequencies[token]
    return score


def _scored_spans(values: list[float], min_len: int, max_len: int,
                  tokens: list[str]) -> list[tuple[float, int, int]]:
    """Scores for every span of length min_len..max_len, computed by an
    incremental sweep so repeated tokens inside a window count once."""
    n = len(tokens)
    spans: list[tuple[float, int, int]] = []
    for start in range(n):
        seen: Counter = Counter()
        score = 0.0
        for end in range(start + 1, min(start + max_len, n) + 1):
            token = tokens[end - 1]
            if values[end - 1] > 0.0 and seen[token] == 0:
                score += values[end - 1]
            seen[token] += 1
            if end - start >= min_len:
                spans.append((score, start, end))
    return spans


def _rank_key(span: tuple[float, int, int]) -> tuple[float, int, int]:
    score, start, end = span
    return (-score, start, end - start)


def extract_spoiler(record: Record, tag: SpoilerTag) -> SpoilerPrediction:
    """Select the best article span(s) for the requested spoiler type.

    Phrase: best span of 1-5 tokens. Passage: best span of 6-40 tokens.
    Multi: greedy non-overlapping spans of 1-40 tokens, at least two, at
    most five, stopping once a further span would score under 25% of the
    first. Ties prefer the earlier, then shorter span. Raises when the
    article is too short to satisfy the type's constraints.
    """
    article = full_text(record)
    offset_tokens = tokenize_with_offsets(article)
    if not offset_tokens:
        raise ExtractionError(f"record {record.id}: article has no tokens")
    tokens = [t for t, _, _ in offset_tokens]
    title_tokens = {t for t in tokenize(record.title) if len(t) > 2}
    freqs = Counter(tokens)
    values = [
        1.0 / freqs[t] if t in title_tokens and len(t) > 2 else 0.0 for t in tokens
    ]

    def span_text(start: int, end: int) -> str:
        return article[offset_tokens[start][1] : offset_tokens[end - 1][2]]

    if tag is SpoilerTag.PHRASE:
        spans = _scored_spans(values, 1, PHRASE_MAX_TOKENS, tokens)
        best = min(spans, key=_rank_key)
        texts = [span_text(best[1], best[2])]
    elif tag is SpoilerTag.PASSAGE:
        if len(tokens) <= PHRASE_MAX_TOKENS:
            raise ExtractionError(
                f"record {record.id}: article has {len(tokens)} tokens; a passage "
                f"span needs more than {PHRASE_MAX_TOKENS}"
            )
        spans = _scored_spans(values, PHRASE_MAX_TOKENS + 1, PASSAGE_MAX_TOKENS, tokens)
        best = min(spans, key=_rank_key)
        texts = [span_text(best[1], best[2])]
    elif tag is SpoilerTag.MULTI:
        if len(tokens) < 2:
            raise ExtractionError(
                f"record {record.id}: article has {len(tokens)} token(s); multi "
                f"needs at least 2 non-overlapping spans"
            )
        spans = sorted(_scored_spans(values, 1, PASSAGE_MAX_TOKENS, tokens), key=_rank_key)
        selected: list[tuple[float, int, int]] = []
        first_score = spans[0][0]
        for span in spans:
            score, start, end = span
            if any(start < e and s < end for _, s, e in selected):
                continue
            if len(selected) >= 2 and score < MULTI_MIN_GAIN * first_score:
                break
            selected.append(span)
            if len(selected) == MULTI_MAX_SPANS:
                break
        if len(selected) < 2:
            raise ExtractionError(
                f"record {record.id}: could not place 2 non-overlapping spans"
            )
        selected.sort(key=lambda s: s[1])  # report in article order
        texts = [span_text(s, e) for _, s, e in selected]
    else:
        raise ValueError(f"unknown tag: {tag!r}")

    return SpoilerPrediction(texts=texts, method="extractive", tag=tag)


# --- routing ---------------------------------------------------------------


def spoil(
    record: Record,
    tag_prediction: TagPrediction,
    mode: SpoilMode,
    backend: CompletionBackend | None = None,
    exemplars: dict[SpoilerTag, Record] | None = None,
    truncation_budget: int = 1000,
    max_output_tokens: int = 100,
) -> SpoilerPrediction:
    """Produce a spoiler for ``record`` using its predicted tag.

    ``fallback`` behaves like ``generative`` but silently degrades to
    extraction when the backend fails.
    """
    tag = tag_prediction.tag
    if mode == "extractive":
        return extract_spoiler(record, tag)
    if backend is None:
        raise ValueError(f"mode {mode!r} requires a completion backend")
    if exemplars is None or tag not in exemplars:
        raise PromptError(f"no exemplar available for tag {tag.value}")
    prompt = build_prompt(tag, record, exemplars[tag], truncation_budget)
    if mode == "generative":
        return generate_spoiler(backend, prompt, max_output_tokens)
    if mode == "fallback":
        try:
            return generate_spoiler(backend, prompt, max_output_tokens)
        except (BackendError, GenerationError) as exc:
            logger.warning("record %s: generative route failed (%s); extracting",
                           record.id, exc)
            return extract_spoiler(record, tag)
    raise ValueError(f"unknown spoiling mode: {mode!r}")
