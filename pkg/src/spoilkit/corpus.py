"""Loading, validating, and summarizing JSONL clickbait corpora.

Each corpus line is one JSON object with the fields ``targetTitle``
(string), ``targetParagraphs`` (list of article lines), ``spoiler``
(list of gold answer spans), ``tags`` (the spoiler type, possibly
wrapped in a one-element list), and an optional ``uuid``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path


class SpoilerTag(str, Enum):
    """The three spoiler types a title can be labeled with."""

    PHRASE = "phrase"
    PASSAGE = "passage"
    MULTI = "multi"

    @classmethod
    def parse(cls, value: str) -> "SpoilerTag":
        try:
            return cls(value)
        except ValueError:
            raise RecordParseError(f"unknown tag string: {value!r}") from None


class RecordParseError(ValueError):
    """A corpus line could not be turned into a Record."""


class CorpusValidationError(ValueError):
    """A validation violation escalated under strict loading."""


@dataclass
class Violation:
    """A non-fatal data problem found while loading a corpus."""

    line_number: int  # 1-based line in the source file
    record_id: str
    message: str

    def __str__(self) -> str:
        return f"line {self.line_number} (id={self.record_id}): {self.message}"


@dataclass
class Record:
    """One corpus entry: a clickbait title, its article, and gold spoilers.

    ``tag`` and ``spoilers`` may be absent/empty for unlabeled
    (inference-only) records.
    """

    id: str
    title: str
    paragraphs: list[str]
    spoilers: list[str] = field(default_factory=list)
    tag: SpoilerTag | None = None

    @property
    def labeled(self) -> bool:
        return self.tag is not None

    def validate(self) -> list[str]:
        """Return human-readable invariant violations (empty when clean)."""
        problems: list[str] = []
        if not self.title.strip():
            problems.append("title is empty after trimming")
        if not self.paragraphs:
            problems.append("paragraphs list is empty")
        if self.tag is not None:
            if not self.spoilers:
                problems.append(f"labeled record ({self.tag.value}) has no spoilers")
            elif self.tag is SpoilerTag.MULTI and len(self.spoilers) < 2:
                problems.append("multi requires >=2 spoilers")
            elif self.tag is not SpoilerTag.MULTI and len(self.spoilers) != 1:
                problems.append(
                    f"{self.tag.value} requires exactly 1 spoiler, got {len(self.spoilers)}"
                )
        return problems

    def to_dict(self) -> dict:
        """Serialize back to the raw corpus object shape."""
        obj: dict = {
            "uuid": self.id,
            "targetTitle": self.title,
            "targetParagraphs": list(self.paragraphs),
            "spoiler": list(self.spoilers),
        }
        if self.tag is not None:
            obj["tags"] = [self.tag.value]
        return obj

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, sort_keys=True)


@dataclass
class SplitStats:
    """Per-tag counts and fractions for one corpus split."""

    record_count: int
    tag_counts: dict[SpoilerTag, int]
    tag_fractions: dict[SpoilerTag, float]

    def to_dict(self) -> dict:
        return {
            "record_count": self.record_count,
            "tag_counts": {t.value: n for t, n in self.tag_counts.items()},
            "tag_fractions": {t.value: f for t, f in self.tag_fractions.items()},
        }


@dataclass
class Corpus:
    """An ordered, immutable-after-load list of records plus a split name."""

    split_name: str
    records: list[Record]
    violations: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict[str, Record]:
        return {r.id: r for r in self.records}


def _unwrap_tag(raw, index: int) -> SpoilerTag | None:
    if raw is None:
        return None
    if isinstance(raw, list):
        if len(raw) != 1:
            raise RecordParseError(
                f"record {index}: tags must hold exactly one value, got {len(raw)}"
            )
        raw = raw[0]
    if not isinstance(raw, str):
        raise RecordParseError(f"record {index}: tag is not a string: {raw!r}")
    return SpoilerTag.parse(raw)


def parse_record(line: str, index: int) -> Record:
    """Parse one JSONL corpus line into a Record.

    ``index`` is the zero-based line index, used as the record id when
    no ``uuid``/``id`` field is present. Invariant violations (e.g. a
    multi record with one spoiler) are NOT raised here; call
    ``Record.validate`` for those.
    """
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordParseError(f"record {index}: malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise RecordParseError(f"record {index}: line is not a JSON object")

    for required in ("targetTitle", "targetParagraphs"):
        if required not in obj:
            raise RecordParseError(f"record {index}: missing required field {required!r}")

    title = obj["targetTitle"]
    paragraphs = obj["targetParagraphs"]
    if not isinstance(title, str):
        raise RecordParseError(f"record {index}: targetTitle is not a string")
    if not isinstance(paragraphs, list) or not all(isinstance(p, str) for p in paragraphs):
        raise RecordParseError(f"record {index}: targetParagraphs is not a list of strings")

    spoilers = obj.get("spoiler", [])
    if isinstance(spoilers, str):
        spoilers = [spoilers]
    if not isinstance(spoilers, list) or not all(isinstance(s, str) for s in spoilers):
        raise RecordParseError(f"record {index}: spoiler is not a list of strings")

    record_id = obj.get("uuid") or obj.get("id")
    if record_id is None:
        record_id = str(index)

    return Record(
        id=str(record_id),
        title=title,
        paragraphs=list(paragraphs),
        spoilers=list(spoilers),
        tag=_unwrap_tag(obj.get("tags"), index),
    )


def load_corpus(path: str | Path, split_name: str = "", strict: bool = False) -> Corpus:
    """Load a newline-delimited JSON corpus file.

    Blank lines are skipped but still consume a line index. Validation
    violations are collected on the returned Corpus; under ``strict``
    the first violation aborts with its line number.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    split = split_name or path.stem

    records: list[Record] = []
    violations: list[Violation] = []
    with path.open(encoding="utf-8") as handle:
        for index, line in enumerate(handle):
            if not line.strip():
                continue
            record = parse_record(line, index)
            records.append(record)
            for message in record.validate():
                violation = Violation(index + 1, record.id, message)
                if strict:
                    raise CorpusValidationError(str(violation))
                violations.append(violation)
    return Corpus(split_name=split, records=records, violations=violations)


def corpus_stats(corpus: Corpus) -> SplitStats:
    """Count records per tag; fractions are counts over total records.

    All three tags always appear as keys. An empty corpus yields zero
    counts and zero fractions.
    """
    counts = {tag: 0 for tag in SpoilerTag}
    for record in corpus.records:
        if record.tag is not None:
            counts[record.tag] += 1
    total = len(corpus.records)
    fractions = {tag: (n / total if total else 0.0) for tag, n in counts.items()}
    return SplitStats(record_count=total, tag_counts=counts, tag_fractions=fractions)


def full_text(record: Record) -> str:
    """The canonical article string: paragraphs joined by single newlines."""
    return "\n".join(record.paragraphs)
