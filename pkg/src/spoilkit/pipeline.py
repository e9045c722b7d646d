"""Run orchestration: configuration, persistence, reports, caching.

Ties corpus loading, the classification cascade, spoiler production, and
the metrics into the two tasks the toolkit covers: spoiler-type
classification (task 1) and spoiler generation scored by BLEU-4
(task 2). Everything a report aggregates is persisted per record, so
re-evaluating a run directory reproduces its metrics exactly.
"""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .backend import CompletionBackend
from .cascade import BinaryScorer, CascadeConfig, SearchSpace, predict_tag
from .corpus import Corpus, Record, SpoilerTag
from .metrics import balanced_accuracy, bleu4, corpus_bleu4, pooled_corpus_bleu4
from .spoiler import SpoilMode, select_exemplars, spoil
from .synthetic import ParaphrasingBackend, paraphrase_corpus, planted_corpus

logger = logging.getLogger(__name__)

PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"


class IntegrityError(ValueError):
    """Persisted data does not match its recorded digest."""


# --- configuration ---------------------------------------------------------


@dataclass
class RunConfig:
    """Settings for a full run; mirrors the CLI flags and the JSON config
    file format. Paths are checked at load time."""

    train_corpus: str | None = None
    eval_corpus: str | None = None
    classification_backend: str = "native-baseline"  # or "remote"
    spoiling_mode: SpoilMode = "extractive"
    multi_threshold: float = 0.5
    passage_threshold: float = 0.5
    sweep_trials: int = 10
    sweep_space: dict | None = None
    seed: int = 0
    backend_url: str | None = None
    backend_timeout: float = 10.0
    backend_max_retries: int = 2
    backend_max_in_flight: int = 4
    cache_dir: str | None = None
    bleu_aggregation: str = "sentence-mean"  # or "pooled"
    prompt_budget: int = 1000
    max_output_tokens: int = 100
    use_gold_tags: bool = False
    strict: bool = False
    out_dir: str | None = None

    def __post_init__(self):
        if self.classification_backend not in ("native-baseline", "remote"):
            raise ValueError(
                f"unknown classification backend: {self.classification_backend!r}"
            )
        if self.spoiling_mode not in ("generative", "extractive", "fallback"):
            raise ValueError(f"unknown spoiling mode: {self.spoiling_mode!r}")
        if self.bleu_aggregation not in ("sentence-mean", "pooled"):
            raise ValueError(f"unknown BLEU aggregation: {self.bleu_aggregation!r}")
        for name in ("train_corpus", "eval_corpus"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ValueError(f"{name} does not exist: {path}")

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    def to_dict(self) -> dict:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def digest(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def search_space(self) -> SearchSpace:
        from .cascade import default_search_space

        if self.sweep_space is None:
            return default_search_space()
        space = dict(self.sweep_space)
        space["lr_range"] = tuple(space["lr_range"])
        return SearchSpace(**space)


def build_provenance(config: RunConfig | None,
                     corpus_paths: dict[str, str | Path] | None = None) -> dict:
    digests = {}
    for name, path in (corpus_paths or {}).items():
        digests[name] = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return {
        "tool_version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config_digest": config.digest() if config is not None else None,
        "corpus_digests": digests,
    }


# --- per-record predictions ------------------------------------------------


@dataclass
class PredictionRow:
    """One persisted prediction: the unit every report is built from."""

    id: str
    predicted_tag: str | None = None
    spoiler_texts: list[str] = field(default_factory=list)
    method: str = "cascade"
    scores: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "predicted_tag": self.predicted_tag,
            "spoiler_texts": list(self.spoiler_texts),
            "method": self.method,
            "scores": dict(self.scores),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PredictionRow":
        return cls(
            id=data["id"],
            predicted_tag=data.get("predicted_tag"),
            spoiler_texts=list(data.get("spoiler_texts", [])),
            method=data.get("method", "cascade"),
            scores=dict(data.get("scores", {})),
        )


def classify_corpus(
    corpus: Corpus,
    model1: BinaryScorer,
    model2: BinaryScorer,
    config: CascadeConfig | None = None,
) -> list[PredictionRow]:
    """Run the cascade over every record, in corpus order."""
    rows = []
    for record in corpus.records:
        prediction = predict_tag(record.title, model1, model2, config)
        scores = {"multi": prediction.multi_score}
        if prediction.passage_score is not None:
            scores["passage"] = prediction.passage_score
        rows.append(
            PredictionRow(id=record.id, predicted_tag=prediction.tag.value, scores=scores)
        )
    return rows


def spoil_corpus(
    corpus: Corpus,
    tags: dict[str, SpoilerTag],
    mode: SpoilMode,
    backend: CompletionBackend | None = None,
    exemplars: dict[SpoilerTag, Record] | None = None,
    truncation_budget: int = 1000,
    max_output_tokens: int = 100,
    scores: dict[str, dict[str, float]] | None = None,
) -> list[PredictionRow]:
    """Produce a spoiler per record, routed by ``tags`` (predicted or gold
    spoiler types, keyed by record id)."""
    from .cascade import TagPrediction

    rows = []
    for record in corpus.records:
        if record.id not in tags:
            raise ValueError(f"no spoiler type available for record {record.id}")
        tag = tags[record.id]
        tag_prediction = TagPrediction(tag, multi_score=1.0 if tag is SpoilerTag.MULTI else 0.0)
        prediction = spoil(
            record,
            tag_prediction,
            mode,
            backend=backend,
            exemplars=exemplars,
            truncation_budget=truncation_budget,
            max_output_tokens=max_output_tokens,
        )
        rows.append(
            PredictionRow(
                id=record.id,
                predicted_tag=tag.value,
                spoiler_texts=prediction.texts,
                method=prediction.method,
                scores=(scores or {}).get(record.id, {}),
            )
        )
    return rows


# --- report assembly -------------------------------------------------------


def task1_report(corpus: Corpus, rows: list[PredictionRow]) -> dict:
    """Classification metrics recomputed purely from persisted rows.

    Model 2's balanced accuracy covers the gold non-multi records the
    cascade actually routed to it (rows predicted multi never consulted
    model 2, so they cannot appear in its pairs).
    """
    by_id = corpus.by_id()
    gold_pred: list[tuple[SpoilerTag, SpoilerTag]] = []
    for row in rows:
        record = by_id.get(row.id)
        if record is None:
            raise ValueError(f"prediction {row.id} has no matching corpus record")
        if record.tag is None or row.predicted_tag is None:
            continue
        gold_pred.append((record.tag, SpoilerTag(row.predicted_tag)))
    if not gold_pred:
        raise ValueError("no labeled records with tag predictions to evaluate")

    model1_pairs = [
        (gold is SpoilerTag.MULTI, pred is SpoilerTag.MULTI) for gold, pred in gold_pred
    ]
    model2_pairs = [
        (gold is SpoilerTag.PASSAGE, pred is SpoilerTag.PASSAGE)
        for gold, pred in gold_pred
        if gold is not SpoilerTag.MULTI and pred is not SpoilerTag.MULTI
    ]
    confusion = {g.value: {p.value: 0 for p in SpoilerTag} for g in SpoilerTag}
    for gold, pred in gold_pred:
        confusion[gold.value][pred.value] += 1

    report = {
        "records": len(gold_pred),
        "cascade_balanced_accuracy": balanced_accuracy(gold_pred),
        "confusion": confusion,
    }
    report["model1_balanced_accuracy"] = balanced_accuracy(model1_pairs)
    if model2_pairs and len({g for g, _ in model2_pairs}) == 2:
        report["model2_balanced_accuracy"] = balanced_accuracy(model2_pairs)
    else:
        report["model2_balanced_accuracy"] = None
    return report


def task2_report(corpus: Corpus, rows: list[PredictionRow],
                 aggregation: str = "sentence-mean") -> dict:
    """BLEU-4 of persisted spoiler texts against gold spoilers."""
    by_id = corpus.by_id()
    pairs = []
    per_record = []
    per_tag: dict[str, list] = {}
    for row in rows:
        record = by_id.get(row.id)
        if record is None:
            raise ValueError(f"prediction {row.id} has no matching corpus record")
        if not row.spoiler_texts or not record.spoilers:
            continue
        pair = (row.spoiler_texts, record.spoilers)
        pairs.append(pair)
        per_record.append(
            {"id": row.id, "bleu4": bleu4(" ".join(pair[0]), " ".join(pair[1])).score}
        )
        if record.tag is not None:
            per_tag.setdefault(record.tag.value, []).append(pair)
    if not pairs:
        raise ValueError("no records with both predicted and gold spoilers")

    aggregate = corpus_bleu4 if aggregation == "sentence-mean" else pooled_corpus_bleu4
    return {
        "records": len(pairs),
        "aggregation": aggregation,
        "bleu4": aggregate(pairs),
        "bleu4_sentence_mean": corpus_bleu4(pairs),
        "bleu4_pooled": pooled_corpus_bleu4(pairs),
        "per_tag_bleu4": {tag: aggregate(tag_pairs) for tag, tag_pairs in sorted(per_tag.items())},
        "per_record": per_record,
    }


@dataclass
class RunReport:
    task1: dict | None = None
    task2: dict | None = None
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"task1": self.task1, "task2": self.task2, "provenance": self.provenance}

    @classmethod
    def from_dict(cls, data: dict) -> "RunReport":
        return cls(
            task1=data.get("task1"),
            task2=data.get("task2"),
            provenance=data.get("provenance", {}),
        )


def render_report(report: RunReport) -> str:
    """Human-readable rendering of a run report."""
    lines = ["== spoilkit run report =="]
    prov = report.provenance
    if prov:
        lines.append(f"tool version: {prov.get('tool_version', '?')}")
        if prov.get("created"):
            lines.append(f"created: {prov['created']}")
        if prov.get("config_digest"):
            lines.append(f"config digest: {prov['config_digest'][:16]}…")
        for name, digest in (prov.get("corpus_digests") or {}).items():
            lines.append(f"corpus {name}: sha256 {digest[:16]}…")
    if report.task1:
        t1 = report.task1
        lines.append("")
        lines.append(f"task 1: spoiler-type classification ({t1['records']} records)")
        m2 = t1.get("model2_balanced_accuracy")
        lines.append(f"  model 1 (multi vs rest) balanced accuracy:      "
                     f"{t1['model1_balanced_accuracy']:.4f}")
        lines.append(f"  model 2 (passage vs phrase) balanced accuracy:  "
                     f"{m2:.4f}" if m2 is not None else
                     "  model 2 (passage vs phrase) balanced accuracy:  n/a")
        lines.append(f"  cascade (3-class) balanced accuracy:            "
                     f"{t1['cascade_balanced_accuracy']:.4f}")
        lines.append("  confusion (rows gold, columns predicted):")
        tags = [t.value for t in SpoilerTag]
        lines.append("    " + " ".join(f"{'':>8}" if i < 0 else f"{t:>8}"
                                       for i, t in enumerate([""] + tags)))
        for gold in tags:
            row = report.task1["confusion"][gold]
            lines.append("    " + f"{gold:>8} " + " ".join(f"{row[p]:>8}" for p in tags))
    if report.task2:
        t2 = report.task2
        lines.append("")
        lines.append(f"task 2: spoiler generation ({t2['records']} records)")
        lines.append(f"  BLEU-4 ({t2['aggregation']}): {t2['bleu4']:.4f}")
        lines.append(f"  BLEU-4 sentence-mean: {t2['bleu4_sentence_mean']:.4f}  "
                     f"pooled: {t2['bleu4_pooled']:.4f}")
        for tag, score in t2["per_tag_bleu4"].items():
            lines.append(f"  {tag:>8}: {score:.4f}")
    return "\n".join(lines) + "\n"


# --- persistence -----------------------------------------------------------


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def persist_run(report: RunReport, rows: list[PredictionRow],
                directory: str | Path) -> dict:
    """Write predictions, report, and a digest manifest into ``directory``."""
    if not rows:
        raise ValueError("nothing to persist: the predictions list is empty")
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    predictions_path = directory / PREDICTIONS_FILE
    with predictions_path.open("w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row.to_dict(), sort_keys=True, ensure_ascii=False))
            handle.write("\n")
    report_path = directory / REPORT_FILE
    report_path.write_text(
        json.dumps(report.to_dict(), sort_keys=True, indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    manifest = {
        "tool_version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": {
            PREDICTIONS_FILE: _sha256_file(predictions_path),
            REPORT_FILE: _sha256_file(report_path),
        },
    }
    (directory / MANIFEST_FILE).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def load_predictions(path: str | Path) -> list[PredictionRow]:
    """Read a predictions file, or a run directory (digest-checked)."""
    path = Path(path)
    if path.is_dir():
        manifest_path = path / MANIFEST_FILE
        predictions_path = path / PREDICTIONS_FILE
        if manifest_path.is_file():
            manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
            expected = manifest.get("files", {}).get(PREDICTIONS_FILE)
            actual = _sha256_file(predictions_path)
            if expected != actual:
                raise IntegrityError(
                    f"digest mismatch for {predictions_path}: manifest records "
                    f"{expected}, file hashes to {actual}"
                )
        path = predictions_path
    rows = []
    with path.open(encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                rows.append(PredictionRow.from_dict(json.loads(line)))
    return rows


def load_report(path: str | Path) -> RunReport:
    path = Path(path)
    if path.is_dir():
        path = path / REPORT_FILE
    return RunReport.from_dict(json.loads(path.read_text(encoding="utf-8")))


# --- completion caching ----------------------------------------------------


class CompletionCache:
    """Append-only, content-addressed store of backend completions."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key(prompt: str, max_tokens: int) -> str:
        payload = f"{max_tokens}\n{prompt}".encode("utf-8")
        return hashlib.sha256(payload).hexdigest()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, prompt: str, max_tokens: int) -> str | None:
        key = self.key(prompt, max_tokens)
        path = self._path(key)
        if not path.is_file():
            return None
        try:
            entry = json.loads(path.read_text(encoding="utf-8"))
            text = entry["text"]
            ok = (
                entry["max_tokens"] == max_tokens
                and entry["prompt_sha256"]
                == hashlib.sha256(prompt.encode("utf-8")).hexdigest()
                and entry["text_sha256"]
                == hashlib.sha256(text.encode("utf-8")).hexdigest()
            )
        except (ValueError, KeyError, TypeError):
            ok = False
        if not ok:
            logger.warning("completion cache entry %s is corrupt; treating as a miss", key)
            return None
        return text

    def put(self, prompt: str, max_tokens: int, text: str):
        entry = {
            "max_tokens": max_tokens,
            "prompt_sha256": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "text": text,
            "text_sha256": hashlib.sha256(text.encode("utf-8")).hexdigest(),
        }
        self._path(self.key(prompt, max_tokens)).write_text(
            json.dumps(entry, sort_keys=True, ensure_ascii=False), encoding="utf-8"
        )


class CachingBackend:
    """CompletionBackend wrapper that consults a CompletionCache first."""

    def __init__(self, backend: CompletionBackend, cache: CompletionCache):
        self._backend = backend
        self._cache = cache

    def complete(self, prompt: str, max_tokens: int) -> str:
        cached = self._cache.get(prompt, max_tokens)
        if cached is not None:
            return cached
        text = self._backend.complete(prompt, max_tokens)
        self._cache.put(prompt, max_tokens, text)
        return text


# --- the metric-diagnosis experiment ----------------------------------------


def extractive_vs_generative_experiment(n: int = 100, seed: int = 0) -> dict:
    """Why n-gram metrics favor extraction: score both routes on a corpus
    whose gold spoilers are verbatim article spans.

    The generative route is served by a mock backend that answers with a
    synonym-substituted copy of the gold spoiler — a perfectly good
    spoiler with almost no surface overlap — while extraction returns
    spans verbatim. Returns both corpus BLEU-4 scores and their gap.
    """
    from dataclasses import replace

    from .spoiler import build_prompt, extract_spoiler, generate_spoiler

    corpus, synonyms = paraphrase_corpus(n, seed=seed)
    backend = ParaphrasingBackend(corpus, synonyms)
    exemplar_corpus, _ = planted_corpus(2, seed=seed + 987_001, split_name="exemplars")
    exemplars = {
        tag: replace(record, id=f"exemplar-{record.id}")
        for tag, record in select_exemplars(exemplar_corpus).items()
    }

    extractive_pairs = []
    generative_pairs = []
    for record in corpus.records:
        # gold spoiler types isolate the metric comparison from classifier noise
        extracted = extract_spoiler(record, record.tag)
        prompt = build_prompt(record.tag, record, exemplars[record.tag],
                              truncation_budget=2000)
        generated = generate_spoiler(backend, prompt, max_output_tokens=100)
        extractive_pairs.append((extracted.texts, record.spoilers))
        generative_pairs.append((generated.texts, record.spoilers))

    extractive = corpus_bleu4(extractive_pairs)
    generative = corpus_bleu4(generative_pairs)
    return {
        "records": n,
        "extractive_bleu4": extractive,
        "generative_bleu4": generative,
        "gap": extractive - generative,
    }
