"""Command-line interface.

Subcommands: validate, classify, sweep, spoil, evaluate, report. Flags
override values from an optional JSON config file (--config). Exit
status is 0 on success; failures print a one-line diagnostic to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .backend import BackendClient, BackendSettings, RemoteBinaryScorer
from .cascade import (
    CascadeConfig,
    HyperParams,
    run_sweep,
    train_baseline,
)
from .corpus import SpoilerTag, corpus_stats, load_corpus
from .pipeline import (
    CachingBackend,
    CompletionCache,
    RunConfig,
    RunReport,
    build_provenance,
    classify_corpus,
    load_predictions,
    load_report,
    persist_run,
    render_report,
    spoil_corpus,
    task1_report,
    task2_report,
)
from .spoiler import select_exemplars

# fixed settings for the native baseline outside sweeps; chosen to train
# the character-n-gram model reliably on title-scale data
DEFAULT_BASELINE_HP = HyperParams(batch_size=16, epochs=5, learning_rate=0.5,
                                  weight_decay=0.001)


def _add_common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file (flags take precedence)")
    parser.add_argument("--seed", type=int, help="random seed (default 0)")
    parser.add_argument("--out", help="directory to persist predictions and report")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spoilkit",
        description="Classify clickbait spoiler types and produce the spoilers.",
    )
    parser.add_argument("--version", action="version", version=f"spoilkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus file and print split statistics")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="")
    p.add_argument("--strict", action="store_true",
                   help="abort on the first validation violation")

    p = sub.add_parser("classify", help="predict spoiler types over a corpus (task 1)")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="corpus to classify")
    p.add_argument("--train-corpus", help="labeled corpus for the native baseline")
    p.add_argument("--mode", choices=["native-baseline", "remote"])
    p.add_argument("--backend-url")
    p.add_argument("--multi-threshold", type=float)
    p.add_argument("--passage-threshold", type=float)

    p = sub.add_parser("sweep", help="random-search baseline hyperparameters")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", required=True,
                   choices=["multi-vs-rest", "passage-vs-phrase"])
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--eval-corpus", help="held-out corpus (default: 80/20 id-hash split)")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("spoil", help="produce spoilers over a corpus (task 2)")
    _add_common(p)
    p.add_argument("--corpus", required=True)
    p.add_argument("--mode", choices=["generative", "extractive", "fallback"])
    p.add_argument("--tags-from",
                   help="predictions file or run directory supplying spoiler types")
    p.add_argument("--use-gold-tags", action="store_true",
                   help="ablation: route by gold spoiler types instead of predictions")
    p.add_argument("--exemplar-corpus",
                   help="labeled corpus supplying one-shot exemplars (generative modes)")
    p.add_argument("--backend-url")
    p.add_argument("--cache-dir")
    p.add_argument("--budget", type=int, help="prompt truncation budget in words")
    p.add_argument("--max-output-tokens", type=int)

    p = sub.add_parser("evaluate", help="score persisted predictions against gold")
    _add_common(p)
    p.add_argument("--corpus", required=True, help="gold corpus")
    p.add_argument("--predictions", required=True,
                   help="predictions file or run directory")
    p.add_argument("--bleu-aggregation", choices=["sentence-mean", "pooled"])

    p = sub.add_parser("report", help="render a persisted report as text")
    p.add_argument("--report", required=True, help="report file or run directory")

    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    """Start from the config file (if any) and let flags override."""
    config = RunConfig.from_file(args.config) if getattr(args, "config", None) else RunConfig()
    overrides = {
        "seed": getattr(args, "seed", None),
        "train_corpus": getattr(args, "train_corpus", None),
        "classification_backend": getattr(args, "mode", None)
        if args.command == "classify" else None,
        "spoiling_mode": getattr(args, "mode", None) if args.command == "spoil" else None,
        "backend_url": getattr(args, "backend_url", None),
        "multi_threshold": getattr(args, "multi_threshold", None),
        "passage_threshold": getattr(args, "passage_threshold", None),
        "bleu_aggregation": getattr(args, "bleu_aggregation", None),
        "cache_dir": getattr(args, "cache_dir", None),
        "prompt_budget": getattr(args, "budget", None),
        "max_output_tokens": getattr(args, "max_output_tokens", None),
        "use_gold_tags": getattr(args, "use_gold_tags", False) or None,
        "out_dir": getattr(args, "out", None),
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    config.__post_init__()  # re-check after overrides
    return config


def _backend_client(config: RunConfig) -> BackendClient:
    if not config.backend_url:
        raise ValueError("a backend URL is required (--backend-url or config)")
    return BackendClient(
        BackendSettings(
            base_url=config.backend_url,
            timeout=config.backend_timeout,
            max_retries=config.backend_max_retries,
            max_in_flight=config.backend_max_in_flight,
        )
    )


def _cmd_validate(args) -> int:
    corpus = load_corpus(args.corpus, args.split, strict=args.strict)
    stats = corpus_stats(corpus)
    print(f"corpus {args.corpus} ({corpus.split_name}): {stats.record_count} records")
    for tag in SpoilerTag:
        print(f"  {tag.value:>8}: {stats.tag_counts[tag]:>6}"
              f"  ({stats.tag_fractions[tag]:.3f})")
    if corpus.violations:
        print(f"  {len(corpus.violations)} validation violation(s):")
        for violation in corpus.violations:
            print(f"    {violation}")
    else:
        print("  no validation violations")
    return 0


def _cmd_classify(args) -> int:
    config = _run_config(args)
    corpus = load_corpus(args.corpus, strict=config.strict)
    cascade_config = CascadeConfig(config.multi_threshold, config.passage_threshold)

    if config.classification_backend == "native-baseline":
        if not config.train_corpus:
            raise ValueError("native-baseline classification needs --train-corpus")
        train = load_corpus(config.train_corpus)
        model1 = train_baseline(train, "multi-vs-rest", DEFAULT_BASELINE_HP, config.seed)
        model2 = train_baseline(train, "passage-vs-phrase", DEFAULT_BASELINE_HP,
                                config.seed + 1)
    else:
        client = _backend_client(config)
        model1 = RemoteBinaryScorer(client, "multi-vs-rest")
        model2 = RemoteBinaryScorer(client, "passage-vs-phrase")

    rows = classify_corpus(corpus, model1, model2, cascade_config)
    report = RunReport(provenance=build_provenance(config, {"eval": args.corpus}))
    if any(r.tag is not None for r in corpus.records):
        report.task1 = task1_report(corpus, rows)
    if config.out_dir:
        persist_run(report, rows, config.out_dir)
        print(f"persisted {len(rows)} predictions to {config.out_dir}")
    print(render_report(report), end="")
    return 0


def _cmd_sweep(args) -> int:
    config = _run_config(args)
    corpus = load_corpus(args.corpus)
    eval_corpus = load_corpus(args.eval_corpus) if args.eval_corpus else None
    result = run_sweep(corpus, args.task, config.search_space(), args.trials,
                       config.seed, eval_corpus=eval_corpus, workers=args.workers)
    print(f"sweep over {args.trials} trials on task {args.task} (seed {config.seed})")
    print(f"{'rank':>4} {'bal.acc':>8} {'batch':>5} {'epochs':>6} "
          f"{'learning rate':>13} {'decay':>5}")
    for rank, trial in enumerate(result.trials, start=1):
        hp = trial.params
        print(f"{rank:>4} {trial.balanced_accuracy:>8.4f} {hp.batch_size:>5} "
              f"{hp.epochs:>6} {hp.learning_rate:>13.3e} {hp.weight_decay:>5.2f}")
    if result.failures:
        print(f"{len(result.failures)} failed trial(s)")
    print("correlation with balanced accuracy:")
    for name, value in result.correlations.items():
        shown = "n/a" if value is None else f"{value:+.3f}"
        print(f"  {name:>20}: {shown}")
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.json").write_text(
            json.dumps(result.to_dict(), sort_keys=True, indent=2) + "\n",
            encoding="utf-8",
        )
        print(f"wrote {out / 'sweep.json'}")
    return 0


def _cmd_spoil(args) -> int:
    config = _run_config(args)
    corpus = load_corpus(args.corpus, strict=config.strict)

    if config.use_gold_tags:
        tags = {r.id: r.tag for r in corpus.records if r.tag is not None}
    elif args.tags_from:
        tags = {}
        for row in load_predictions(args.tags_from):
            if row.predicted_tag is not None:
                tags[row.id] = SpoilerTag(row.predicted_tag)
    else:
        raise ValueError(
            "spoil needs predicted types (--tags-from, from a classify run) "
            "or the explicit --use-gold-tags ablation flag"
        )

    backend = None
    exemplars = None
    if config.spoiling_mode in ("generative", "fallback"):
        backend = _backend_client(config)
        if config.cache_dir:
            backend = CachingBackend(backend, CompletionCache(config.cache_dir))
        exemplar_path = args.exemplar_corpus or config.train_corpus
        if not exemplar_path:
            raise ValueError("generative spoiling needs --exemplar-corpus")
        exemplars = select_exemplars(load_corpus(exemplar_path))

    rows = spoil_corpus(
        corpus,
        tags,
        config.spoiling_mode,
        backend=backend,
        exemplars=exemplars,
        truncation_budget=config.prompt_budget,
        max_output_tokens=config.max_output_tokens,
    )
    report = RunReport(provenance=build_provenance(config, {"eval": args.corpus}))
    if any(r.spoilers for r in corpus.records):
        report.task2 = task2_report(corpus, rows, config.bleu_aggregation)
    if config.out_dir:
        persist_run(report, rows, config.out_dir)
        print(f"persisted {len(rows)} predictions to {config.out_dir}")
    print(render_report(report), end="")
    return 0


def _cmd_evaluate(args) -> int:
    config = _run_config(args)
    corpus = load_corpus(args.corpus)
    rows = load_predictions(args.predictions)
    report = RunReport(provenance=build_provenance(config, {"gold": args.corpus}))
    if any(row.predicted_tag for row in rows) and any(r.tag for r in corpus.records):
        report.task1 = task1_report(corpus, rows)
    if any(row.spoiler_texts for row in rows):
        report.task2 = task2_report(corpus, rows, config.bleu_aggregation)
    if report.task1 is None and report.task2 is None:
        raise ValueError("predictions contain neither spoiler types nor spoiler texts")
    if config.out_dir:
        persist_run(report, rows, config.out_dir)
    print(render_report(report), end="")
    return 0


def _cmd_report(args) -> int:
    print(render_report(load_report(args.report)), end="")
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "classify": _cmd_classify,
    "sweep": _cmd_sweep,
    "spoil": _cmd_spoil,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"spoilkit {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
