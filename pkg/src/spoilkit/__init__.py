"""spoilkit: classify clickbait spoiler types and produce the spoilers.

A desk-scale toolkit covering both halves of the clickbait-spoiling
problem — a two-binary-classifier cascade for spoiler-type prediction
(with its hyperparameter sweep harness) and spoiler production by
extractive span selection or one-shot prompted generation — together
with exact implementations of the evaluation metrics the tasks use:
balanced accuracy and BLEU-4.
"""

__version__ = "0.1.0"

from .corpus import Corpus, Record, SpoilerTag, corpus_stats, full_text, load_corpus
from .metrics import balanced_accuracy, bleu4, brevity_penalty, corpus_bleu4, tokenize

__all__ = [
    "Corpus",
    "Record",
    "SpoilerTag",
    "balanced_accuracy",
    "bleu4",
    "brevity_penalty",
    "corpus_bleu4",
    "corpus_stats",
    "full_text",
    "load_corpus",
    "tokenize",
    "__version__",
]
