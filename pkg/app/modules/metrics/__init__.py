from .router import router
from .services import (
    BleuConfig,
    BleuReport,
    BleuStats,
    brevity_penalty,
    corpus_bleu,
    format_score,
    leaderboard_average,
    modified_precision,
    ngram_counts,
    prepare_tokens,
    sentence_bleu,
)

__all__ = [
    "BleuConfig",
    "BleuReport",
    "BleuStats",
    "brevity_penalty",
    "corpus_bleu",
    "format_score",
    "leaderboard_average",
    "modified_precision",
    "ngram_counts",
    "prepare_tokens",
    "router",
    "sentence_bleu",
]
