from .model import RerankEncoder, RerankHyper, pair_input
from .services import (
    ContrastiveBatch,
    RerankConfig,
    Reranker,
    Triple,
    build_joint_vocab,
    build_triples,
    candidate_text,
    contrastive_eval,
    contrastive_loss,
    corrupt_tokens,
    embed,
    fit_reranker,
    init_from_translator,
    mine_negatives,
    new_reranker,
    rerank,
    train_reranker,
)

__all__ = [
    "ContrastiveBatch",
    "RerankConfig",
    "RerankEncoder",
    "RerankHyper",
    "Reranker",
    "Triple",
    "build_joint_vocab",
    "build_triples",
    "candidate_text",
    "contrastive_eval",
    "contrastive_loss",
    "corrupt_tokens",
    "embed",
    "fit_reranker",
    "init_from_translator",
    "mine_negatives",
    "new_reranker",
    "pair_input",
    "rerank",
    "train_reranker",
]
