from .services import (
    AugmentConfig,
    EmbeddingTable,
    SkipgramConfig,
    augment_by_substitution,
    cosine_similarity,
    init_vectors,
    nearest_neighbors,
    train_skipgram,
)
from .storage import load_embeddings, save_embeddings

__all__ = [
    "AugmentConfig",
    "EmbeddingTable",
    "SkipgramConfig",
    "augment_by_substitution",
    "cosine_similarity",
    "init_vectors",
    "load_embeddings",
    "nearest_neighbors",
    "save_embeddings",
    "train_skipgram",
]
