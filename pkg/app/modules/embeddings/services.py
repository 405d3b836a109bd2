"""
Skip-gram word vectors and embedding-substitution augmentation.

The trainer discriminates observed (center, context) pairs from negatives
drawn from the unigram distribution raised to 3/4. The learned input vectors
drive nearest-neighbour substitution on the source side of parallel data.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from pydantic import BaseModel, Field

from app.core.errors import UnknownToken, ZeroVector
from app.modules.textproc.vocab import SPECIAL_IDS, UNK, Vocabulary, build_vocab, encode

logger = logging.getLogger(__name__)

UNIGRAM_POWER = 0.75
LR_FLOOR = 1e-4

TokenPair = Tuple[List[str], List[str]]


class SkipgramConfig(BaseModel):
    dim: int = Field(64, ge=2, description="Vector dimension")
    window: int = Field(5, ge=1, description="Context window on each side")
    negatives: int = Field(5, ge=1, description="Negative samples per positive pair")
    epochs: int = Field(5, ge=0)
    lr: float = Field(0.025, gt=0, description="Initial SGD rate, decayed linearly")
    min_count: int = Field(1, ge=1)
    max_vocab: int = Field(50_000, ge=5)
    batch_size: int = Field(64, ge=1, description="Positive pairs per SGD step")
    seed: int = 0


class AugmentConfig(BaseModel):
    expansion_factor: int = Field(10, ge=1, description="Output size as a multiple of the input")
    substitutions_per_sentence: int = Field(1, ge=0)
    top_k: int = Field(5, ge=1, description="Neighbour pool sampled from")
    min_similarity: float = Field(0.5, ge=-1.0, le=1.0)
    seed: int = 0


@dataclass(frozen=True)
class EmbeddingTable:
    vocab: Vocabulary
    vectors: torch.Tensor  # [|V|, dim], float32

    def __post_init__(self) -> None:
        if self.vectors.dim() != 2 or self.vectors.size(0) != len(self.vocab):
            raise ValueError("one vector per vocabulary token is required")
        if self.vectors.size(1) < 2:
            raise ValueError("embedding dimension must be >= 2")

    @property
    def dim(self) -> int:
        return self.vectors.size(1)

    def vector(self, token: str) -> torch.Tensor:
        if token not in self.vocab:
            raise UnknownToken(f"'{token}' is not in the embedding vocabulary")
        return self.vectors[self.vocab.index[token]]


class SkipGramModel(nn.Module):
    """Input (center) and output (context) tables of the negative-sampling objective."""

    def __init__(self, vocab_size: int, dim: int, generator: torch.Generator) -> None:
        super().__init__()
        self.embed_hidden = nn.Embedding(vocab_size, dim)
        self.embed_output = nn.Embedding(vocab_size, dim)
        init_range = 0.5 / dim
        with torch.no_grad():
            self.embed_hidden.weight.uniform_(-init_range, init_range, generator=generator)
            self.embed_output.weight.zero_()

    def forward(
        self, centers: torch.Tensor, contexts: torch.Tensor, negatives: torch.Tensor
    ) -> torch.Tensor:
        """Summed negative log-likelihood over the batch."""
        hidden = self.embed_hidden(centers)  # [B, d]
        positive = (hidden * self.embed_output(contexts)).sum(-1)
        negative = torch.bmm(self.embed_output(negatives), hidden.unsqueeze(2)).squeeze(2)
        return -(F.logsigmoid(positive).sum() + F.logsigmoid(-negative).sum())


def init_vectors(vocab_size: int, dim: int, seed: int) -> torch.Tensor:
    """The seeded initial input vectors (what a zero-epoch run returns)."""
    generator = torch.Generator().manual_seed(seed)
    return SkipGramModel(vocab_size, dim, generator).embed_hidden.weight.detach().clone()


def skipgram_pairs(sentences: Sequence[Sequence[int]], window: int) -> torch.Tensor:
    """All (center, context) id pairs within the window; UNK positions are skipped."""
    pairs: List[Tuple[int, int]] = []
    for ids in sentences:
        for i, center in enumerate(ids):
            if center == UNK:
                continue
            lo, hi = max(0, i - window), min(len(ids), i + window + 1)
            pairs.extend((center, ids[j]) for j in range(lo, hi) if j != i and ids[j] != UNK)
    if not pairs:
        return torch.empty((0, 2), dtype=torch.long)
    return torch.tensor(pairs, dtype=torch.long)


def negative_sampling_weights(sentences: Sequence[Sequence[int]], vocab_size: int) -> torch.Tensor:
    counts = torch.zeros(vocab_size, dtype=torch.float64)
    for ids in sentences:
        for i in ids:
            counts[i] += 1
    for special in SPECIAL_IDS:
        counts[special] = 0
    return counts.pow(UNIGRAM_POWER)


def train_skipgram(
    corpus: Sequence[Sequence[str]],
    cfg: Optional[SkipgramConfig] = None,
    history: Optional[List[float]] = None,
) -> EmbeddingTable:
    """
    Train vectors with SGD and a linearly decayed learning rate.

    Deterministic for a given seed. Raises EmptyCorpus when no token reaches min_count.
    When `history` is given, the mean per-pair loss of every epoch is appended to it.
    """
    cfg = cfg or SkipgramConfig()
    vocab = build_vocab(corpus, min_count=cfg.min_count, max_size=cfg.max_vocab)
    sentences = [encode(tokens, vocab) for tokens in corpus]
    generator = torch.Generator().manual_seed(cfg.seed)
    model = SkipGramModel(len(vocab), cfg.dim, generator)

    pairs = skipgram_pairs(sentences, cfg.window)
    weights = negative_sampling_weights(sentences, len(vocab))
    n_pairs = pairs.size(0)
    if n_pairs == 0 or cfg.epochs == 0:
        logger.info("Skip-gram: nothing to train (%d pairs, %d epochs)", n_pairs, cfg.epochs)
        return EmbeddingTable(vocab, model.embed_hidden.weight.detach().clone())

    optimizer = torch.optim.SGD(model.parameters(), lr=cfg.lr)
    steps_per_epoch = math.ceil(n_pairs / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    step = 0
    logger.info(
        "Skip-gram: %d tokens, %d pairs, %d epochs, dim=%d", len(vocab), n_pairs, cfg.epochs, cfg.dim
    )
    for epoch in range(cfg.epochs):
        order = torch.randperm(n_pairs, generator=generator)
        epoch_loss = 0.0
        for start in range(0, n_pairs, cfg.batch_size):
            batch = pairs[order[start : start + cfg.batch_size]]
            negatives = torch.multinomial(
                weights, batch.size(0) * cfg.negatives, replacement=True, generator=generator
            ).view(batch.size(0), cfg.negatives)
            lr = cfg.lr * max(LR_FLOOR, 1.0 - step / total_steps)
            for group in optimizer.param_groups:
                group["lr"] = lr
            loss = model(batch[:, 0], batch[:, 1], negatives)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item()
            step += 1
        mean_loss = epoch_loss / n_pairs
        logger.info("Skip-gram epoch %d/%d: loss %.4f", epoch + 1, cfg.epochs, mean_loss)
        if history is not None:
            history.append(mean_loss)

    return EmbeddingTable(vocab, model.embed_hidden.weight.detach().clone())


def cosine_similarity(u: Sequence[float] | torch.Tensor, v: Sequence[float] | torch.Tensor) -> float:
    a = torch.as_tensor(u, dtype=torch.float64).flatten()
    b = torch.as_tensor(v, dtype=torch.float64).flatten()
    if a.shape != b.shape:
        raise ValueError(f"vector sizes differ: {a.numel()} vs {b.numel()}")
    norm_a, norm_b = torch.linalg.vector_norm(a), torch.linalg.vector_norm(b)
    if norm_a == 0 or norm_b == 0:
        raise ZeroVector("cosine similarity of a zero vector is undefined")
    return float((a @ b / (norm_a * norm_b)).clamp(-1.0, 1.0))


def nearest_neighbors(tbl: EmbeddingTable, token: str, k: int) -> List[Tuple[str, float]]:
    """Top-k tokens by cosine, never the query or a special; ties keep vocabulary order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    query = tbl.vector(token)
    query_id = tbl.vocab.index[token]
    vectors = tbl.vectors.double()
    norms = torch.linalg.vector_norm(vectors, dim=1)
    query_norm = torch.linalg.vector_norm(query.double())
    if query_norm == 0:
        raise ZeroVector(f"vector of '{token}' is zero")
    sims = (vectors @ query.double()) / (norms.clamp_min(1e-300) * query_norm)
    candidates = [
        (-float(sims[i]), i)
        for i in range(len(tbl.vocab))
        if i != query_id and i not in SPECIAL_IDS and norms[i] > 0
    ]
    candidates.sort()
    return [(tbl.vocab.tokens[i], -neg_sim) for neg_sim, i in candidates[:k]]


def _substitution_pool(
    tbl: EmbeddingTable, token: str, cfg: AugmentConfig, cache: Dict[str, List[str]]
) -> List[str]:
    if token not in cache:
        if token not in tbl.vocab or tbl.vocab.index[token] in SPECIAL_IDS:
            cache[token] = []
        else:
            try:
                neighbours = nearest_neighbors(tbl, token, cfg.top_k)
            except ZeroVector:
                neighbours = []
            cache[token] = [t for t, sim in neighbours if sim >= cfg.min_similarity]
    return cache[token]


def augment_by_substitution(
    pairs: Sequence[TokenPair], tbl: EmbeddingTable, cfg: Optional[AugmentConfig] = None
) -> List[TokenPair]:
    """
    Each original pair followed by expansion_factor - 1 source-side variants.

    A variant replaces up to substitutions_per_sentence source tokens with a
    neighbour drawn uniformly from that token's qualifying pool. Targets are
    never touched; tokens without a pool stay as they are.
    """
    cfg = cfg or AugmentConfig()
    rng = np.random.default_rng(cfg.seed)
    cache: Dict[str, List[str]] = {}
    out: List[TokenPair] = []
    substituted = 0
    for src, tgt in pairs:
        out.append((list(src), list(tgt)))
        for _ in range(cfg.expansion_factor - 1):
            variant = list(src)
            if cfg.substitutions_per_sentence:
                positions = [
                    i for i, t in enumerate(variant) if _substitution_pool(tbl, t, cfg, cache)
                ]
                count = min(cfg.substitutions_per_sentence, len(positions))
                if count:
                    for pos in rng.choice(len(positions), size=count, replace=False):
                        i = positions[int(pos)]
                        pool = cache[variant[i]]
                        variant[i] = pool[int(rng.integers(len(pool)))]
                    substituted += 1
            out.append((variant, list(tgt)))
    logger.info(
        "Augmented %d pairs to %d (%d variants with substitutions)", len(pairs), len(out), substituted
    )
    return out
