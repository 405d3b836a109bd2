"""
Bilingual scoring encoder for contrastive re-ranking.

Input layout: BOS src EOS cand EOS over one joint vocabulary, with a segment
embedding telling the two sides apart. The mean of the non-PAD hidden states
goes through a non-linear projection head.
"""

from __future__ import annotations

import logging
import math
from typing import Iterator, List, Sequence, Tuple

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import ShapeMismatch
from app.modules.nnet.checkpoint import register_model_kind
from app.modules.nnet.model import EncoderLayer, check_ids, reset_parameters, sinusoidal_positions
from app.modules.textproc.vocab import BOS, EOS, PAD

logger = logging.getLogger(__name__)


class RerankHyper(BaseModel):
    model_config = ConfigDict(frozen=True)

    vocab_size: int = Field(..., ge=5, description="Joint source+target vocabulary size")
    d_model: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(128, ge=1)
    layers: int = Field(2, ge=1)
    d_proj: int = Field(64, ge=1, description="Output size of the projection head")
    max_len: int = Field(129, ge=3, description="Longest BOS src EOS cand EOS input")

    @model_validator(mode="after")
    def _heads_divide_model(self) -> "RerankHyper":
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        return self


class RerankEncoder(nn.Module):
    kind = "rerank"

    def __init__(self, hyper: RerankHyper, seed: int = 0, vocab_hashes: Sequence[str] = ("",)) -> None:
        super().__init__()
        self.hyper = hyper
        self.vocab_hashes: Tuple[str, ...] = tuple(vocab_hashes)
        d = hyper.d_model
        self.token_embed = nn.Embedding(hyper.vocab_size, d)
        self.segment_embed = nn.Embedding(2, d)
        self.register_buffer("positions", sinusoidal_positions(hyper.max_len, d), persistent=False)
        self.layers = nn.ModuleList(EncoderLayer(d, hyper.heads, hyper.d_ff) for _ in range(hyper.layers))
        self.norm = nn.LayerNorm(d)
        self.head = nn.Sequential(nn.Linear(d, d), nn.Tanh(), nn.Linear(d, hyper.d_proj))
        reset_parameters(self, d, seed)

    def body_parameters(self) -> Iterator[nn.Parameter]:
        return (p for name, p in self.named_parameters() if not name.startswith("head."))

    def head_parameters(self) -> Iterator[nn.Parameter]:
        return self.head.parameters()

    def forward(self, ids: torch.Tensor, segments: torch.Tensor) -> torch.Tensor:
        """[B, T] ids and segment labels -> [B, d_proj]."""
        if ids.dim() != 2 or ids.shape != segments.shape:
            raise ShapeMismatch(f"ids {tuple(ids.shape)} and segments {tuple(segments.shape)} differ")
        if ids.size(1) == 0 or ids.size(1) > self.hyper.max_len:
            raise ShapeMismatch(f"input length {ids.size(1)} outside [1, {self.hyper.max_len}]")
        check_ids(ids, self.hyper.vocab_size, "rerank")
        pad = ids.eq(PAD)
        x = self.token_embed(ids) * math.sqrt(self.hyper.d_model) + self.segment_embed(segments)
        x = x + self.positions[: ids.size(1)].to(x.dtype)
        for layer in self.layers:
            x = layer(x, pad.unsqueeze(1))
        x = self.norm(x)
        keep = (~pad).unsqueeze(-1).to(x.dtype)
        pooled = (x * keep).sum(1) / keep.sum(1).clamp_min(1.0)
        return self.head(pooled)


def pair_input(src_ids: Sequence[int], cand_ids: Sequence[int]) -> Tuple[List[int], List[int]]:
    """BOS src EOS cand EOS with segment 0 for the source part and 1 for the candidate."""
    ids = [BOS] + list(src_ids) + [EOS] + list(cand_ids) + [EOS]
    segments = [0] * (len(src_ids) + 2) + [1] * (len(cand_ids) + 1)
    return ids, segments


register_model_kind(
    RerankEncoder.kind,
    RerankHyper,
    lambda hyper, vocab_hashes: RerankEncoder(hyper, vocab_hashes=vocab_hashes),
)
