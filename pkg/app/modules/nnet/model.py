"""
Tiny encoder-decoder transformer.

Pre-norm layers with hand-written multi-head attention so that masking is
exact: a masked score contributes exactly zero weight, which keeps decoder
causality bit-exact and lets the decoders reuse the same forward pass.
"""

from __future__ import annotations

import logging
import math
from typing import Optional, Sequence, Tuple

import torch
import torch.nn as nn
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.errors import IdOutOfRange, ShapeMismatch
from app.modules.textproc.vocab import PAD

logger = logging.getLogger(__name__)

MASK_VALUE = -1e9


class ModelHyper(BaseModel):
    """Dimensions of the translation model."""

    model_config = ConfigDict(frozen=True)

    src_vocab_size: int = Field(..., ge=5, description="Source vocabulary size")
    tgt_vocab_size: int = Field(..., ge=5, description="Target vocabulary size")
    d_model: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(128, ge=1)
    enc_layers: int = Field(2, ge=1)
    dec_layers: int = Field(2, ge=1)
    max_len: int = Field(64, ge=2, description="Longest sequence, BOS/EOS included")

    @model_validator(mode="after")
    def _heads_divide_model(self) -> "ModelHyper":
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        return self


def sinusoidal_positions(max_len: int, d_model: int) -> torch.Tensor:
    pe = torch.zeros(max_len, d_model)
    position = torch.arange(0, max_len, dtype=torch.float).unsqueeze(1)
    div_term = torch.exp(torch.arange(0, d_model, 2).float() * (-math.log(10000.0) / d_model))
    pe[:, 0::2] = torch.sin(position * div_term)
    pe[:, 1::2] = torch.cos(position * div_term[: d_model // 2])
    return pe


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.d_head = d_model // heads
        self.query = nn.Linear(d_model, d_model)
        # no bias: it would shift all scores of a query equally
        self.key = nn.Linear(d_model, d_model, bias=False)
        self.value = nn.Linear(d_model, d_model)
        self.out = nn.Linear(d_model, d_model)

    def forward(
        self, query: torch.Tensor, memory: torch.Tensor, mask: Optional[torch.Tensor]
    ) -> torch.Tensor:
        # query: [B, Tq, d], memory: [B, Tk, d], mask: bool [B|1, Tq|1, Tk], True = blocked
        batch, tq, d = query.shape
        tk = memory.size(1)
        q = self.query(query).view(batch, tq, self.heads, self.d_head).transpose(1, 2)
        k = self.key(memory).view(batch, tk, self.heads, self.d_head).transpose(1, 2)
        v = self.value(memory).view(batch, tk, self.heads, self.d_head).transpose(1, 2)
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.d_head)
        if mask is not None:
            scores = scores.masked_fill(mask.unsqueeze(1), MASK_VALUE)
        weights = torch.softmax(scores, dim=-1)
        context = (weights @ v).transpose(1, 2).reshape(batch, tq, d)
        return self.out(context)


class FeedForward(nn.Module):
    def __init__(self, d_model: int, d_ff: int) -> None:
        super().__init__()
        self.inner = nn.Linear(d_model, d_ff)
        self.outer = nn.Linear(d_ff, d_model)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.outer(torch.relu(self.inner(x)))


class EncoderLayer(nn.Module):
    def __init__(self, d_model: int, heads: int, d_ff: int) -> None:
        super().__init__()
        self.self_norm = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, heads)
        self.ffn_norm = nn.LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_ff)

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, pad_mask)
        return x + self.ffn(self.ffn_norm(x))


class DecoderLayer(nn.Module):
    def __init__(self, d_model: int, heads: int, d_ff: int) -> None:
        super().__init__()
        self.self_norm = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, heads)
        self.cross_norm = nn.LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, heads)
        self.ffn_norm = nn.LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_ff)

    def forward(
        self,
        x: torch.Tensor,
        memory: torch.Tensor,
        causal_mask: torch.Tensor,
        memory_mask: torch.Tensor,
    ) -> torch.Tensor:
        h = self.self_norm(x)
        x = x + self.self_attn(h, h, causal_mask)
        x = x + self.cross_attn(self.cross_norm(x), memory, memory_mask)
        return x + self.ffn(self.ffn_norm(x))


def reset_parameters(module: nn.Module, d_model: int, seed: int) -> None:
    """Scaled uniform init in [-1/sqrt(d_model), 1/sqrt(d_model)] from a seeded generator."""
    generator = torch.Generator().manual_seed(seed)
    bound = 1.0 / math.sqrt(d_model)
    with torch.no_grad():
        for sub in module.modules():
            if isinstance(sub, nn.LayerNorm):
                sub.weight.fill_(1.0)
                sub.bias.zero_()
            elif isinstance(sub, nn.Linear):
                sub.weight.uniform_(-bound, bound, generator=generator)
                if sub.bias is not None:
                    sub.bias.zero_()
            elif isinstance(sub, nn.Embedding):
                sub.weight.uniform_(-bound, bound, generator=generator)


def causal_mask(length: int, device: torch.device | None = None) -> torch.Tensor:
    """[1, T, T] with True above the diagonal (future positions blocked)."""
    return torch.ones(length, length, dtype=torch.bool, device=device).triu(1).unsqueeze(0)


def check_ids(ids: torch.Tensor, vocab_size: int, name: str) -> None:
    if ids.numel() and (int(ids.min()) < 0 or int(ids.max()) >= vocab_size):
        raise IdOutOfRange(f"{name} ids must lie in [0, {vocab_size})")


class Seq2SeqModel(nn.Module):
    """Encoder-decoder translation model; logits define p(y_t | y_<t, x)."""

    kind = "seq2seq"

    def __init__(
        self, hyper: ModelHyper, seed: int = 0, vocab_hashes: Sequence[str] = ("", "")
    ) -> None:
        super().__init__()
        self.hyper = hyper
        self.vocab_hashes: Tuple[str, ...] = tuple(vocab_hashes)
        d = hyper.d_model
        self.src_embed = nn.Embedding(hyper.src_vocab_size, d)
        self.tgt_embed = nn.Embedding(hyper.tgt_vocab_size, d)
        self.register_buffer("positions", sinusoidal_positions(hyper.max_len, d), persistent=False)
        self.encoder_layers = nn.ModuleList(
            EncoderLayer(d, hyper.heads, hyper.d_ff) for _ in range(hyper.enc_layers)
        )
        self.decoder_layers = nn.ModuleList(
            DecoderLayer(d, hyper.heads, hyper.d_ff) for _ in range(hyper.dec_layers)
        )
        self.encoder_norm = nn.LayerNorm(d)
        self.decoder_norm = nn.LayerNorm(d)
        self.output = nn.Linear(d, hyper.tgt_vocab_size)
        reset_parameters(self, d, seed)

    @property
    def src_vocab_size(self) -> int:
        return self.hyper.src_vocab_size

    @property
    def tgt_vocab_size(self) -> int:
        return self.hyper.tgt_vocab_size

    @property
    def max_len(self) -> int:
        return self.hyper.max_len

    def _embed(self, table: nn.Embedding, ids: torch.Tensor) -> torch.Tensor:
        x = table(ids) * math.sqrt(self.hyper.d_model)
        return x + self.positions[: ids.size(1)].to(x.dtype)

    def _check_length(self, ids: torch.Tensor, name: str) -> None:
        if ids.dim() != 2:
            raise ShapeMismatch(f"{name} must be [batch, length], got {tuple(ids.shape)}")
        if ids.size(1) == 0 or ids.size(1) > self.hyper.max_len:
            raise ShapeMismatch(f"{name} length {ids.size(1)} outside [1, {self.hyper.max_len}]")

    def encode(self, src: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        """Returns (memory [B, S, d], source padding mask [B, S])."""
        self._check_length(src, "src")
        check_ids(src, self.hyper.src_vocab_size, "src")
        pad = src.eq(PAD)
        mask = pad.unsqueeze(1)
        x = self._embed(self.src_embed, src)
        for layer in self.encoder_layers:
            x = layer(x, mask)
        return self.encoder_norm(x), pad

    def decode(
        self, tgt_in: torch.Tensor, memory: torch.Tensor, src_pad: torch.Tensor
    ) -> torch.Tensor:
        self._check_length(tgt_in, "tgt_in")
        check_ids(tgt_in, self.hyper.tgt_vocab_size, "tgt_in")
        if tgt_in.size(0) != memory.size(0):
            raise ShapeMismatch("decoder batch does not match encoder batch")
        self_mask = causal_mask(tgt_in.size(1), tgt_in.device)
        memory_mask = src_pad.unsqueeze(1)
        x = self._embed(self.tgt_embed, tgt_in)
        for layer in self.decoder_layers:
            x = layer(x, memory, self_mask, memory_mask)
        return self.output(self.decoder_norm(x))

    def forward(self, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
        """Logits [batch, tgt_len, |V_tgt|]."""
        if src.dim() != 2 or tgt_in.dim() != 2 or src.size(0) != tgt_in.size(0):
            raise ShapeMismatch(
                f"src {tuple(src.shape)} and tgt_in {tuple(tgt_in.shape)} must be [batch, length] "
                "with the same batch size"
            )
        memory, src_pad = self.encode(src)
        return self.decode(tgt_in, memory, src_pad)

    @torch.no_grad()
    def next_logprobs(
        self, src_ids: Sequence[int], prefixes: Sequence[Sequence[int]]
    ) -> torch.Tensor:
        """
        Log-probabilities of the next target token after each prefix, [len(prefixes), |V_tgt|].

        This is the scoring surface used by the decoders.
        """
        src = torch.tensor([list(src_ids)], dtype=torch.long)
        memory, src_pad = self.encode(src)
        lengths = [len(p) for p in prefixes]
        width = max(lengths)
        tgt = torch.full((len(prefixes), width), PAD, dtype=torch.long)
        for row, prefix in enumerate(prefixes):
            tgt[row, : len(prefix)] = torch.tensor(list(prefix), dtype=torch.long)
        batch = len(prefixes)
        logits = self.decode(tgt, memory.expand(batch, -1, -1), src_pad.expand(batch, -1))
        last = logits[torch.arange(batch), torch.tensor(lengths) - 1]
        return torch.log_softmax(last, dim=-1).double()
