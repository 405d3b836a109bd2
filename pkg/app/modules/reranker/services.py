"""
Contrastive re-ranking.

Training pulls embed(src, ref) towards embed(src, src) and pushes the
mined negatives away (single-positive InfoNCE). At inference a candidate's
confidence is cos(embed(src, src), embed(src, cand)).
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, Field

from app.core.artifacts import ensure_dir, load_json, save_json
from app.core.errors import (
    CorruptCheckpoint,
    DataError,
    EmptyCandidates,
    EmptyCorpus,
    NonFiniteLoss,
    ZeroVector,
)
from app.modules.decoding import DecodeConfig, Hypothesis, Translator
from app.modules.nnet import OptimizerState, TrainConfig, load_checkpoint, pad_batch, save_checkpoint
from app.modules.reranker.model import RerankEncoder, RerankHyper, pair_input
from app.modules.textproc import (
    Vocabulary,
    build_vocab,
    decode,
    detokenize,
    encode,
    load_vocab,
    save_vocab,
    tokenize,
)
from app.modules.textproc.vocab import SPECIAL_IDS
from app.shared.models import Lang, Sentence, tokenizer_mode_for

logger = logging.getLogger(__name__)

TextLike = Union[Sentence, Sequence[str]]


class RerankConfig(BaseModel):
    epochs: int = Field(15, ge=0)
    batch_size: int = Field(32, ge=1)
    negatives: int = Field(4, ge=1, description="Negatives per positive (1:4 by default)")
    tau: float = Field(0.1, gt=0, description="Softmax temperature")
    lr_body: float = Field(1e-5, ge=0, description="Learning rate of the encoder body")
    lr_head: float = Field(2e-4, ge=0, description="Learning rate of the projection head")
    lr_min: float = Field(1e-8, ge=0)
    weight_decay: float = Field(0.01, ge=0)
    grad_clip: float = Field(1.0, ge=0)
    d_model: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(128, ge=1)
    layers: int = Field(2, ge=1)
    d_proj: int = Field(64, ge=1)
    seed: int = 0


@dataclass
class ContrastiveBatch:
    """h_x and h_pos are [..., d]; h_negs is [..., n, d]."""

    h_x: torch.Tensor
    h_pos: torch.Tensor
    h_negs: torch.Tensor
    tau: float = 0.1


@dataclass(frozen=True)
class Triple:
    src: Sentence
    ref: Sentence
    negatives: Tuple[Sentence, ...]


@dataclass
class Reranker:
    """
    A scoring encoder with its joint vocabulary and the direction it serves.

    tgt_vocab is the translator's target vocabulary; it turns candidate ids
    back into text when a candidate arrives without it.
    """

    encoder: RerankEncoder
    vocab: Vocabulary
    src_lang: Lang
    tgt_lang: Lang
    tgt_vocab: Optional[Vocabulary] = None

    def save(self, directory: Path) -> None:
        ensure_dir(directory)
        save_checkpoint(self.encoder, directory / "encoder.ckpt")
        save_vocab(self.vocab, directory / "vocab.json")
        if self.tgt_vocab is not None:
            save_vocab(self.tgt_vocab, directory / "tgt_vocab.json")
        save_json(
            directory / "reranker.json",
            {"src_lang": self.src_lang.value, "tgt_lang": self.tgt_lang.value},
        )

    @classmethod
    def load(cls, directory: Path) -> "Reranker":
        meta = load_json(directory / "reranker.json")
        vocab = load_vocab(directory / "vocab.json")
        encoder = load_checkpoint(directory / "encoder.ckpt", expected_vocab_hashes=(vocab.content_hash,))
        if not isinstance(encoder, RerankEncoder):
            raise CorruptCheckpoint(f"{directory} does not hold a re-ranking encoder")
        tgt_path = directory / "tgt_vocab.json"
        tgt_vocab = load_vocab(tgt_path) if tgt_path.exists() else None
        return cls(encoder, vocab, Lang(meta["src_lang"]), Lang(meta["tgt_lang"]), tgt_vocab)


def _cosine(a: torch.Tensor, b: torch.Tensor) -> torch.Tensor:
    norm_a = torch.linalg.vector_norm(a, dim=-1)
    norm_b = torch.linalg.vector_norm(b, dim=-1)
    if bool((norm_a == 0).any()) or bool((norm_b == 0).any()):
        raise ZeroVector("contrastive similarity of a zero vector")
    return (a * b).sum(-1) / (norm_a * norm_b)


def contrastive_loss(b: ContrastiveBatch) -> torch.Tensor:
    """
    -log(e^{s+/tau} / (e^{s+/tau} + sum_j e^{s-_j/tau})) with s = cosine to h_x.

    Batched inputs return the mean over the batch.
    """
    positive = _cosine(b.h_x, b.h_pos) / b.tau
    negative = _cosine(b.h_x.unsqueeze(-2), b.h_negs) / b.tau
    logits = torch.cat([positive.unsqueeze(-1), negative], dim=-1)
    loss = torch.logsumexp(logits, dim=-1) - positive
    return loss.mean() if loss.dim() else loss


def _tokens(text: TextLike, lang: Lang) -> List[str]:
    if isinstance(text, Sentence):
        return tokenize(text, tokenizer_mode_for(text.lang))
    if isinstance(text, str):
        return tokenize(text, tokenizer_mode_for(lang))
    return list(text)


def build_joint_vocab(pairs: Sequence[Tuple[Sentence, Sentence]]) -> Vocabulary:
    corpus = [_tokens(src, src.lang) for src, _ in pairs] + [_tokens(tgt, tgt.lang) for _, tgt in pairs]
    return build_vocab(corpus)


def encode_pair(reranker: Reranker, src: TextLike, cand: TextLike) -> Tuple[List[int], List[int]]:
    # each side gets half of the encoder length, minus BOS/EOS/EOS
    limit = (reranker.encoder.hyper.max_len - 3) // 2
    src_ids = encode(_tokens(src, reranker.src_lang), reranker.vocab)[:limit]
    cand_ids = encode(_tokens(cand, reranker.tgt_lang), reranker.vocab)[:limit]
    return pair_input(src_ids, cand_ids)


def _embed_many(reranker: Reranker, inputs: Sequence[Tuple[List[int], List[int]]]) -> torch.Tensor:
    ids = pad_batch([i for i, _ in inputs])
    segments = pad_batch([s for _, s in inputs])
    return reranker.encoder(ids, segments)


def embed(reranker: Reranker, src: TextLike, cand: TextLike) -> torch.Tensor:
    """Projection-head vector [d_proj] for the (src, cand) pair."""
    with torch.no_grad():
        return _embed_many(reranker, [encode_pair(reranker, src, cand)])[0]


def init_from_translator(reranker: Reranker, translator: Translator) -> int:
    """Copy the translator's token embeddings into the joint table where dims agree."""
    table = reranker.encoder.token_embed.weight
    copied = 0
    sources = (
        (translator.src_vocab, translator.model.src_embed.weight),
        (translator.tgt_vocab, translator.model.tgt_embed.weight),
    )
    with torch.no_grad():
        for vocab, weights in sources:
            if weights.size(1) != table.size(1):
                continue
            for token, joint_id in reranker.vocab.index.items():
                if joint_id in SPECIAL_IDS or token not in vocab:
                    continue
                table[joint_id] = weights[vocab.index[token]].to(table.dtype)
                copied += 1
    logger.debug("Initialized %d reranker embedding rows from the translator", copied)
    return copied


def corrupt_tokens(tokens: Sequence[str], rng: np.random.Generator, pool: Sequence[str]) -> List[str]:
    """Replace, drop or swap one token."""
    out = list(tokens)
    if not out:
        return [pool[int(rng.integers(len(pool)))]] if pool else []
    op = int(rng.integers(3))
    i = int(rng.integers(len(out)))
    if op == 0 and pool:
        out[i] = pool[int(rng.integers(len(pool)))]
    elif op == 1 and len(out) > 1:
        del out[i]
    elif len(out) > 1:
        j = (i + 1) % len(out)
        out[i], out[j] = out[j], out[i]
    elif pool:
        out.append(pool[int(rng.integers(len(pool)))])
    return out


def mine_negatives(
    translator: Translator,
    src: Sentence,
    ref: Sentence,
    cfg: Optional[DecodeConfig] = None,
    n: int = 4,
    seed: int = 0,
) -> List[Sentence]:
    """
    Top n diverse-beam outputs that differ from ref, padded with corrupted
    copies of ref when fewer survive. Returned negatives are pairwise distinct.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    mode = tokenizer_mode_for(translator.tgt_lang)
    ref_tokens = tokenize(ref, mode)
    seen = {tuple(ref_tokens)}
    negatives: List[Sentence] = []
    for hyp in translator.nbest(src, "diverse", cfg=cfg):
        tokens = decode(hyp.ids, translator.tgt_vocab)
        if tuple(tokens) in seen:
            continue
        seen.add(tuple(tokens))
        negatives.append(Sentence(detokenize(tokens, mode), translator.tgt_lang))
        if len(negatives) == n:
            return negatives

    rng = np.random.default_rng(seed)
    pool = [t for i, t in enumerate(translator.tgt_vocab.tokens) if i not in SPECIAL_IDS]
    attempts = 0
    while len(negatives) < n:
        attempts += 1
        if attempts <= 50 * n:
            tokens = corrupt_tokens(ref_tokens, rng, pool)
        else:
            # lengthening always yields an unseen sequence
            tokens = ref_tokens + [pool[0] if pool else "<unk>"] * (attempts - 50 * n)
        if tuple(tokens) in seen:
            continue
        seen.add(tuple(tokens))
        negatives.append(Sentence(detokenize(tokens, mode), translator.tgt_lang))
    return negatives


def new_reranker(vocab: Vocabulary, src_lang: Lang, tgt_lang: Lang, cfg: RerankConfig, max_len: int) -> Reranker:
    hyper = RerankHyper(
        vocab_size=len(vocab),
        d_model=cfg.d_model,
        heads=cfg.heads,
        d_ff=cfg.d_ff,
        layers=cfg.layers,
        d_proj=cfg.d_proj,
        max_len=max_len,
    )
    encoder = RerankEncoder(hyper, seed=cfg.seed, vocab_hashes=(vocab.content_hash,))
    return Reranker(encoder, vocab, Lang(src_lang), Lang(tgt_lang))


def fit_reranker(reranker: Reranker, triples: Sequence[Triple], cfg: RerankConfig) -> List[float]:
    """Minimize the contrastive loss over the triples; returns mean loss per epoch."""
    if not triples or cfg.epochs == 0:
        return []
    n = len(triples[0].negatives)
    if any(len(t.negatives) != n for t in triples) or n == 0:
        raise DataError("every triple needs the same, non-zero number of negatives")
    encoder = reranker.encoder
    steps_per_epoch = math.ceil(len(triples) / cfg.batch_size)
    train_cfg = TrainConfig(
        batch_size=cfg.batch_size,
        epochs=cfg.epochs,
        lr_init=max(cfg.lr_body, cfg.lr_head, cfg.lr_min),
        lr_min=cfg.lr_min,
        weight_decay=cfg.weight_decay,
        warmup_epochs=0,
        grad_clip=cfg.grad_clip,
        seed=cfg.seed,
    )
    state = OptimizerState(
        [
            (encoder.body_parameters(), cfg.lr_body, min(cfg.lr_min, cfg.lr_body)),
            (encoder.head_parameters(), cfg.lr_head, min(cfg.lr_min, cfg.lr_head)),
        ],
        train_cfg,
        total_steps=steps_per_epoch * cfg.epochs,
    )
    generator = torch.Generator().manual_seed(cfg.seed)
    encoded = [
        (
            encode_pair(reranker, t.src, t.src),
            encode_pair(reranker, t.src, t.ref),
            [encode_pair(reranker, t.src, neg) for neg in t.negatives],
        )
        for t in triples
    ]
    history: List[float] = []
    encoder.train()
    for epoch in range(cfg.epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            chunk = [encoded[i] for i in order[start : start + cfg.batch_size]]
            inputs = [x for x, _, _ in chunk] + [p for _, p, _ in chunk]
            inputs += [neg for _, _, negs in chunk for neg in negs]
            vectors = _embed_many(reranker, inputs)
            size = len(chunk)
            batch = ContrastiveBatch(
                h_x=vectors[:size],
                h_pos=vectors[size : 2 * size],
                h_negs=vectors[2 * size :].view(size, n, -1),
                tau=cfg.tau,
            )
            loss = contrastive_loss(batch)
            value = float(loss.detach())
            if not math.isfinite(value):
                raise NonFiniteLoss(state.step, value, stage="rerank")
            state.apply_lr()
            state.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            if cfg.grad_clip > 0:
                nn.utils.clip_grad_norm_(encoder.parameters(), cfg.grad_clip)
            state.optimizer.step()
            state.step += 1
            losses.append(value)
        history.append(math.fsum(losses) / len(losses))
        logger.info("Reranker epoch %d/%d: contrastive loss %.4f", epoch + 1, cfg.epochs, history[-1])
    encoder.eval()
    return history


def build_triples(
    pairs: Sequence[Tuple[Sentence, Sentence]],
    translator: Translator,
    cfg: RerankConfig,
    decode_cfg: Optional[DecodeConfig] = None,
) -> List[Triple]:
    return [
        Triple(src, ref, tuple(mine_negatives(translator, src, ref, decode_cfg, cfg.negatives, seed=cfg.seed + i)))
        for i, (src, ref) in enumerate(pairs)
    ]


def train_reranker(
    pairs: Sequence[Tuple[Sentence, Sentence]],
    translator: Translator,
    cfg: Optional[RerankConfig] = None,
    decode_cfg: Optional[DecodeConfig] = None,
    history: Optional[List[float]] = None,
) -> Reranker:
    """Mine negatives with the trained translator, then fit the scoring encoder."""
    cfg = cfg or RerankConfig()
    if not pairs:
        raise EmptyCorpus("re-ranker training needs at least one pair")
    vocab = build_joint_vocab(pairs)
    reranker = new_reranker(
        vocab, translator.src_lang, translator.tgt_lang, cfg, max_len=2 * translator.model.max_len + 1
    )
    reranker.tgt_vocab = translator.tgt_vocab
    init_from_translator(reranker, translator)
    triples = build_triples(pairs, translator, cfg, decode_cfg)
    logger.info("Training reranker on %d triples (1:%d)", len(triples), cfg.negatives)
    losses = fit_reranker(reranker, triples, cfg)
    if history is not None:
        history.extend(losses)
    return reranker


def candidate_text(reranker: Reranker, hyp: Hypothesis) -> str:
    """The candidate's text, detokenized from its ids when it has none."""
    if hyp.text is not None:
        return hyp.text
    if reranker.tgt_vocab is None:
        raise DataError("candidate has no text and the reranker carries no target vocabulary")
    return detokenize(decode(hyp.ids, reranker.tgt_vocab), tokenizer_mode_for(reranker.tgt_lang))


def rerank(reranker: Reranker, src: TextLike, candidates: Sequence[Hypothesis]) -> List[Hypothesis]:
    """Candidates re-scored by cosine confidence, best first; ties keep the input order."""
    if not candidates:
        raise EmptyCandidates("nothing to re-rank")
    texts = [candidate_text(reranker, h) for h in candidates]
    with torch.no_grad():
        anchor_input = encode_pair(reranker, src, src)
        inputs = [anchor_input] + [encode_pair(reranker, src, text) for text in texts]
        vectors = _embed_many(reranker, inputs)
        scores = _cosine(vectors[:1], vectors[1:]).tolist()
    rescored = [dataclasses.replace(h, score=float(s), text=t) for h, s, t in zip(candidates, scores, texts)]
    return sorted(rescored, key=lambda h: -h.score)


def contrastive_eval(reranker: Reranker, triples: Sequence[Triple], tau: float) -> float:
    """Mean contrastive loss over held-out triples."""
    if not triples:
        raise EmptyCorpus("no triples to evaluate")
    values = []
    with torch.no_grad():
        for t in triples:
            inputs = [encode_pair(reranker, t.src, t.src), encode_pair(reranker, t.src, t.ref)]
            inputs += [encode_pair(reranker, t.src, neg) for neg in t.negatives]
            vectors = _embed_many(reranker, inputs)
            values.append(float(contrastive_loss(ContrastiveBatch(vectors[0], vectors[1], vectors[2:], tau))))
    return math.fsum(values) / len(values)
