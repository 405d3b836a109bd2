"""
Bilingual curriculum: related-language pairs first, then short task pairs in
ascending source length, then long texts spliced from the short ones.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch.nn as nn
from pydantic import BaseModel, Field

from app.core.artifacts import append_jsonl, ensure_dir
from app.core.errors import EmptyStage, EmptyTaskData, NonFiniteLoss
from app.modules.losses import LossFn
from app.modules.nnet import OptimizerState, TrainConfig, fit, save_checkpoint
from app.modules.textproc import SEP_TOKEN, Vocabulary, encode

logger = logging.getLogger(__name__)

StageName = Literal["family", "short", "long"]
STAGE_ORDER: Tuple[str, ...] = ("family", "short", "long")
METRICS_FILE = "stage_metrics.jsonl"

TokenPair = Tuple[List[str], List[str]]


class CurriculumConfig(BaseModel):
    short_threshold: int = Field(24, ge=1, description="Longest source (tokens) admitted to the short stage")
    target_len: int = Field(48, ge=1, description="Source length at which a spliced group is closed")
    family_epochs: int = Field(2, ge=0)
    short_epochs: int = Field(4, ge=0)
    long_epochs: int = Field(2, ge=0)
    separator: str = Field(SEP_TOKEN, description="Token placed between spliced sentences")
    shuffle_long: bool = False
    seed: int = 0


@dataclass
class CurriculumStage:
    name: StageName
    data: List[TokenPair]
    epochs: int
    order_key: str
    shuffle: bool = False


@dataclass
class StageMetrics:
    stage: str
    epoch: int
    loss: Optional[float]
    step: int
    dev_bleu: Optional[float] = None

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {
            "stage": self.stage,
            "epoch": self.epoch,
            "loss": self.loss,
            "step": self.step,
            "dev_bleu": self.dev_bleu,
        }


def concat_long_texts(
    pairs: Sequence[TokenPair],
    target_len: int,
    seed: int = 0,
    separator: str = SEP_TOKEN,
    shuffle: bool = False,
    max_tokens: Optional[int] = None,
) -> List[TokenPair]:
    """
    Greedily join consecutive pairs (one separator between segments on each
    side) until the source reaches target_len, then start a new group.
    With max_tokens, a group is also closed before a join would take either
    side past it. The seed is only used when shuffle=True.
    """
    items = [(list(s), list(t)) for s, t in pairs]
    if shuffle:
        order = np.random.default_rng(seed).permutation(len(items))
        items = [items[int(i)] for i in order]
    groups: List[TokenPair] = []
    src_acc: List[str] = []
    tgt_acc: List[str] = []
    open_group = False
    for src, tgt in items:
        if open_group and max_tokens is not None:
            if max(len(src_acc) + 1 + len(src), len(tgt_acc) + 1 + len(tgt)) > max_tokens:
                groups.append((src_acc, tgt_acc))
                open_group = False
        if open_group:
            src_acc += [separator] + src
            tgt_acc += [separator] + tgt
        else:
            src_acc, tgt_acc, open_group = list(src), list(tgt), True
        if len(src_acc) >= target_len:
            groups.append((src_acc, tgt_acc))
            open_group = False
    if open_group:
        groups.append((src_acc, tgt_acc))
    return groups


def build_schedule(
    family_pairs: Sequence[TokenPair],
    task_pairs: Sequence[TokenPair],
    cfg: Optional[CurriculumConfig] = None,
    max_len: Optional[int] = None,
) -> List[CurriculumStage]:
    """
    Family, short and long stages. With max_len (the model's, BOS/EOS
    included) no spliced group is longer than the model accepts.
    """
    cfg = cfg or CurriculumConfig()
    if not task_pairs:
        raise EmptyTaskData("curriculum needs task pairs")
    stages: List[CurriculumStage] = []
    if family_pairs:
        stages.append(
            CurriculumStage(
                "family",
                [(list(s), list(t)) for s, t in family_pairs],
                cfg.family_epochs,
                "shuffled",
                shuffle=True,
            )
        )
    else:
        logger.warning("No related-language pairs; the family stage is skipped")

    short = sorted(
        ((list(s), list(t)) for s, t in task_pairs if len(s) <= cfg.short_threshold),
        key=lambda pair: len(pair[0]),
    )
    if not short:
        raise EmptyStage(f"no task pair has a source of at most {cfg.short_threshold} tokens")
    stages.append(CurriculumStage("short", short, cfg.short_epochs, "source length ascending"))

    max_tokens = max_len - 2 if max_len is not None else None
    spliced = concat_long_texts(short, cfg.target_len, cfg.seed, cfg.separator, cfg.shuffle_long, max_tokens)
    stages.append(CurriculumStage("long", spliced, cfg.long_epochs, "spliced groups in short-stage order"))
    logger.info(
        "Curriculum: %s",
        ", ".join(f"{s.name}={len(s.data)} pairs x {s.epochs} epochs" for s in stages),
    )
    return stages


def encode_stage(
    data: Sequence[TokenPair], src_vocab: Vocabulary, tgt_vocab: Vocabulary, max_len: int
) -> List[Tuple[List[int], List[int]]]:
    """BOS/EOS-wrapped ids; pairs that would exceed max_len are dropped with a warning."""
    encoded, dropped = [], 0
    for src, tgt in data:
        if len(src) + 2 > max_len or len(tgt) + 2 > max_len:
            dropped += 1
            continue
        encoded.append((encode(src, src_vocab, True), encode(tgt, tgt_vocab, True)))
    if dropped:
        logger.warning("Dropped %d of %d pairs longer than max_len=%d", dropped, len(data), max_len)
    return encoded


def run_curriculum(
    model: nn.Module,
    schedule: Sequence[CurriculumStage],
    train_cfg: TrainConfig,
    loss_fn: LossFn,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    dev_bleu: Optional[Callable[[nn.Module], float]] = None,
    out_dir: Optional[Path] = None,
) -> Tuple[nn.Module, List[StageMetrics]]:
    """
    Train stage by stage in the fixed order, carrying parameters forward under
    one warm-up + cosine schedule. Writes stage_metrics.jsonl and one checkpoint
    per stage when out_dir is given.
    """
    ranks = [STAGE_ORDER.index(s.name) for s in schedule]
    if ranks != sorted(ranks):
        raise ValueError("curriculum stages must run family -> short -> long")

    encoded = [encode_stage(s.data, src_vocab, tgt_vocab, model.max_len) for s in schedule]
    steps = [math.ceil(len(data) / train_cfg.batch_size) * s.epochs for s, data in zip(schedule, encoded)]
    first = next((i for i, n in enumerate(steps) if n), None)
    warmup = 0
    if first is not None:
        warmup = min(train_cfg.warmup_epochs, schedule[first].epochs) * math.ceil(
            len(encoded[first]) / train_cfg.batch_size
        )
    state = OptimizerState.for_model(model, train_cfg, total_steps=sum(steps), warmup_steps=warmup)

    if out_dir is not None:
        ensure_dir(out_dir)
        (out_dir / METRICS_FILE).write_text("", encoding="utf-8")

    metrics: List[StageMetrics] = []
    for index, (stage, data) in enumerate(zip(schedule, encoded)):
        logger.info("Stage %d (%s): %d pairs, %d epochs", index + 1, stage.name, len(data), stage.epochs)
        stage_metrics: List[StageMetrics] = []

        def record(epoch: int, loss: float, step: int, stage_name: str = stage.name) -> None:
            stage_metrics.append(StageMetrics(stage_name, epoch + 1, loss, step))

        try:
            fit(
                model,
                data,
                train_cfg,
                loss_fn,
                state=state,
                epochs=stage.epochs,
                shuffle=stage.shuffle,
                seed=train_cfg.seed + index,
                on_epoch=record,
            )
        except NonFiniteLoss as exc:
            raise exc.with_stage(stage.name) from exc

        bleu = dev_bleu(model) if dev_bleu is not None else None
        if stage_metrics:
            stage_metrics[-1].dev_bleu = bleu
        else:
            stage_metrics.append(StageMetrics(stage.name, 0, None, state.step, bleu))
        if bleu is not None:
            logger.info("Stage %s: dev BLEU %.2f", stage.name, bleu)
        metrics.extend(stage_metrics)

        if out_dir is not None:
            for m in stage_metrics:
                append_jsonl(out_dir / METRICS_FILE, m.to_serializable_dict())
            save_checkpoint(model, out_dir / f"stage_{index + 1}_{stage.name}.ckpt")
    return model, metrics
