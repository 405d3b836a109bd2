"""
Training and evaluation services for the translation model.

fit() runs epochs of padded batches through train_step(); the optimizer is
AdamW with decoupled weight decay, driven by a linear warm-up followed by a
cosine decay from lr_init to lr_min (per parameter group).
"""

from __future__ import annotations

import bisect
import copy
import hashlib
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
from pydantic import BaseModel, Field, model_validator

from app.core.errors import NonFiniteLoss, ShapeMismatch
from app.modules.losses import LossFn
from app.modules.textproc.vocab import PAD

logger = logging.getLogger(__name__)

# denominator floor of the grad_check relative error
GRAD_CHECK_FLOOR = 1e-8

IdPair = Tuple[Sequence[int], Sequence[int]]


class TrainConfig(BaseModel):
    batch_size: int = Field(16, ge=1)
    epochs: int = Field(8, ge=0)
    lr_init: float = Field(1e-4, ge=0)
    lr_min: float = Field(1e-5, ge=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.98, ge=0, lt=1)
    eps: float = Field(1e-9, gt=0)
    weight_decay: float = Field(0.01, ge=0)
    warmup_epochs: int = Field(1, ge=0)
    grad_clip: float = Field(1.0, ge=0, description="Max global gradient norm; 0 disables clipping")
    seed: int = 0

    @model_validator(mode="after")
    def _lr_order(self) -> "TrainConfig":
        if self.lr_min > self.lr_init:
            raise ValueError("lr_min must be <= lr_init")
        return self


@dataclass
class Batch:
    """Padded id tensors; tgt carries BOS ... EOS."""

    src: torch.Tensor
    tgt: torch.Tensor
    index: int = 0

    @property
    def size(self) -> int:
        return self.src.size(0)


def pad_batch(sequences: Sequence[Sequence[int]]) -> torch.Tensor:
    width = max(len(s) for s in sequences)
    out = torch.full((len(sequences), width), PAD, dtype=torch.long)
    for row, seq in enumerate(sequences):
        out[row, : len(seq)] = torch.tensor(list(seq), dtype=torch.long)
    return out


def make_batches(
    pairs: Sequence[IdPair],
    batch_size: int,
    order: Optional[Sequence[int]] = None,
    start_index: int = 0,
) -> List[Batch]:
    order = list(range(len(pairs))) if order is None else list(order)
    batches = []
    for n, start in enumerate(range(0, len(order), batch_size)):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        batches.append(
            Batch(
                src=pad_batch([src for src, _ in chunk]),
                tgt=pad_batch([tgt for _, tgt in chunk]),
                index=start_index + n,
            )
        )
    return batches


def lr_at(step: int, total_steps: int, warmup_steps: int, lr_init: float, lr_min: float) -> float:
    """Linear warm-up to lr_init, then cosine decay to lr_min at total_steps."""
    if warmup_steps and step < warmup_steps:
        return lr_init * (step + 1) / warmup_steps
    decay_steps = max(1, total_steps - warmup_steps)
    progress = min(1.0, (step - warmup_steps) / decay_steps)
    return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + math.cos(math.pi * progress))


class OptimizerState:
    """AdamW plus the learning-rate schedule of each parameter group."""

    def __init__(
        self,
        groups: Sequence[Tuple[Iterable[nn.Parameter], float, float]],
        cfg: TrainConfig,
        total_steps: int,
        warmup_steps: int = 0,
    ) -> None:
        self.optimizer = torch.optim.AdamW(
            [{"params": list(params), "lr": lr_init} for params, lr_init, _ in groups],
            betas=(cfg.beta1, cfg.beta2),
            eps=cfg.eps,
            weight_decay=cfg.weight_decay,
        )
        self.schedule = [(lr_init, lr_min) for _, lr_init, lr_min in groups]
        self.total_steps = max(1, total_steps)
        self.warmup_steps = warmup_steps
        self.step = 0

    @classmethod
    def for_model(
        cls, model: nn.Module, cfg: TrainConfig, total_steps: int, warmup_steps: int = 0
    ) -> "OptimizerState":
        return cls([(model.parameters(), cfg.lr_init, cfg.lr_min)], cfg, total_steps, warmup_steps)

    def current_lrs(self) -> List[float]:
        return [
            lr_at(self.step, self.total_steps, self.warmup_steps, hi, lo) for hi, lo in self.schedule
        ]

    def apply_lr(self) -> None:
        for group, lr in zip(self.optimizer.param_groups, self.current_lrs()):
            group["lr"] = lr


def forward(model: nn.Module, src: torch.Tensor, tgt_in: torch.Tensor) -> torch.Tensor:
    return model(src, tgt_in)


def train_step(
    model: nn.Module,
    batch: Batch,
    loss_fn: LossFn,
    state: OptimizerState,
    cfg: TrainConfig,
) -> float:
    """One update; returns the pre-step loss. Non-finite losses abort before any update."""
    model.train()
    logits = model(batch.src, batch.tgt[:, :-1])
    loss = loss_fn(logits, batch.tgt[:, 1:])
    value = float(loss.detach())
    if not math.isfinite(value):
        raise NonFiniteLoss(batch.index, value)
    state.apply_lr()
    state.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    if cfg.grad_clip > 0:
        nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
    if any(group["lr"] > 0 for group in state.optimizer.param_groups):
        state.optimizer.step()
    state.step += 1
    return value


def fit(
    model: nn.Module,
    pairs: Sequence[IdPair],
    cfg: TrainConfig,
    loss_fn: LossFn,
    state: Optional[OptimizerState] = None,
    epochs: Optional[int] = None,
    shuffle: bool = True,
    seed: Optional[int] = None,
    on_epoch: Optional[Callable[[int, float, int], None]] = None,
) -> List[float]:
    """
    Train for `epochs` (default cfg.epochs) and return the mean loss of each epoch.

    With shuffle=False the batches follow the given pair order every epoch.
    on_epoch(epoch, mean_loss, optimizer_step) is called after each epoch.
    """
    epochs = cfg.epochs if epochs is None else epochs
    if not pairs or epochs == 0:
        return []
    steps_per_epoch = math.ceil(len(pairs) / cfg.batch_size)
    if state is None:
        state = OptimizerState.for_model(
            model,
            cfg,
            total_steps=steps_per_epoch * epochs,
            warmup_steps=min(cfg.warmup_epochs, epochs) * steps_per_epoch,
        )
    generator = torch.Generator().manual_seed(cfg.seed if seed is None else seed)
    history: List[float] = []
    batch_index = 0
    for epoch in range(epochs):
        order = torch.randperm(len(pairs), generator=generator).tolist() if shuffle else None
        batches = make_batches(pairs, cfg.batch_size, order, start_index=batch_index)
        batch_index += len(batches)
        losses = [train_step(model, batch, loss_fn, state, cfg) for batch in batches]
        mean_loss = math.fsum(losses) / len(losses)
        history.append(mean_loss)
        logger.info(
            "Epoch %d/%d: loss %.4f (step %d, lr %.2e)",
            epoch + 1,
            epochs,
            mean_loss,
            state.step,
            state.optimizer.param_groups[0]["lr"],
        )
        if on_epoch is not None:
            on_epoch(epoch, mean_loss, state.step)
    return history


def _as_batch(ids) -> torch.Tensor:
    if torch.is_tensor(ids):
        tensor = ids.long()
    elif ids and isinstance(ids[0], (list, tuple)):
        tensor = pad_batch(ids)
    else:
        tensor = torch.tensor(list(ids), dtype=torch.long)
    return tensor.unsqueeze(0) if tensor.dim() == 1 else tensor


def log_likelihood(model: nn.Module, src, tgt) -> torch.Tensor:
    """
    sum_t log p(tgt_t | tgt_<t, src) per sequence, PAD targets excluded.

    Accepts single sequences or batches; always returns a float64 vector [batch].
    """
    src, tgt = _as_batch(src), _as_batch(tgt)
    if src.size(0) != tgt.size(0):
        raise ShapeMismatch("src and tgt batch sizes differ")
    if tgt.size(1) < 2:
        return torch.zeros(tgt.size(0), dtype=torch.float64)
    logits = model(src, tgt[:, :-1])
    logprobs = torch.log_softmax(logits, dim=-1).double()
    gold = tgt[:, 1:]
    picked = logprobs.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    return picked.masked_fill(gold.eq(PAD), 0.0).sum(-1)


def grad_check(
    model: nn.Module,
    batch: Batch,
    loss_fn: LossFn,
    eps: float = 1e-4,
    samples: int = 200,
    seed: int = 0,
) -> float:
    """
    Max relative error between autograd and central differences over a random
    sample of parameters:

        |analytic - numeric| / max(1e-8, |analytic| + |numeric|)

    The numeric side is the five-point central stencil with step `eps`. Runs
    on a float64 copy; the model is not modified.
    """
    twin = copy.deepcopy(model).double()
    twin.zero_grad(set_to_none=True)

    def objective() -> torch.Tensor:
        return loss_fn(twin(batch.src, batch.tgt[:, :-1]), batch.tgt[:, 1:])

    loss = objective()
    if loss.requires_grad:
        loss.backward()

    params = [p for p in twin.parameters() if p.requires_grad]
    offsets = [0]
    for p in params:
        offsets.append(offsets[-1] + p.numel())
    total = offsets[-1]
    generator = torch.Generator().manual_seed(seed)
    picks = torch.randperm(total, generator=generator)[: min(samples, total)].tolist()

    def shifted(values: torch.Tensor, local: int, original: float, step: float) -> float:
        values[local] = original + step
        return float(objective())

    worst = 0.0
    with torch.no_grad():
        for flat_index in picks:
            which = bisect.bisect_right(offsets, flat_index) - 1
            param = params[which]
            local = flat_index - offsets[which]
            values = param.view(-1)
            original = values[local].item()
            analytic = param.grad.view(-1)[local].item() if param.grad is not None else 0.0
            f = [shifted(values, local, original, k * eps) for k in (-2, -1, 1, 2)]
            values[local] = original
            numeric = (f[0] - 8 * f[1] + 8 * f[2] - f[3]) / (12 * eps)
            error = abs(analytic - numeric) / max(GRAD_CHECK_FLOOR, abs(analytic) + abs(numeric))
            worst = max(worst, error)
    logger.debug("grad_check over %d parameters: max relative error %.3e", len(picks), worst)
    return worst


def parameter_checksum(model: nn.Module) -> str:
    """SHA-256 over every parameter and buffer, in state_dict order."""
    digest = hashlib.sha256()
    for name, tensor in model.state_dict().items():
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()
