"""
Per-token training losses.

cross_entropy, dce and in_trust take a probability distribution over the
target vocabulary (last dimension) and a class id, and return one value per
position. token_loss() turns a LossConfig into the batch loss used by the
trainer: logits in, mean over non-PAD positions out.
"""

from __future__ import annotations

import logging
from typing import Callable, Literal

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from app.core.errors import InvalidDistribution
from app.modules.textproc.vocab import PAD

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12
SUM_TOLERANCE = 1e-6

LossFn = Callable[[torch.Tensor, torch.Tensor], torch.Tensor]


class InTrustParams(BaseModel):
    alpha: float = Field(1.0, ge=0, description="Weight of the cross-entropy term")
    beta: float = Field(1.0, ge=0, description="Weight of the DCE term")
    delta: float = Field(0.5, gt=0, le=1, description="Trust placed in the model's own prediction")

    @model_validator(mode="after")
    def _some_weight(self) -> "InTrustParams":
        if self.alpha + self.beta <= 0:
            raise ValueError("alpha + beta must be > 0")
        return self


class LossConfig(BaseModel):
    name: Literal["ce", "in_trust", "label_smoothing"] = "in_trust"
    in_trust: InTrustParams = Field(default_factory=InTrustParams)
    label_smoothing: float = Field(0.1, ge=0, lt=1)


def _as_inputs(probs, label):
    probs = torch.as_tensor(probs, dtype=torch.float64) if not torch.is_tensor(probs) else probs
    label = torch.as_tensor(label, dtype=torch.long)
    if label.shape != probs.shape[:-1]:
        raise InvalidDistribution(
            f"label shape {tuple(label.shape)} does not match probs {tuple(probs.shape)}"
        )
    if label.numel() and (int(label.min()) < 0 or int(label.max()) >= probs.size(-1)):
        raise InvalidDistribution(f"label outside [0, {probs.size(-1)})")
    return probs, label


def check_distribution(probs: torch.Tensor) -> None:
    with torch.no_grad():
        if not torch.isfinite(probs).all() or (probs < 0).any():
            raise InvalidDistribution("probabilities must be finite and non-negative")
        if ((probs.sum(-1) - 1.0).abs() > SUM_TOLERANCE).any():
            raise InvalidDistribution("probabilities must sum to 1")


def _one_hot(label: torch.Tensor, num_classes: int, like: torch.Tensor) -> torch.Tensor:
    return F.one_hot(label, num_classes).to(like.dtype)


def cross_entropy(probs, label, validate: bool = True) -> torch.Tensor:
    """-log p[label], with p clamped to >= 1e-12."""
    probs, label = _as_inputs(probs, label)
    if validate:
        check_distribution(probs)
    picked = probs.gather(-1, label.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp_min(PROB_FLOOR))


def dce(probs, label, delta: float, validate: bool = True) -> torch.Tensor:
    """-sum_i p_i * log(delta * p_i + (1 - delta) * q_i), q the one-hot label."""
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    probs, label = _as_inputs(probs, label)
    if validate:
        check_distribution(probs)
    q = _one_hot(label, probs.size(-1), probs)
    mixture = (delta * probs + (1.0 - delta) * q).clamp_min(PROB_FLOOR)
    return -(probs * torch.log(mixture)).sum(-1)


def in_trust(probs, label, params: InTrustParams | None = None, validate: bool = True) -> torch.Tensor:
    params = params or InTrustParams()
    return params.alpha * cross_entropy(probs, label, validate) + params.beta * dce(
        probs, label, params.delta, validate
    )


def label_smoothed_cross_entropy(probs, label, epsilon: float, validate: bool = True) -> torch.Tensor:
    """(1 - eps) * CE + eps * mean_i(-log p_i)."""
    probs, label = _as_inputs(probs, label)
    if validate:
        check_distribution(probs)
    smooth = -torch.log(probs.clamp_min(PROB_FLOOR)).mean(-1)
    return (1.0 - epsilon) * cross_entropy(probs, label, validate=False) + epsilon * smooth


def token_loss(cfg: LossConfig | None = None) -> LossFn:
    """Batch loss over logits [B, T, V] and gold ids [B, T]; PAD positions are ignored."""
    cfg = cfg or LossConfig()

    def per_token(probs: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        if cfg.name == "ce":
            return cross_entropy(probs, targets, validate=False)
        if cfg.name == "in_trust":
            return in_trust(probs, targets, cfg.in_trust, validate=False)
        return label_smoothed_cross_entropy(probs, targets, cfg.label_smoothing, validate=False)

    def loss_fn(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
        probs = torch.softmax(logits, dim=-1)
        mask = targets.ne(PAD)
        count = int(mask.sum())
        if count == 0:
            return logits.sum() * 0.0
        values = per_token(probs, targets)
        return torch.where(mask, values, torch.zeros_like(values)).sum() / count

    loss_fn.__name__ = f"{cfg.name}_loss"
    return loss_fn
