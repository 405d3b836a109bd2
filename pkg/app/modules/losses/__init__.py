from .services import (
    PROB_FLOOR,
    InTrustParams,
    LossConfig,
    LossFn,
    check_distribution,
    cross_entropy,
    dce,
    in_trust,
    label_smoothed_cross_entropy,
    token_loss,
)

__all__ = [
    "PROB_FLOOR",
    "InTrustParams",
    "LossConfig",
    "LossFn",
    "check_distribution",
    "cross_entropy",
    "dce",
    "in_trust",
    "label_smoothed_cross_entropy",
    "token_loss",
]
