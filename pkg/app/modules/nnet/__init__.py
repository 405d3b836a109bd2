from .checkpoint import load_checkpoint, register_model_kind, save_checkpoint
from .model import (
    DecoderLayer,
    EncoderLayer,
    ModelHyper,
    Seq2SeqModel,
    reset_parameters,
    sinusoidal_positions,
)
from .services import (
    Batch,
    OptimizerState,
    TrainConfig,
    fit,
    forward,
    grad_check,
    log_likelihood,
    lr_at,
    make_batches,
    pad_batch,
    parameter_checksum,
    train_step,
)

__all__ = [
    "Batch",
    "DecoderLayer",
    "EncoderLayer",
    "ModelHyper",
    "OptimizerState",
    "Seq2SeqModel",
    "TrainConfig",
    "fit",
    "forward",
    "grad_check",
    "load_checkpoint",
    "log_likelihood",
    "lr_at",
    "make_batches",
    "pad_batch",
    "parameter_checksum",
    "register_model_kind",
    "reset_parameters",
    "save_checkpoint",
    "sinusoidal_positions",
    "train_step",
]
