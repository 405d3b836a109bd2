from .ablation import COMPARISONS, RUNGS, comparison_configs, rung_configs, run_ablation, run_comparison
from .config import (
    DirectionConfig,
    ExperimentConfig,
    ModelDims,
    SyntheticTaskConfig,
    load_config,
    parse_overrides,
)
from .services import (
    DirectionData,
    DirectionResult,
    decode_split,
    hypotheses_from_candidates,
    load_monolingual,
    load_parallel_tsv,
    prepare_direction,
    read_submission,
    report_metrics,
    resolve_directions,
    run_direction,
    run_pipeline,
    score_split,
    train_translator,
    write_submission,
)
from .synthetic import build_lexicon, generate_task, render, write_task

__all__ = [
    "COMPARISONS",
    "RUNGS",
    "DirectionConfig",
    "DirectionData",
    "DirectionResult",
    "ExperimentConfig",
    "ModelDims",
    "SyntheticTaskConfig",
    "build_lexicon",
    "comparison_configs",
    "decode_split",
    "generate_task",
    "hypotheses_from_candidates",
    "load_config",
    "load_monolingual",
    "load_parallel_tsv",
    "parse_overrides",
    "prepare_direction",
    "read_submission",
    "render",
    "report_metrics",
    "resolve_directions",
    "rung_configs",
    "run_ablation",
    "run_comparison",
    "run_direction",
    "run_pipeline",
    "score_split",
    "train_translator",
    "write_submission",
    "write_task",
]
