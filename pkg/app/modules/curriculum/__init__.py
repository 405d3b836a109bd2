from .backtranslate import (
    BacktransConfig,
    ExternalProvider,
    InternalProvider,
    SyntheticPair,
    TranslationProvider,
    back_translate,
    sample_monolingual,
)
from .services import (
    STAGE_ORDER,
    CurriculumConfig,
    CurriculumStage,
    StageMetrics,
    build_schedule,
    concat_long_texts,
    encode_stage,
    run_curriculum,
)

__all__ = [
    "STAGE_ORDER",
    "BacktransConfig",
    "CurriculumConfig",
    "CurriculumStage",
    "ExternalProvider",
    "InternalProvider",
    "StageMetrics",
    "SyntheticPair",
    "TranslationProvider",
    "back_translate",
    "build_schedule",
    "concat_long_texts",
    "encode_stage",
    "run_curriculum",
    "sample_monolingual",
]
