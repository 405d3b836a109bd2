from .router import router
from .services import (
    DecodeConfig,
    Hypothesis,
    Scorer,
    beam_search,
    dedup_candidates,
    diverse_beam_search,
)
from .translator import Translator

__all__ = [
    "DecodeConfig",
    "Hypothesis",
    "Scorer",
    "Translator",
    "beam_search",
    "dedup_candidates",
    "diverse_beam_search",
    "router",
]
