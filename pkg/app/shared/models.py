"""
Shared models used across modules
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from enum import Enum


class Lang(str, Enum):
    """Language tags known to the toolkit."""

    ZH = "zh"
    MS = "ms"
    ID = "id"
    SYNTHETIC = "synthetic"


class TokenizerMode(str, Enum):
    WORD = "word"
    CHAR = "char"


def tokenizer_mode_for(lang: Lang | str) -> TokenizerMode:
    """Chinese is scored (and trained) per character, everything else per word."""
    return TokenizerMode.CHAR if Lang(lang) is Lang.ZH else TokenizerMode.WORD


@dataclass(frozen=True)
class Sentence:
    """A normalized sentence with its language tag."""

    text: str
    lang: Lang = Lang.SYNTHETIC

    def __post_init__(self) -> None:
        # accept plain strings for lang
        object.__setattr__(self, "lang", Lang(self.lang))
        if any(unicodedata.category(ch) == "Cc" for ch in self.text):
            raise ValueError(f"Sentence contains raw control characters: {self.text!r}")

    @property
    def mode(self) -> TokenizerMode:
        return tokenizer_mode_for(self.lang)
