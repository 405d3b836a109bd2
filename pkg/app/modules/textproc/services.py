"""
Text normalization and tokenization.

Mirrors the competition's preprocessing: XML entity handling, full-width to
half-width folding of the GB2312 A3 area, traditional-to-simplified
conversion for Chinese, and word/char tokenization for scoring.
"""

from __future__ import annotations

import logging
import re
import unicodedata
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Literal, Mapping, Optional, Sequence, Tuple

from app.config import settings
from app.core.errors import MissingTable
from app.shared.models import Lang, Sentence, TokenizerMode

logger = logging.getLogger(__name__)

# "&amp;", "&amp" and runs like "&amp;amp;" collapse to one "&"
_AMP_DECODE = re.compile(r"&(?:amp;?)+")
# "&" that does not already start "&amp;"
_AMP_ENCODE = re.compile(r"&(?!amp;)")
_WHITESPACE = re.compile(r"\s+")

FULLWIDTH_FIRST = 0xFF01
FULLWIDTH_LAST = 0xFF5E
FULLWIDTH_OFFSET = 0xFEE0
IDEOGRAPHIC_SPACE = 0x3000

TokenPair = Tuple[List[str], List[str]]


def normalize_entities(text: str, direction: Literal["decode", "encode"] = "decode") -> str:
    """
    decode: "&amp;" and "&amp" become "&", nested runs included.
    encode: every bare "&" becomes "&amp;" (existing "&amp;" is left alone).
    """
    if direction == "decode":
        return _AMP_DECODE.sub("&", text)
    if direction == "encode":
        return _AMP_ENCODE.sub("&amp;", text)
    raise ValueError(f"Unknown entity direction: {direction}")


def to_halfwidth(text: str) -> str:
    """Fold U+FF01..U+FF5E and the ideographic space to their ASCII forms."""
    chars = []
    for ch in text:
        code = ord(ch)
        if code == IDEOGRAPHIC_SPACE:
            code = 0x20
        elif FULLWIDTH_FIRST <= code <= FULLWIDTH_LAST:
            code -= FULLWIDTH_OFFSET
        chars.append(chr(code))
    return "".join(chars)


def load_simplification_table(path: Optional[Path] = None) -> Dict[str, str]:
    """
    Load a TRAD<TAB>SIMP mapping file ('#' starts a comment line).

    Raises MissingTable when the file is absent or unreadable.
    """
    return dict(_load_table_cached(str(path or settings.SIMPLIFICATION_TABLE)))


@lru_cache(maxsize=8)
def _load_table_cached(path: str) -> Tuple[Tuple[str, str], ...]:
    table: Dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 2 or len(parts[0]) != 1 or len(parts[1]) != 1:
                    logger.warning("Skipping malformed mapping line %d in %s", lineno, path)
                    continue
                table[parts[0]] = parts[1]
    except (OSError, UnicodeDecodeError) as exc:
        raise MissingTable(f"cannot load simplification table {path}: {exc}") from exc
    logger.debug("Loaded %d simplification pairs from %s", len(table), path)
    return tuple(table.items())


def traditional_to_simplified(text: str, table: Optional[Mapping[str, str]] = None) -> str:
    """Per-code-point conversion; characters missing from the table pass through."""
    if table is None:
        table = load_simplification_table()
    return "".join(table.get(ch, ch) for ch in text)


def clean_control_chars(text: str) -> str:
    """Tabs and line breaks become spaces, other control characters are dropped."""
    out = []
    for ch in text:
        if ch in "\t\n\r":
            out.append(" ")
        elif unicodedata.category(ch) != "Cc":
            out.append(ch)
    return _WHITESPACE.sub(" ", "".join(out)).strip()


def normalize_text(
    text: str, lang: Lang | str, table: Optional[Mapping[str, str]] = None
) -> str:
    """Full preprocessing chain applied to every corpus line."""
    text = clean_control_chars(normalize_entities(text, "decode"))
    if Lang(lang) is Lang.ZH:
        text = traditional_to_simplified(to_halfwidth(text), table)
    return text


def tokenize(s: Sentence | str, mode: TokenizerMode | str) -> List[str]:
    """
    word: split on Unicode whitespace, case preserved.
    char: one token per non-whitespace code point.
    """
    text = s.text if isinstance(s, Sentence) else s
    if TokenizerMode(mode) is TokenizerMode.WORD:
        return text.split()
    return [ch for ch in text if not ch.isspace()]


def detokenize(tokens: Sequence[str], mode: TokenizerMode | str) -> str:
    joiner = " " if TokenizerMode(mode) is TokenizerMode.WORD else ""
    return joiner.join(tokens)


def clean_parallel(
    pairs: Sequence[TokenPair],
    max_ratio: float = 3.0,
    max_len: Optional[int] = None,
) -> Tuple[List[TokenPair], int]:
    """
    Drop pairs with an empty side, exact duplicates, pairs whose length ratio
    exceeds max_ratio and (optionally) pairs longer than max_len on either side.
    """
    kept: List[TokenPair] = []
    seen = set()
    dropped = 0
    for src, tgt in pairs:
        key = (tuple(src), tuple(tgt))
        too_long = max_len is not None and (len(src) > max_len or len(tgt) > max_len)
        if (
            not src
            or not tgt
            or key in seen
            or too_long
            or max(len(src), len(tgt)) / min(len(src), len(tgt)) > max_ratio
        ):
            dropped += 1
            continue
        seen.add(key)
        kept.append((list(src), list(tgt)))
    if dropped:
        logger.info("Cleaning dropped %d of %d pairs", dropped, len(pairs))
    return kept, dropped
