"""
Vocabulary construction and id encoding.

Specials always occupy ids 0-3 (PAD, BOS, EOS, UNK); reserved tokens such as
the curriculum separator follow them; corpus tokens come after, ordered by
frequency then lexicographically.
"""

from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence, Tuple

from app.core.artifacts import load_json, save_json
from app.core.errors import DataError, EmptyCorpus, InvalidId

logger = logging.getLogger(__name__)

PAD, BOS, EOS, UNK = 0, 1, 2, 3
PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN = "<pad>", "<s>", "</s>", "<unk>"
SPECIAL_TOKENS: Tuple[str, ...] = (PAD_TOKEN, BOS_TOKEN, EOS_TOKEN, UNK_TOKEN)
SPECIAL_IDS = frozenset({PAD, BOS, EOS, UNK})
SEP_TOKEN = "<sep>"


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token <-> id mapping."""

    tokens: Tuple[str, ...]
    index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise DataError("vocabulary must start with the special tokens")
        index = {token: i for i, token in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: object) -> bool:
        return token in self.index

    @property
    def specials(self) -> Dict[str, int]:
        return {"pad": PAD, "bos": BOS, "eos": EOS, "unk": UNK}

    @property
    def content_hash(self) -> str:
        """SHA-256 over the ordered token list."""
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()

    def id_of(self, token: str) -> int:
        return self.index.get(token, UNK)

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {"tokens": list(self.tokens), "hash": self.content_hash}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Vocabulary":
        vocab = cls(tuple(data["tokens"]))
        expected = data.get("hash")
        if expected and expected != vocab.content_hash:
            raise DataError("vocabulary hash does not match its token list")
        return vocab


def build_vocab(
    corpus: Iterable[Sequence[str]],
    min_count: int = 1,
    max_size: int = 50_000,
    reserved: Sequence[str] = (),
) -> Vocabulary:
    """
    Keep tokens seen at least min_count times, ordered by (frequency desc,
    token asc), truncated so the whole vocabulary has at most max_size entries.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    head = list(SPECIAL_TOKENS) + [t for t in reserved if t not in SPECIAL_TOKENS]
    if max_size < len(head) + 1:
        raise ValueError(f"max_size must be >= {len(head) + 1}")

    counts = Counter(token for sentence in corpus for token in sentence)
    qualifying = sorted(
        (t for t, c in counts.items() if c >= min_count and t not in head),
        key=lambda t: (-counts[t], t),
    )
    if not qualifying:
        raise EmptyCorpus(f"no token reaches min_count={min_count}")
    kept = qualifying[: max_size - len(head)]
    logger.debug("Built vocabulary of %d tokens (%d qualifying)", len(head) + len(kept), len(qualifying))
    return Vocabulary(tuple(head + kept))


def encode(tokens: Sequence[str], vocab: Vocabulary, add_bos_eos: bool = False) -> List[int]:
    ids = [vocab.id_of(t) for t in tokens]
    if add_bos_eos:
        ids = [BOS] + ids + [EOS]
    return ids


def decode(ids: Iterable[int], vocab: Vocabulary) -> List[str]:
    """Ids back to tokens, specials stripped."""
    tokens = []
    size = len(vocab)
    for i in ids:
        i = int(i)
        if i < 0 or i >= size:
            raise InvalidId(f"id {i} outside vocabulary of size {size}")
        if i in SPECIAL_IDS:
            continue
        tokens.append(vocab.tokens[i])
    return tokens


def save_vocab(vocab: Vocabulary, path: Path) -> None:
    save_json(path, vocab.to_serializable_dict())


def load_vocab(path: Path) -> Vocabulary:
    return Vocabulary.from_dict(load_json(path))
