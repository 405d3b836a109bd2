"""
Deterministic synthetic zh/ms/id task.

Every language renders the same concept sequences:
  - zh is the pivot, one CJK ideograph per concept with no spaces;
  - ms is a lexical mapping to invented words, with modifiers moved after
    the concept they precede in zh;
  - id is a sibling of ms that keeps most of its words.

The four directions zh-ms, ms-zh, zh-id and id-zh are written as TSV files,
so a generated task runs through exactly the same loaders as real corpora.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from app.core.artifacts import ensure_dir
from app.modules.textproc import load_simplification_table
from app.shared.models import Lang

from .config import DirectionConfig, SyntheticTaskConfig

logger = logging.getLogger(__name__)

CJK_FIRST = 0x4E00
CONSONANTS = "bdgkmnprst"
VOWELS = "aiu"
# every MODIFIER_EVERY-th concept is a modifier
MODIFIER_EVERY = 4

Concepts = List[int]


@dataclass
class Lexicon:
    zh: List[str]
    ms: List[str]
    id: List[str]
    traditional: Dict[str, str] = field(default_factory=dict)

    def is_modifier(self, concept: int) -> bool:
        return concept % MODIFIER_EVERY == MODIFIER_EVERY - 1

    def words(self, lang: Lang) -> List[str]:
        return {Lang.ZH: self.zh, Lang.MS: self.ms, Lang.ID: self.id}[Lang(lang)]


@dataclass
class SyntheticTask:
    lexicon: Lexicon
    # corpus -> split -> concept sequences; corpora are "ms" and "id"
    splits: Dict[str, Dict[str, List[Concepts]]]
    mono: Dict[Lang, List[Concepts]]


def _pivot_characters(count: int) -> Tuple[List[str], Dict[str, str]]:
    """Simplified characters with a traditional variant first, then plain ideographs."""
    table = load_simplification_table()
    inverse: Dict[str, str] = {}
    for trad, simp in sorted(table.items()):
        if simp not in table:
            inverse.setdefault(simp, trad)
    used = set(table) | set(table.values())
    chars = sorted(inverse)[:count]
    code = CJK_FIRST
    while len(chars) < count:
        ch = chr(code)
        if ch not in used:
            chars.append(ch)
        code += 1
    return chars, {ch: inverse[ch] for ch in chars if ch in inverse}


def _invent_words(count: int, rng: np.random.Generator) -> List[str]:
    syllables = [c + v for c in CONSONANTS for v in VOWELS]
    words: List[str] = []
    seen = set()
    while len(words) < count:
        n = int(rng.integers(2, 4))
        word = "".join(syllables[int(i)] for i in rng.integers(len(syllables), size=n))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def _sibling_word(word: str, rng: np.random.Generator) -> str:
    """A regular sound change: one vowel shifted, or a final -h added."""
    positions = [i for i, ch in enumerate(word) if ch in VOWELS]
    if positions and rng.random() < 0.7:
        i = positions[int(rng.integers(len(positions)))]
        shifted = VOWELS[(VOWELS.index(word[i]) + 1) % len(VOWELS)]
        return word[:i] + shifted + word[i + 1 :]
    return word + "h"


def build_lexicon(cfg: SyntheticTaskConfig) -> Lexicon:
    rng = np.random.default_rng(cfg.seed)
    zh, traditional = _pivot_characters(cfg.concepts)
    ms = _invent_words(cfg.concepts, rng)
    taken = set(ms)
    sibling = []
    for word in ms:
        candidate = word
        if rng.random() >= cfg.sibling_overlap:
            candidate = _sibling_word(word, rng)
            while candidate in taken:
                candidate += "h"
        taken.add(candidate)
        sibling.append(candidate)
    return Lexicon(zh=zh, ms=ms, id=sibling, traditional=traditional)


def sample_concepts(cfg: SyntheticTaskConfig, n: int, rng: np.random.Generator) -> List[Concepts]:
    ranks = np.arange(1, cfg.concepts + 1, dtype=np.float64)
    weights = ranks ** -cfg.zipf
    weights /= weights.sum()
    out = []
    for _ in range(n):
        length = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        out.append([int(c) for c in rng.choice(cfg.concepts, size=length, p=weights)])
    return out


def render(concepts: Sequence[int], lang: Lang, lexicon: Lexicon) -> List[str]:
    """Tokens of a concept sequence in one language."""
    words = lexicon.words(lang)
    if Lang(lang) is Lang.ZH:
        return [words[c] for c in concepts]
    order = list(concepts)
    i = 0
    while i < len(order) - 1:
        if lexicon.is_modifier(order[i]) and not lexicon.is_modifier(order[i + 1]):
            order[i], order[i + 1] = order[i + 1], order[i]
            i += 2
        else:
            i += 1
    return [words[c] for c in order]


def to_text(tokens: Sequence[str], lang: Lang) -> str:
    return "".join(tokens) if Lang(lang) is Lang.ZH else " ".join(tokens)


def inject_traditional(tokens: Sequence[str], lexicon: Lexicon, rate: float, rng: np.random.Generator) -> List[str]:
    if rate <= 0:
        return list(tokens)
    return [
        lexicon.traditional[t] if t in lexicon.traditional and rng.random() < rate else t
        for t in tokens
    ]


def inject_noise(tokens: Sequence[str], vocabulary: Sequence[str], rate: float, rng: np.random.Generator) -> List[str]:
    """Replace each token with a random vocabulary word with probability `rate`."""
    if rate <= 0:
        return list(tokens)
    return [
        vocabulary[int(rng.integers(len(vocabulary)))] if rng.random() < rate else t for t in tokens
    ]


def generate_task(cfg: SyntheticTaskConfig) -> SyntheticTask:
    lexicon = build_lexicon(cfg)
    rng = np.random.default_rng(cfg.seed + 1)
    splits: Dict[str, Dict[str, List[Concepts]]] = {}
    for corpus in ("ms", "id"):
        splits[corpus] = {
            "train": sample_concepts(cfg, cfg.train_pairs, rng),
            "dev": sample_concepts(cfg, cfg.dev_pairs, rng),
            "test": sample_concepts(cfg, cfg.test_pairs, rng),
        }
    mono = {lang: sample_concepts(cfg, cfg.mono_size, rng) for lang in (Lang.ZH, Lang.MS, Lang.ID)}
    return SyntheticTask(lexicon=lexicon, splits=splits, mono=mono)


def _line(concepts: Concepts, lang: Lang, task: SyntheticTask, cfg: SyntheticTaskConfig, rng, noisy: bool) -> str:
    tokens = render(concepts, lang, task.lexicon)
    if noisy:
        tokens = inject_noise(tokens, task.lexicon.words(lang), cfg.noise_rate, rng)
    if lang is Lang.ZH:
        tokens = inject_traditional(tokens, task.lexicon, cfg.traditional_rate, rng)
    return to_text(tokens, lang)


def _write_pairs(path: Path, rows: Sequence[Tuple[str, str]]) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for src, tgt in rows:
            f.write(f"{src}\t{tgt}\n")


def write_task(task: SyntheticTask, cfg: SyntheticTaskConfig, out_dir: Path) -> List[DirectionConfig]:
    """
    Write train/dev/test/family TSVs and the monolingual target file of each
    direction under out_dir/<src>-<tgt>/. Noise only touches training targets.
    """
    rng = np.random.default_rng(cfg.seed + 2)
    sibling = {Lang.MS: Lang.ID, Lang.ID: Lang.MS}
    directions: List[DirectionConfig] = []
    for other in (Lang.MS, Lang.ID):
        for src, tgt in ((Lang.ZH, other), (other, Lang.ZH)):
            folder = ensure_dir(out_dir / f"{src.value}-{tgt.value}")
            paths: Dict[str, Path] = {}
            for split in ("train", "dev", "test"):
                sequences = task.splits[other.value][split]
                if not sequences:
                    continue
                rows = [
                    (
                        _line(c, src, task, cfg, rng, noisy=False),
                        _line(c, tgt, task, cfg, rng, noisy=split == "train"),
                    )
                    for c in sequences
                ]
                paths[split] = folder / f"{split}.tsv"
                _write_pairs(paths[split], rows)

            # the sibling language's task data, same side as this direction's non-pivot language
            fam_src, fam_tgt = (src, sibling[tgt]) if src is Lang.ZH else (sibling[src], tgt)
            family_rows = [
                (
                    _line(c, fam_src, task, cfg, rng, noisy=False),
                    _line(c, fam_tgt, task, cfg, rng, noisy=True),
                )
                for c in task.splits[sibling[other].value]["train"]
            ]
            paths["family"] = folder / "family.tsv"
            _write_pairs(paths["family"], family_rows)

            if task.mono[tgt]:
                paths["mono"] = folder / "mono.txt"
                with paths["mono"].open("w", encoding="utf-8", newline="\n") as f:
                    for c in task.mono[tgt]:
                        f.write(_line(c, tgt, task, cfg, rng, noisy=False) + "\n")

            directions.append(
                DirectionConfig(src_lang=src, tgt_lang=tgt, family_lang=sibling[other], **paths)
            )
    logger.info("Wrote synthetic task (%d concepts) for %d directions to %s", cfg.concepts, len(directions), out_dir)
    return directions
