"""
Competition BLEU.

Clipped n-gram precisions are kept as exact integers/rationals; floating
point only enters when the geometric mean and brevity penalty are assembled.
Corpus scores sum the per-sentence statistics before assembling.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Iterable, List, Sequence, Tuple, Union

from app.core.errors import DegenerateInput, EmptyCorpus, WrongArity
from app.modules.textproc import normalize_entities, to_halfwidth, tokenize
from app.shared.models import Sentence, TokenizerMode

logger = logging.getLogger(__name__)

TextLike = Union[Sentence, str, Sequence[str]]

LEADERBOARD_DIRECTIONS = 4


@dataclass(frozen=True)
class BleuConfig:
    max_n: int = 4
    weights: Tuple[Fraction, ...] = (Fraction(1, 4),) * 4
    tokenizer_mode: TokenizerMode = TokenizerMode.WORD
    scale: float = 100.0

    def __post_init__(self) -> None:
        weights = tuple(Fraction(w) for w in self.weights)
        if self.max_n < 1:
            raise ValueError("max_n must be >= 1")
        if len(weights) != self.max_n:
            raise ValueError(f"expected {self.max_n} weights, got {len(weights)}")
        if sum(weights) != 1:
            raise ValueError("BLEU weights must sum to 1")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "tokenizer_mode", TokenizerMode(self.tokenizer_mode))

    @classmethod
    def uniform(cls, max_n: int = 4, **kwargs: Any) -> "BleuConfig":
        return cls(max_n=max_n, weights=(Fraction(1, max_n),) * max_n, **kwargs)


@dataclass(frozen=True)
class BleuStats:
    """Sufficient statistics; corpus BLEU is assembled from their sum."""

    matches: Tuple[int, ...]
    totals: Tuple[int, ...]
    hyp_len: int
    ref_len: int

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats(
            matches=tuple(a + b for a, b in zip(self.matches, other.matches)),
            totals=tuple(a + b for a, b in zip(self.totals, other.totals)),
            hyp_len=self.hyp_len + other.hyp_len,
            ref_len=self.ref_len + other.ref_len,
        )


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    precisions: Tuple[Fraction, ...]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: Tuple[int, ...] = field(default=())
    totals: Tuple[int, ...] = field(default=())

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {
            "bleu": format_score(self.bleu),
            "bleu_raw": self.bleu,
            "precisions": [float(p) for p in self.precisions],
            "brevity_penalty": self.brevity_penalty,
            "hyp_len": self.hyp_len,
            "ref_len": self.ref_len,
            "matches": list(self.matches),
            "totals": list(self.totals),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BleuReport":
        matches = tuple(data.get("matches", ()))
        totals = tuple(data.get("totals", ()))
        if matches and totals:
            precisions = tuple(Fraction(m, t) if t else Fraction(0) for m, t in zip(matches, totals))
        else:
            precisions = tuple(Fraction(p) for p in data.get("precisions", ()))
        return cls(
            bleu=float(data.get("bleu_raw", data["bleu"])),
            precisions=precisions,
            brevity_penalty=float(data["brevity_penalty"]),
            hyp_len=int(data["hyp_len"]),
            ref_len=int(data["ref_len"]),
            matches=matches,
            totals=totals,
        )


def format_score(value: float) -> float:
    """Two decimals, as on the leaderboard."""
    return round(value, 2)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    if n < 1:
        raise ValueError("n must be >= 1")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped(hyp: Sequence[str], ref: Sequence[str], n: int) -> Tuple[int, int]:
    hyp_counts = ngram_counts(hyp, n)
    ref_counts = ngram_counts(ref, n)
    matches = sum(min(count, ref_counts[gram]) for gram, count in hyp_counts.items())
    return matches, sum(hyp_counts.values())


def modified_precision(hyp: Sequence[str], ref: Sequence[str], n: int) -> Fraction:
    """Hypothesis n-gram counts clipped by the reference, over hypothesis n-grams."""
    matches, total = _clipped(hyp, ref, n)
    return Fraction(matches, total) if total else Fraction(0)


def brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len < 0 or ref_len < 0:
        raise ValueError("lengths must be non-negative")
    if hyp_len > ref_len or hyp_len == ref_len:
        return 1.0
    if hyp_len == 0:
        raise DegenerateInput(f"empty hypothesis against reference of length {ref_len}")
    return math.exp(1.0 - ref_len / hyp_len)


def prepare_tokens(text: TextLike, mode: TokenizerMode | str) -> List[str]:
    """Free text is entity-decoded (and width-folded in char mode) before tokenizing."""
    if isinstance(text, (Sentence, str)):
        raw = text.text if isinstance(text, Sentence) else text
        raw = normalize_entities(raw, "decode")
        if TokenizerMode(mode) is TokenizerMode.CHAR:
            raw = to_halfwidth(raw)
        return tokenize(raw, mode)
    return list(text)


def bleu_stats(hyp: Sequence[str], ref: Sequence[str], max_n: int) -> BleuStats:
    matches, totals = zip(*(_clipped(hyp, ref, n) for n in range(1, max_n + 1)))
    return BleuStats(tuple(matches), tuple(totals), len(hyp), len(ref))


def report_from_stats(stats: BleuStats, cfg: BleuConfig) -> BleuReport:
    precisions = tuple(
        Fraction(m, t) if t else Fraction(0) for m, t in zip(stats.matches, stats.totals)
    )
    try:
        bp = brevity_penalty(stats.hyp_len, stats.ref_len)
    except DegenerateInput:
        logger.debug("Degenerate input (empty hypothesis); BLEU is 0")
        bp = 0.0
    if bp == 0.0 or any(p == 0 for p in precisions):
        bleu = 0.0
    else:
        log_mean = math.fsum(float(w) * math.log(p) for w, p in zip(cfg.weights, precisions))
        bleu = cfg.scale * bp * math.exp(log_mean)
    return BleuReport(
        bleu=min(bleu, cfg.scale),
        precisions=precisions,
        brevity_penalty=bp,
        hyp_len=stats.hyp_len,
        ref_len=stats.ref_len,
        matches=stats.matches,
        totals=stats.totals,
    )


def sentence_bleu(hyp: TextLike, ref: TextLike, cfg: BleuConfig | None = None) -> BleuReport:
    cfg = cfg or BleuConfig()
    stats = bleu_stats(
        prepare_tokens(hyp, cfg.tokenizer_mode), prepare_tokens(ref, cfg.tokenizer_mode), cfg.max_n
    )
    return report_from_stats(stats, cfg)


def corpus_bleu(pairs: Iterable[Tuple[TextLike, TextLike]], cfg: BleuConfig | None = None) -> BleuReport:
    cfg = cfg or BleuConfig()
    total: BleuStats | None = None
    for hyp, ref in pairs:
        stats = bleu_stats(
            prepare_tokens(hyp, cfg.tokenizer_mode),
            prepare_tokens(ref, cfg.tokenizer_mode),
            cfg.max_n,
        )
        total = stats if total is None else total + stats
    if total is None:
        raise EmptyCorpus("corpus_bleu needs at least one pair")
    return report_from_stats(total, cfg)


def leaderboard_average(reports: Sequence[Union[BleuReport, float]]) -> float:
    """Mean of the four unidirectional BLEU scores used for the final ranking."""
    if len(reports) != LEADERBOARD_DIRECTIONS:
        raise WrongArity(f"expected {LEADERBOARD_DIRECTIONS} reports, got {len(reports)}")
    values = [r.bleu if isinstance(r, BleuReport) else float(r) for r in reports]
    return math.fsum(values) / LEADERBOARD_DIRECTIONS
