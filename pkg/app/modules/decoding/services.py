"""
Beam search and diverse (group Hamming) beam search.

Decoders only need a scorer: any object with
    next_logprobs(src_ids, prefixes) -> Tensor [len(prefixes), V]
and optionally a `max_len` attribute. Seq2SeqModel provides this, and so do
the fixed-logit stubs used in tests.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import torch
from pydantic import BaseModel, Field

from app.core.errors import ConfigError
from app.modules.textproc.vocab import BOS, EOS, PAD

logger = logging.getLogger(__name__)


class Scorer(Protocol):
    def next_logprobs(self, src_ids: Sequence[int], prefixes: Sequence[Sequence[int]]) -> torch.Tensor:
        ...


class DecodeConfig(BaseModel):
    beam: int = Field(8, ge=1, description="Width of plain beam search")
    groups: int = Field(4, ge=1, description="Groups of diverse beam search")
    beam_per_group: int = Field(2, ge=1)
    lambda_div: float = Field(0.5, ge=0, description="Hamming diversity strength")
    max_len: int = Field(64, ge=2, description="Longest hypothesis, BOS/EOS included")
    length_norm: float = Field(0.6, ge=0, description="Exponent of the length normalization")


@dataclass
class Hypothesis:
    ids: List[int]
    logprob: float
    group: int = 0
    score: Optional[float] = None
    text: Optional[str] = None

    @property
    def length(self) -> int:
        """Generated tokens (BOS excluded)."""
        return max(1, len(self.ids) - 1)

    def normalized(self, length_norm: float) -> float:
        return self.logprob / (self.length**length_norm)

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {
            "ids": list(self.ids),
            "logprob": self.logprob,
            "group": self.group,
            "score": self.score,
            "text": self.text,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hypothesis":
        return cls(
            ids=[int(i) for i in data["ids"]],
            logprob=float(data["logprob"]),
            group=int(data.get("group", 0)),
            score=data.get("score"),
            text=data.get("text"),
        )


def _effective_max_len(scorer: Scorer, cfg: DecodeConfig) -> int:
    return min(cfg.max_len, getattr(scorer, "max_len", cfg.max_len))


def _search_groups(
    scorer: Scorer,
    src: Sequence[int],
    groups: int,
    width: int,
    lambda_div: float,
    max_len: int,
    length_norm: float,
) -> List[Hypothesis]:
    """
    Groups advance in lockstep. At each step group g selects on
        logprob - lambda_div * (times token t was chosen at this step by groups < g)
    while each hypothesis keeps its true model log-probability.
    Candidates tie-break by (beam index, token id). A finished candidate uses up a slot.
    """
    src = list(src)
    alive: List[List[Tuple[List[int], float]]] = [[([BOS], 0.0)] for _ in range(groups)]
    finished: List[List[Hypothesis]] = [[] for _ in range(groups)]

    for _ in range(max_len - 1):
        if not any(alive):
            break
        emitted: Optional[torch.Tensor] = None
        for g in range(groups):
            if not alive[g]:
                continue
            logprobs = scorer.next_logprobs(src, [ids for ids, _ in alive[g]]).double().clone()
            logprobs[:, PAD] = -math.inf
            logprobs[:, BOS] = -math.inf
            if emitted is None:
                emitted = torch.zeros(logprobs.size(1), dtype=torch.float64)

            candidates = []
            for b, (ids, score) in enumerate(alive[g]):
                totals = score + logprobs[b]
                selection = totals - lambda_div * emitted if lambda_div else totals
                order = torch.sort(selection, descending=True, stable=True).indices[:width]
                for t in order.tolist():
                    sel = float(selection[t])
                    if not math.isfinite(sel):
                        continue
                    candidates.append((-sel, b, t, float(totals[t])))
            candidates.sort()

            survivors = []
            for _, b, t, total in candidates[:width]:
                ids = alive[g][b][0] + [t]
                emitted[t] += 1
                if t == EOS or len(ids) >= max_len:
                    finished[g].append(Hypothesis(ids=ids, logprob=total, group=g))
                else:
                    survivors.append((ids, total))
            alive[g] = survivors

    results: List[Hypothesis] = []
    for g in range(groups):
        ranked = sorted(finished[g], key=lambda h: -h.normalized(length_norm))
        results.extend(ranked[:width])
    return sorted(results, key=lambda h: -h.normalized(length_norm))


def beam_search(scorer: Scorer, src: Sequence[int], cfg: Optional[DecodeConfig] = None) -> List[Hypothesis]:
    """At most cfg.beam hypotheses, best length-normalized log-probability first."""
    cfg = cfg or DecodeConfig()
    return _search_groups(
        scorer,
        src,
        groups=1,
        width=cfg.beam,
        lambda_div=0.0,
        max_len=_effective_max_len(scorer, cfg),
        length_norm=cfg.length_norm,
    )


def diverse_beam_search(
    scorer: Scorer, src: Sequence[int], cfg: Optional[DecodeConfig] = None
) -> List[Hypothesis]:
    """groups x beam_per_group hypotheses labelled with their group, best first."""
    cfg = cfg or DecodeConfig()
    if cfg.beam != cfg.groups * cfg.beam_per_group:
        raise ConfigError(
            f"diverse decoding needs beam == groups x beam_per_group "
            f"({cfg.beam} != {cfg.groups} x {cfg.beam_per_group})"
        )
    hyps = _search_groups(
        scorer,
        src,
        groups=cfg.groups,
        width=cfg.beam_per_group,
        lambda_div=cfg.lambda_div,
        max_len=_effective_max_len(scorer, cfg),
        length_norm=cfg.length_norm,
    )
    logger.debug("Diverse search produced %d hypotheses in %d groups", len(hyps), cfg.groups)
    return hyps


def dedup_candidates(hyps: Sequence[Hypothesis]) -> List[Hypothesis]:
    """Drop repeated id sequences, keeping the highest-logprob copy where it stood."""
    best: Dict[Tuple[int, ...], int] = {}
    for i, h in enumerate(hyps):
        key = tuple(h.ids)
        if key not in best or h.logprob > hyps[best[key]].logprob:
            best[key] = i
    keep = set(best.values())
    return [h for i, h in enumerate(hyps) if i in keep]
