"""
Back-translation of monolingual target text into synthetic sources.

Providers implement translate(text, src_lang, tgt_lang) -> str. The internal
provider wraps a reverse-direction Translator; the external one speaks

    POST /translate  {"src_lang", "tgt_lang", "text"} -> {"text"}
"""

from __future__ import annotations

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Protocol, Sequence, Union

import httpx
import numpy as np
from pydantic import BaseModel, Field

from app.core.errors import DataError, LabError, ProviderUnavailable
from app.modules.decoding import Translator
from app.modules.textproc import detokenize, normalize_text, tokenize
from app.shared.models import Lang, Sentence

logger = logging.getLogger(__name__)


class BacktransConfig(BaseModel):
    provider: Literal["internal", "external"] = "internal"
    sample_size: int = Field(1000, ge=0, description="Monolingual sentences to back-translate")
    max_len: int = Field(64, ge=2, description="Longest monolingual sentence (tokens) considered")
    seed: int = 0
    endpoint: str = Field("http://127.0.0.1:8000/translate", description="External provider URL")
    timeout: float = Field(10.0, gt=0, description="Seconds per HTTP request")
    retries: int = Field(3, ge=0, description="Extra attempts per sentence")
    workers: int = Field(1, ge=1, description="Sentences translated concurrently")


class TranslationProvider(Protocol):
    def translate(self, text: str, src_lang: str, tgt_lang: str) -> str:
        ...


@dataclass(frozen=True)
class SyntheticPair:
    src: Sentence
    tgt: Sentence
    synthetic: bool = True

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {
            "src": self.src.text,
            "tgt": self.tgt.text,
            "src_lang": self.src.lang.value,
            "tgt_lang": self.tgt.lang.value,
            "synthetic": self.synthetic,
        }


class InternalProvider:
    """Uses the toolkit's own reverse-direction model."""

    def __init__(self, translator: Translator) -> None:
        self.translator = translator

    def translate(self, text: str, src_lang: str, tgt_lang: str) -> str:
        if Lang(src_lang) is not self.translator.src_lang or Lang(tgt_lang) is not self.translator.tgt_lang:
            raise DataError(
                f"internal provider serves {self.translator.direction}, not {src_lang}-{tgt_lang}"
            )
        return self.translator.translate(text)


class ExternalProvider:
    """HTTP translation provider with per-sentence retries."""

    MAX_CONSECUTIVE_ERRORS: int = 5

    def __init__(
        self,
        endpoint: str,
        timeout: float = 10.0,
        retries: int = 3,
        client: Optional[httpx.Client] = None,
    ) -> None:
        self.endpoint = endpoint
        self.timeout = timeout
        self.retries = retries
        self.consecutive_errors: int = 0
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()

    @property
    def is_down(self) -> bool:
        return self.consecutive_errors >= self.MAX_CONSECUTIVE_ERRORS

    def translate(self, text: str, src_lang: str, tgt_lang: str) -> str:
        payload = {"src_lang": str(src_lang), "tgt_lang": str(tgt_lang), "text": text}
        last_error: Optional[Exception] = None
        for attempt in range(self.retries + 1):
            try:
                response = self._client.post(self.endpoint, json=payload, timeout=self.timeout)
                response.raise_for_status()
                result = response.json()["text"]
            except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
                last_error = exc
                logger.warning(
                    "Provider request failed (attempt %d/%d): %s", attempt + 1, self.retries + 1, exc
                )
                continue
            with self._lock:
                self.consecutive_errors = 0
            return str(result)
        with self._lock:
            self.consecutive_errors += 1
        raise ProviderUnavailable(f"{self.endpoint} failed after {self.retries + 1} attempts: {last_error}")

    def close(self) -> None:
        self._client.close()


def _clip(sentence: Sentence, max_len: int) -> Sentence:
    tokens = tokenize(sentence, sentence.mode)
    if len(tokens) <= max_len:
        return sentence
    return Sentence(detokenize(tokens[:max_len], sentence.mode), sentence.lang)


def sample_monolingual(mono: Sequence[Sentence], sample_size: int, seed: int) -> List[Sentence]:
    """A seeded subset of min(sample_size, len(mono)) sentences, in corpus order."""
    if sample_size >= len(mono):
        return list(mono)
    picks = np.random.default_rng(seed).choice(len(mono), size=sample_size, replace=False)
    return [mono[int(i)] for i in sorted(picks)]


def back_translate(
    provider: Union[TranslationProvider, Translator],
    mono: Sequence[Sentence],
    cfg: Optional[BacktransConfig] = None,
    source_lang: Optional[Lang] = None,
    stats: Optional[Dict[str, int]] = None,
) -> List[SyntheticPair]:
    """
    Decode each sampled target sentence into a synthetic source.

    Sentences the provider fails on are skipped and counted in stats["skipped"];
    ProviderUnavailable propagates once an external provider looks down.
    """
    cfg = cfg or BacktransConfig()
    if isinstance(provider, Translator):
        source_lang = source_lang or provider.tgt_lang
        provider = InternalProvider(provider)
    if source_lang is None:
        raise DataError("source_lang is required for external providers")
    source_lang = Lang(source_lang)

    sample = [_clip(s, cfg.max_len) for s in sample_monolingual(mono, cfg.sample_size, cfg.seed)]

    def translate_one(sentence: Sentence) -> Optional[str]:
        try:
            return provider.translate(sentence.text, sentence.lang.value, source_lang.value)
        except ProviderUnavailable:
            if getattr(provider, "is_down", False):
                raise
            logger.warning("Skipping sentence the provider could not translate", exc_info=True)
        except (LabError, ValueError):
            logger.warning("Skipping sentence that failed to back-translate", exc_info=True)
        return None

    if cfg.workers > 1 and len(sample) > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(translate_one, sample))
    else:
        outputs = [translate_one(s) for s in sample]

    pairs = [
        SyntheticPair(Sentence(normalize_text(text, source_lang), source_lang), target)
        for text, target in zip(outputs, sample)
        if text is not None
    ]
    skipped = len(sample) - len(pairs)
    if skipped:
        logger.warning("Back-translation skipped %d of %d sentences", skipped, len(sample))
    logger.info("Back-translated %d sentences into %s", len(pairs), source_lang.value)
    if stats is not None:
        stats["skipped"] = skipped
        stats["translated"] = len(pairs)
    return pairs
