"""
A trained direction bundled for use: model, both vocabularies, language tags
and decode settings. Saved as a directory:

    model.ckpt  src_vocab.json  tgt_vocab.json  translator.json
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Union

from app.core.artifacts import ensure_dir, load_json, save_json
from app.core.errors import CorruptCheckpoint
from app.modules.decoding.services import (
    DecodeConfig,
    Hypothesis,
    beam_search,
    dedup_candidates,
    diverse_beam_search,
)
from app.modules.nnet.checkpoint import load_checkpoint, save_checkpoint
from app.modules.nnet.model import Seq2SeqModel
from app.modules.textproc import (
    EOS,
    Vocabulary,
    decode,
    detokenize,
    encode,
    load_vocab,
    normalize_text,
    save_vocab,
    tokenize,
)
from app.shared.models import Lang, Sentence, tokenizer_mode_for

logger = logging.getLogger(__name__)

DecodeMode = Literal["beam", "diverse"]


@dataclass(frozen=True)
class Translator:
    model: Seq2SeqModel
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    src_lang: Lang
    tgt_lang: Lang
    decode_cfg: DecodeConfig = field(default_factory=DecodeConfig)

    def __post_init__(self) -> None:
        object.__setattr__(self, "src_lang", Lang(self.src_lang))
        object.__setattr__(self, "tgt_lang", Lang(self.tgt_lang))

    @property
    def direction(self) -> str:
        return f"{self.src_lang.value}-{self.tgt_lang.value}"

    def source_tokens(self, source: Union[Sentence, str, Sequence[str]]) -> List[str]:
        """Raw strings are normalized first; Sentences are assumed normalized already."""
        if isinstance(source, str):
            source = Sentence(normalize_text(source, self.src_lang), self.src_lang)
        if isinstance(source, Sentence):
            return tokenize(source, tokenizer_mode_for(self.src_lang))
        return list(source)

    def source_ids(self, source: Union[Sentence, str, Sequence[str]]) -> List[int]:
        ids = encode(self.source_tokens(source), self.src_vocab, add_bos_eos=True)
        if len(ids) > self.model.max_len:
            logger.debug("Truncating source of %d ids to %d", len(ids), self.model.max_len)
            ids = ids[: self.model.max_len - 1] + [EOS]
        return ids

    def hypothesis_text(self, hyp: Hypothesis) -> str:
        return detokenize(decode(hyp.ids, self.tgt_vocab), tokenizer_mode_for(self.tgt_lang))

    def nbest(
        self,
        source: Union[Sentence, str, Sequence[str]],
        mode: DecodeMode = "beam",
        k: Optional[int] = None,
        cfg: Optional[DecodeConfig] = None,
    ) -> List[Hypothesis]:
        cfg = cfg or self.decode_cfg
        src = self.source_ids(source)
        if mode == "diverse":
            hyps = dedup_candidates(diverse_beam_search(self.model, src, cfg))
        else:
            hyps = beam_search(self.model, src, cfg)
        for h in hyps:
            h.text = self.hypothesis_text(h)
        return hyps[:k] if k else hyps

    def translate(self, source: Union[Sentence, str, Sequence[str]]) -> str:
        hyps = self.nbest(source, "beam", k=1)
        return hyps[0].text if hyps else ""

    def save(self, directory: Path) -> None:
        ensure_dir(directory)
        save_checkpoint(self.model, directory / "model.ckpt")
        save_vocab(self.src_vocab, directory / "src_vocab.json")
        save_vocab(self.tgt_vocab, directory / "tgt_vocab.json")
        save_json(
            directory / "translator.json",
            {
                "src_lang": self.src_lang.value,
                "tgt_lang": self.tgt_lang.value,
                "decode": self.decode_cfg.model_dump(),
            },
        )

    @classmethod
    def load(cls, directory: Path) -> "Translator":
        meta = load_json(directory / "translator.json")
        src_vocab = load_vocab(directory / "src_vocab.json")
        tgt_vocab = load_vocab(directory / "tgt_vocab.json")
        model = load_checkpoint(
            directory / "model.ckpt",
            expected_vocab_hashes=(src_vocab.content_hash, tgt_vocab.content_hash),
        )
        if not isinstance(model, Seq2SeqModel):
            raise CorruptCheckpoint(f"{directory} does not hold a translation model")
        return cls(
            model=model,
            src_vocab=src_vocab,
            tgt_vocab=tgt_vocab,
            src_lang=Lang(meta["src_lang"]),
            tgt_lang=Lang(meta["tgt_lang"]),
            decode_cfg=DecodeConfig.model_validate(meta.get("decode", {})),
        )
