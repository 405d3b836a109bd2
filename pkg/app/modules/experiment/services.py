"""
Experiment driver: corpus ingestion, the per-direction training chain, the
full pipeline and the submission writer.

Run directory layout (one folder per direction):

    <run>/<src>-<tgt>/embeddings.txt        skip-gram vectors
    <run>/<src>-<tgt>/curriculum/           stage checkpoints and stage_metrics.jsonl
    <run>/<src>-<tgt>/translator/           model.ckpt and vocabularies
    <run>/<src>-<tgt>/reranker/
    <run>/<src>-<tgt>/dev.candidates.jsonl
    <run>/<src>-<tgt>/dev.hyp.txt, test.hyp.txt, submission.xml
    <run>/run_report.json  <run>/manifest.json
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import torch
import torch.nn as nn

from app.config import settings
from app.core.artifacts import ensure_dir, read_lines, save_json, write_jsonl, write_manifest
from app.core.errors import ArtifactWriteError, CorpusReadError, LabError, PipelineError
from app.core.system import Stopwatch, get_host_info, get_peak_rss_mb
from app.core.templates import render
from app.modules.curriculum import (
    ExternalProvider,
    SyntheticPair,
    back_translate,
    build_schedule,
    encode_stage,
    run_curriculum,
)
from app.modules.decoding import Hypothesis, Translator
from app.modules.embeddings import augment_by_substitution, save_embeddings, train_skipgram
from app.modules.losses import token_loss
from app.modules.metrics import BleuConfig, BleuReport, corpus_bleu, leaderboard_average
from app.modules.nnet import ModelHyper, Seq2SeqModel, fit
from app.modules.reranker import Reranker, rerank, train_reranker
from app.modules.textproc import (
    SEP_TOKEN,
    Vocabulary,
    build_vocab,
    clean_parallel,
    normalize_entities,
    normalize_text,
    tokenize,
)
from app.shared.models import Lang, Sentence, tokenizer_mode_for

from .config import DirectionConfig, ExperimentConfig
from .synthetic import generate_task, write_task

logger = logging.getLogger(__name__)

REPORT_NAME = "run_report.json"
SUBMISSION_TEMPLATE = "submission.xml.j2"

SentencePair = Tuple[Sentence, Sentence]
TokenPair = Tuple[List[str], List[str]]


# --- corpora ----------------------------------------------------------------


def load_parallel_tsv(
    path: Path,
    src_lang: Lang | str,
    tgt_lang: Lang | str,
    stats: Optional[Dict[str, int]] = None,
) -> List[SentencePair]:
    """
    One SRC<TAB>TGT pair per line, entity-decoded and normalized.

    Lines without exactly two fields are skipped; the count is logged and,
    when `stats` is given, stored in stats["skipped"].
    """
    src_lang, tgt_lang = Lang(src_lang), Lang(tgt_lang)
    pairs: List[SentencePair] = []
    skipped = 0
    for line in read_lines(Path(path)):
        fields = line.split("\t")
        if len(fields) != 2:
            skipped += 1
            continue
        src, tgt = fields
        pairs.append(
            (
                Sentence(normalize_text(src, src_lang), src_lang),
                Sentence(normalize_text(tgt, tgt_lang), tgt_lang),
            )
        )
    if skipped:
        logger.warning("Skipped %d malformed lines in %s", skipped, path)
    logger.info("Loaded %d pairs from %s", len(pairs), path)
    if stats is not None:
        stats["skipped"] = skipped
        stats["pairs"] = len(pairs)
    return pairs


def load_monolingual(path: Path, lang: Lang | str) -> List[Sentence]:
    lang = Lang(lang)
    sentences = []
    for line in read_lines(Path(path)):
        text = normalize_text(line, lang)
        if text:
            sentences.append(Sentence(text, lang))
    logger.info("Loaded %d %s sentences from %s", len(sentences), lang.value, path)
    return sentences


def tokenize_pairs(pairs: Sequence[SentencePair]) -> List[TokenPair]:
    return [(tokenize(s, s.mode), tokenize(t, t.mode)) for s, t in pairs]


def source_tokens(pairs: Sequence[SentencePair]) -> List[List[str]]:
    return [tokenize(s, s.mode) for s, _ in pairs]


# --- submission -------------------------------------------------------------

_ANGLE = {"<": "&lt;", ">": "&gt;"}


def _escape(text: str) -> str:
    text = normalize_entities(text, "encode")
    return re.sub(r"[<>]", lambda m: _ANGLE[m.group(0)], text)


def write_submission(hyps: Sequence[Union[Sentence, str]], path: Path) -> None:
    """<translations><seg id="N">TEXT</seg>...</translations>, ids from 1."""
    segments = [
        {"id": i, "text": _escape(h.text if isinstance(h, Sentence) else h)}
        for i, h in enumerate(hyps, start=1)
    ]
    path = Path(path)
    try:
        ensure_dir(path.parent)
        path.write_text(render(SUBMISSION_TEMPLATE, segments=segments), encoding="utf-8")
    except OSError as exc:
        raise ArtifactWriteError(f"failed to write {path}: {exc}") from exc
    logger.info("Wrote %d segments to %s", len(segments), path)


def read_submission(path: Path) -> List[str]:
    """Segment texts in id order."""
    try:
        root = ET.fromstring(Path(path).read_text(encoding="utf-8"))
    except (OSError, ET.ParseError) as exc:
        raise CorpusReadError(f"failed to read {path}: {exc}") from exc
    segs = sorted(root.iter("seg"), key=lambda seg: int(seg.get("id", "0")))
    return [seg.text or "" for seg in segs]


# --- pipeline pieces --------------------------------------------------------


@dataclass
class DirectionData:
    """Normalized corpora of one direction."""

    config: DirectionConfig
    train: List[SentencePair]
    dev: List[SentencePair]
    test: List[SentencePair] = field(default_factory=list)
    family: List[SentencePair] = field(default_factory=list)
    mono: List[Sentence] = field(default_factory=list)
    train_tokens: List[TokenPair] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)


@dataclass
class DirectionResult:
    name: str
    translator: Translator
    reranker: Optional[Reranker] = None
    dev: Optional[BleuReport] = None
    test: Optional[BleuReport] = None
    stage_metrics: List[Dict[str, Any]] = field(default_factory=list)
    stats: Dict[str, Any] = field(default_factory=dict)

    def to_serializable_dict(self) -> Dict[str, Any]:
        return {
            "dev": self.dev.to_serializable_dict() if self.dev else None,
            "test": self.test.to_serializable_dict() if self.test else None,
            "stage_metrics": self.stage_metrics,
            "stats": self.stats,
        }


@contextmanager
def component(name: str, stage: str, stopwatch: Optional[Stopwatch] = None) -> Iterator[None]:
    """Time a pipeline component and name it in any domain failure."""
    key = f"{stage}/{name}"
    try:
        if stopwatch is None:
            yield
        else:
            with stopwatch.timed(key):
                yield
    except PipelineError:
        raise
    except (LabError, ValueError) as exc:
        logger.error("Component %s failed in %s: %s", name, stage, exc)
        raise PipelineError(name, stage, exc) from exc


def prepare_direction(direction: DirectionConfig, cfg: ExperimentConfig) -> DirectionData:
    stats: Dict[str, int] = {}
    train = load_parallel_tsv(direction.train, direction.src_lang, direction.tgt_lang, stats)
    dev = load_parallel_tsv(direction.dev, direction.src_lang, direction.tgt_lang)
    test = load_parallel_tsv(direction.test, direction.src_lang, direction.tgt_lang) if direction.test else []
    family: List[SentencePair] = []
    if direction.family:
        family = load_parallel_tsv(direction.family, *direction.family_langs())
    mono = load_monolingual(direction.mono, direction.tgt_lang) if direction.mono else []

    token_pairs, dropped = clean_parallel(
        tokenize_pairs(train), max_ratio=cfg.max_ratio, max_len=cfg.model.max_len - 2
    )
    if dropped:
        logger.warning("%s: cleaning dropped %d of %d training pairs", direction.name, dropped, len(train))
    stats.update({"cleaned": len(token_pairs), "dropped": dropped})
    return DirectionData(direction, train, dev, test, family, mono, token_pairs, stats)


def new_translation_model(cfg: ExperimentConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary) -> Seq2SeqModel:
    hyper = ModelHyper(
        src_vocab_size=len(src_vocab),
        tgt_vocab_size=len(tgt_vocab),
        d_model=cfg.model.d_model,
        heads=cfg.model.heads,
        d_ff=cfg.model.d_ff,
        enc_layers=cfg.model.enc_layers,
        dec_layers=cfg.model.dec_layers,
        max_len=cfg.model.max_len,
    )
    return Seq2SeqModel(hyper, seed=cfg.model.seed, vocab_hashes=(src_vocab.content_hash, tgt_vocab.content_hash))


def build_vocabs(cfg: ExperimentConfig, corpora: Sequence[Sequence[TokenPair]]) -> Tuple[Vocabulary, Vocabulary]:
    pairs = [pair for corpus in corpora for pair in corpus]
    src_vocab = build_vocab((s for s, _ in pairs), max_size=cfg.skipgram.max_vocab, reserved=(SEP_TOKEN,))
    tgt_vocab = build_vocab((t for _, t in pairs), max_size=cfg.skipgram.max_vocab, reserved=(SEP_TOKEN,))
    return src_vocab, tgt_vocab


def train_translator(
    data: DirectionData,
    cfg: ExperimentConfig,
    out_dir: Path,
    reverse: Optional[Translator] = None,
    stopwatch: Optional[Stopwatch] = None,
) -> Tuple[Translator, Dict[str, Any]]:
    """
    skip-gram -> augmentation -> back-translation -> curriculum (or plain) training.

    Returns the trained translator and the direction's bookkeeping.
    """
    name = data.config.name
    ensure_dir(out_dir)
    info: Dict[str, Any] = dict(data.stats)
    task_pairs = list(data.train_tokens)

    if cfg.use_augmentation:
        with component("embed", name, stopwatch):
            sentences = [s for s, _ in data.train_tokens] + source_tokens(data.family)
            table = train_skipgram(sentences, cfg.skipgram)
            save_embeddings(table, out_dir / "embeddings.txt")
        with component("augment", name, stopwatch):
            task_pairs = augment_by_substitution(data.train_tokens, table, cfg.augment)
            info["augmented"] = len(task_pairs)

    if cfg.use_backtranslation and data.mono:
        with component("backtranslate", name, stopwatch):
            synthetic = _back_translate(data, cfg, out_dir, reverse)
            task_pairs += [(tokenize(p.src, p.src.mode), tokenize(p.tgt, p.tgt.mode)) for p in synthetic]
            write_jsonl(out_dir / "backtranslated.jsonl", (p.to_serializable_dict() for p in synthetic))
            info["backtranslated"] = len(synthetic)

    family_pairs = tokenize_pairs(data.family) if cfg.use_curriculum else []
    with component("train", name, stopwatch):
        src_vocab, tgt_vocab = build_vocabs(cfg, [task_pairs, family_pairs])
        model = new_translation_model(cfg, src_vocab, tgt_vocab)
        loss_fn = token_loss(cfg.loss)
        translator = Translator(model, src_vocab, tgt_vocab, data.config.src_lang, data.config.tgt_lang, cfg.decode)
        if cfg.use_curriculum:
            schedule = build_schedule(family_pairs, task_pairs, cfg.curriculum, max_len=model.max_len)
            dev_hook = _dev_bleu_hook(translator, data.dev) if cfg.stage_dev_bleu else None
            _, metrics = run_curriculum(
                model, schedule, cfg.train, loss_fn, src_vocab, tgt_vocab, dev_hook, out_dir / "curriculum"
            )
            info["stage_metrics"] = [m.to_serializable_dict() for m in metrics]
        else:
            encoded = encode_stage(task_pairs, src_vocab, tgt_vocab, model.max_len)
            info["epoch_losses"] = fit(model, encoded, cfg.train, loss_fn, shuffle=True)
        model.eval()
        translator.save(out_dir / "translator")
    return translator, info


def _dev_bleu_hook(translator: Translator, dev: Sequence[SentencePair]) -> Callable[[nn.Module], float]:
    def score(model: nn.Module) -> float:
        was_training = model.training
        model.eval()
        hyps = [translator.translate(src) for src, _ in dev]
        model.train(was_training)
        return corpus_bleu(zip(hyps, [ref for _, ref in dev]), bleu_config(translator.tgt_lang)).bleu

    return score


def train_reverse(data: DirectionData, cfg: ExperimentConfig, out_dir: Path) -> Translator:
    """A plain target->source model on the cleaned training pairs, used only for back-translation."""
    reversed_pairs = [(t, s) for s, t in data.train_tokens]
    src_vocab, tgt_vocab = build_vocabs(cfg, [reversed_pairs])
    model = new_translation_model(cfg, src_vocab, tgt_vocab)
    encoded = encode_stage(reversed_pairs, src_vocab, tgt_vocab, model.max_len)
    fit(model, encoded, cfg.train, token_loss(cfg.loss), shuffle=True)
    model.eval()
    translator = Translator(model, src_vocab, tgt_vocab, data.config.tgt_lang, data.config.src_lang, cfg.decode)
    translator.save(out_dir / "reverse")
    return translator


def _back_translate(
    data: DirectionData, cfg: ExperimentConfig, out_dir: Path, reverse: Optional[Translator]
) -> List[SyntheticPair]:
    stats: Dict[str, int] = {}
    if cfg.backtrans.provider == "external":
        provider = ExternalProvider(cfg.backtrans.endpoint, cfg.backtrans.timeout, cfg.backtrans.retries)
        try:
            return back_translate(provider, data.mono, cfg.backtrans, data.config.src_lang, stats)
        finally:
            provider.close()
    if reverse is None:
        logger.info("%s: training a reverse model for back-translation", data.config.name)
        reverse = train_reverse(data, cfg, out_dir)
    return back_translate(reverse, data.mono, cfg.backtrans, data.config.src_lang, stats)


def bleu_config(tgt_lang: Lang) -> BleuConfig:
    return BleuConfig(tokenizer_mode=tokenizer_mode_for(tgt_lang))


def decode_split(
    translator: Translator,
    pairs: Sequence[SentencePair],
    reranker: Optional[Reranker] = None,
) -> Tuple[List[str], List[Dict[str, Any]]]:
    """
    Top-1 hypothesis per source plus the candidate records written to disk.

    With a reranker, diverse-beam candidates are re-scored and the best one
    kept; otherwise plain beam search decides.
    """
    hyps: List[str] = []
    records: List[Dict[str, Any]] = []
    for sid, (src, _) in enumerate(pairs):
        if reranker is not None:
            candidates = translator.nbest(src, "diverse")
            ranked = rerank(reranker, src, candidates) if candidates else []
        else:
            ranked = translator.nbest(src, "beam")
        best = ranked[0].text if ranked else ""
        hyps.append(best or "")
        for rank, hyp in enumerate(ranked):
            records.append({"sid": sid, "source": src.text, "rank": rank, **hyp.to_serializable_dict()})
    return hyps, records


def score_split(hyps: Sequence[str], pairs: Sequence[SentencePair], tgt_lang: Lang) -> BleuReport:
    return corpus_bleu(zip(hyps, [ref for _, ref in pairs]), bleu_config(tgt_lang))


def _write_lines(path: Path, lines: Sequence[str]) -> None:
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


def run_direction(
    data: DirectionData,
    cfg: ExperimentConfig,
    run_dir: Path,
    reverse: Optional[Translator] = None,
    stopwatch: Optional[Stopwatch] = None,
) -> DirectionResult:
    name = data.config.name
    out_dir = ensure_dir(run_dir / name)
    translator, info = train_translator(data, cfg, out_dir, reverse, stopwatch)
    result = DirectionResult(name, translator, stage_metrics=info.pop("stage_metrics", []), stats=info)

    if cfg.use_reranker:
        with component("rerank_train", name, stopwatch):
            pairs = data.train[: cfg.rerank_pairs]
            history: List[float] = []
            result.reranker = train_reranker(pairs, translator, cfg.rerank, cfg.decode, history)
            result.reranker.save(out_dir / "reranker")
            result.stats["rerank_losses"] = history

    for split in ("dev", "test"):
        pairs = getattr(data, split)
        if not pairs:
            continue
        with component(f"decode_{split}", name, stopwatch):
            hyps, records = decode_split(translator, pairs, result.reranker)
            write_jsonl(out_dir / f"{split}.candidates.jsonl", records)
            _write_lines(out_dir / f"{split}.hyp.txt", hyps)
        with component(f"score_{split}", name, stopwatch):
            setattr(result, split, score_split(hyps, pairs, data.config.tgt_lang))
        if split == "test":
            with component("submit", name, stopwatch):
                write_submission(hyps, out_dir / "submission.xml")
    if result.dev is not None:
        logger.info("%s: dev BLEU %.2f", name, result.dev.bleu)
    return result


def resolve_directions(cfg: ExperimentConfig, run_dir: Path) -> List[DirectionConfig]:
    if cfg.directions:
        return list(cfg.directions)
    task = generate_task(cfg.synthetic)
    return write_task(task, cfg.synthetic, run_dir / "data")


def run_pipeline(cfg: ExperimentConfig, run_dir: Optional[Path] = None) -> Dict[str, Any]:
    """
    Run every direction end to end and write run_report.json and the manifest.

    Directions run in config order; a direction whose reverse already ran in
    this pipeline back-translates with that translator.
    """
    run_dir = ensure_dir(Path(run_dir or cfg.output_dir / cfg.name))
    torch.set_num_threads(settings.NUM_THREADS)
    stopwatch = Stopwatch()
    with component("prep", "data", stopwatch):
        directions = resolve_directions(cfg, run_dir)

    results: Dict[str, DirectionResult] = {}
    for direction in directions:
        with component("prep", direction.name, stopwatch):
            data = prepare_direction(direction, cfg)
        reverse = results.get(direction.reverse_name)
        results[direction.name] = run_direction(
            data, cfg, run_dir, reverse.translator if reverse else None, stopwatch
        )

    dev_scores = [r.dev.bleu for r in results.values() if r.dev is not None]
    leaderboard = None
    if len(dev_scores) == 4:
        leaderboard = leaderboard_average(dev_scores)
    mean_dev = math.fsum(dev_scores) / len(dev_scores) if dev_scores else None

    report = {
        "name": cfg.name,
        "seed": cfg.seed,
        "directions": {name: r.to_serializable_dict() for name, r in results.items()},
        "leaderboard_average": round(leaderboard, 2) if leaderboard is not None else None,
        "mean_dev_bleu": mean_dev,
        "timings": stopwatch.timings,
        "peak_rss_mb": get_peak_rss_mb(),
        "host": get_host_info(),
        "config": cfg.model_dump(mode="json"),
    }
    save_json(run_dir / REPORT_NAME, report)
    write_manifest(run_dir)
    logger.info("Pipeline %s finished: mean dev BLEU %s", cfg.name, f"{mean_dev:.2f}" if mean_dev is not None else "n/a")
    return report


def report_metrics(report: Dict[str, Any]) -> Dict[str, Any]:
    """The seed-determined part of a run report (no timings or host data)."""
    return {
        "directions": report["directions"],
        "leaderboard_average": report["leaderboard_average"],
        "mean_dev_bleu": report["mean_dev_bleu"],
    }


def hypotheses_from_candidates(records: Sequence[Dict[str, Any]]) -> Dict[int, List[Hypothesis]]:
    """Group candidate records by sentence id, keeping file order."""
    grouped: Dict[int, List[Hypothesis]] = {}
    for record in records:
        grouped.setdefault(int(record["sid"]), []).append(Hypothesis.from_dict(record))
    return grouped

