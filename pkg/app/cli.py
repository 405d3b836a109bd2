"""
Command-line entry point: python -m app.cli <command>

Domain errors exit with their code (2 config, 3 data, 4 numeric);
anything else propagates with a traceback.
"""

import json
import logging
from pathlib import Path
from typing import List, Optional

import click
import torch
from pydantic import ValidationError

from app.config import settings
from app.core.artifacts import ensure_dir, read_jsonl, read_lines, write_jsonl
from app.core.errors import ConfigError, DataError, LabError
from app.core.logs import configure_logging
from app.modules.decoding import Translator
from app.modules.embeddings import (
    AugmentConfig,
    SkipgramConfig,
    augment_by_substitution,
    load_embeddings,
    nearest_neighbors,
    save_embeddings,
    train_skipgram,
)
from app.modules.experiment import (
    COMPARISONS,
    hypotheses_from_candidates,
    load_config,
    load_monolingual,
    load_parallel_tsv,
    prepare_direction,
    resolve_directions,
    run_ablation,
    run_comparison,
    run_pipeline,
    train_translator,
    write_submission,
)
from app.modules.metrics import BleuConfig, corpus_bleu
from app.modules.reranker import RerankConfig, Reranker, rerank, train_reranker
from app.modules.textproc import clean_parallel, detokenize, normalize_text, tokenize
from app.shared.models import Lang, Sentence, tokenizer_mode_for

logger = logging.getLogger(__name__)

LANGS = click.Choice([lang.value for lang in Lang])
OVERRIDES = {"ignore_unknown_options": True, "allow_extra_args": True}


class LabGroup(click.Group):
    """Maps LabError to its exit code; option values a config model rejects are config errors."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except LabError as exc:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"error: {exc}", err=True)
            ctx.exit(exc.exit_code)
        except ValidationError as exc:
            logger.debug("Invalid options", exc_info=True)
            click.echo(f"error: invalid options: {exc}", err=True)
            ctx.exit(ConfigError.exit_code)


def _write_tsv(path: Path, rows) -> None:
    ensure_dir(path.parent)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for src, tgt in rows:
            f.write(f"{src}\t{tgt}\n")


def _seed_list(seeds: str) -> List[int]:
    try:
        return [int(s) for s in seeds.split(",") if s.strip()]
    except ValueError as exc:
        raise click.BadParameter(f"seeds must be integers: {seeds}") from exc


@click.group(cls=LabGroup)
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (default from LRNMT_LOG_LEVEL)")
def cli(log_level: Optional[str]) -> None:
    """Low-resource translation lab."""
    configure_logging(log_level)
    torch.set_num_threads(settings.NUM_THREADS)


@cli.command()
@click.argument("input_tsv", type=click.Path(path_type=Path))
@click.option("--src-lang", type=LANGS, required=True)
@click.option("--tgt-lang", type=LANGS, required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--max-ratio", type=float, default=3.0, show_default=True)
def prep(input_tsv: Path, src_lang: str, tgt_lang: str, out_path: Path, max_ratio: float) -> None:
    """Normalize and clean a parallel TSV."""
    stats: dict = {}
    pairs = load_parallel_tsv(input_tsv, src_lang, tgt_lang, stats)
    tokens = [(tokenize(s, s.mode), tokenize(t, t.mode)) for s, t in pairs]
    kept, dropped = clean_parallel(tokens, max_ratio=max_ratio)
    src_mode, tgt_mode = tokenizer_mode_for(src_lang), tokenizer_mode_for(tgt_lang)
    _write_tsv(out_path, ((detokenize(s, src_mode), detokenize(t, tgt_mode)) for s, t in kept))
    click.echo(f"kept {len(kept)} pairs, dropped {dropped}, skipped {stats['skipped']} malformed lines")


@cli.group()
def embed() -> None:
    """Skip-gram word vectors."""


@embed.command("train")
@click.option("--mono", "corpus", type=click.Path(path_type=Path), required=True, help="One sentence per line")
@click.option("--lang", type=LANGS, required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--dim", type=int, default=64, show_default=True)
@click.option("--window", type=int, default=5, show_default=True)
@click.option("--epochs", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def embed_train(corpus: Path, lang: str, out_path: Path, dim: int, window: int, epochs: int, seed: int) -> None:
    """Skip-gram vectors from a monolingual corpus."""
    sentences = [tokenize(s, s.mode) for s in load_monolingual(corpus, lang)]
    cfg = SkipgramConfig(dim=dim, window=window, epochs=epochs, seed=seed)
    table = train_skipgram(sentences, cfg)
    save_embeddings(table, out_path)
    click.echo(f"{len(table.vocab)} vectors of dim {table.dim} written to {out_path}")


@embed.command("nn")
@click.option("--table", "embeddings", type=click.Path(path_type=Path), required=True)
@click.option("--word", "token", required=True)
@click.option("--k", "k", type=click.IntRange(min=1), default=10, show_default=True)
def embed_nn(embeddings: Path, token: str, k: int) -> None:
    """Nearest neighbours of a word by cosine similarity."""
    for neighbour, sim in nearest_neighbors(load_embeddings(embeddings), token, k):
        click.echo(f"{neighbour}\t{sim:.4f}")


@cli.command()
@click.argument("input_tsv", type=click.Path(path_type=Path))
@click.option("--src-lang", type=LANGS, required=True)
@click.option("--tgt-lang", type=LANGS, required=True)
@click.option("--embeddings", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
@click.option("--factor", type=int, default=10, show_default=True)
@click.option("--top-k", type=int, default=5, show_default=True)
@click.option("--min-similarity", type=float, default=0.5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def augment(
    input_tsv: Path,
    src_lang: str,
    tgt_lang: str,
    embeddings: Path,
    out_path: Path,
    factor: int,
    top_k: int,
    min_similarity: float,
    seed: int,
) -> None:
    """Expand a parallel TSV by source-side synonym substitution."""
    pairs = load_parallel_tsv(input_tsv, src_lang, tgt_lang)
    tokens = [(tokenize(s, s.mode), tokenize(t, t.mode)) for s, t in pairs]
    cfg = AugmentConfig(expansion_factor=factor, top_k=top_k, min_similarity=min_similarity, seed=seed)
    out = augment_by_substitution(tokens, load_embeddings(embeddings), cfg)
    src_mode, tgt_mode = tokenizer_mode_for(src_lang), tokenizer_mode_for(tgt_lang)
    _write_tsv(out_path, ((detokenize(s, src_mode), detokenize(t, tgt_mode)) for s, t in out))
    click.echo(f"{len(pairs)} pairs expanded to {len(out)}")


@cli.command(context_settings=OVERRIDES)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--direction", required=True, help="e.g. zh-ms")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.pass_context
def train(ctx: click.Context, config_path: Optional[Path], direction: str, out_dir: Path) -> None:
    """Train one direction's translator; extra --key=value pairs override the config."""
    cfg = load_config(config_path, ctx.args)
    directions = {d.name: d for d in resolve_directions(cfg, out_dir)}
    if direction not in directions:
        raise DataError(f"direction {direction} not in config (have {', '.join(sorted(directions))})")
    data = prepare_direction(directions[direction], cfg)
    translator, _ = train_translator(data, cfg, out_dir / direction)
    click.echo(f"translator {translator.direction} saved to {out_dir / direction / 'translator'}")


@cli.command()
@click.option("--model", "translator_dir", type=click.Path(path_type=Path), required=True, help="Translator directory")
@click.option("--input", "input_file", type=click.Path(path_type=Path), required=True, help="One source per line")
@click.option("--mode", type=click.Choice(["beam", "diverse"]), default="beam", show_default=True)
@click.option("--nbest", type=int, default=0, help="Candidates kept per sentence (0 keeps all)")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True, help="Candidates JSON-lines")
@click.option("--hyp-out", type=click.Path(path_type=Path), default=None, help="Top-1 text per line")
def decode(
    translator_dir: Path, input_file: Path, mode: str, nbest: int, out_path: Path, hyp_out: Optional[Path]
) -> None:
    """N-best translations of one source sentence per line."""
    translator = Translator.load(translator_dir)
    records, best = [], []
    for sid, line in enumerate(read_lines(input_file)):
        hyps = translator.nbest(line, mode, k=nbest or None)
        best.append(hyps[0].text if hyps else "")
        records += [{"sid": sid, "source": line, "rank": r, **h.to_serializable_dict()} for r, h in enumerate(hyps)]
    write_jsonl(out_path, records)
    if hyp_out is not None:
        hyp_out.write_text("".join(f"{t}\n" for t in best), encoding="utf-8")
    click.echo(f"decoded {len(best)} sentences into {len(records)} candidates")


@cli.group(name="rerank")
def rerank_commands() -> None:
    """Contrastive candidate re-ranking."""


@rerank_commands.command("train")
@click.option("--pairs", "train_tsv", type=click.Path(path_type=Path), required=True, help="Parallel TSV")
@click.option("--translator", "translator_dir", type=click.Path(path_type=Path), required=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), required=True)
@click.option("--epochs", type=int, default=15, show_default=True)
@click.option("--negatives", type=int, default=4, show_default=True)
@click.option("--limit", type=int, default=0, help="Use only the first N pairs (0 uses all)")
@click.option("--seed", type=int, default=0, show_default=True)
def rerank_train(
    translator_dir: Path, train_tsv: Path, out_dir: Path, epochs: int, negatives: int, limit: int, seed: int
) -> None:
    """Mine negatives with a translator and fit the scoring encoder."""
    translator = Translator.load(translator_dir)
    pairs = load_parallel_tsv(train_tsv, translator.src_lang, translator.tgt_lang)
    if limit:
        pairs = pairs[:limit]
    cfg = RerankConfig(epochs=epochs, negatives=negatives, seed=seed)
    reranker = train_reranker(pairs, translator, cfg)
    reranker.save(out_dir)
    click.echo(f"reranker trained on {len(pairs)} pairs, saved to {out_dir}")


@rerank_commands.command("apply")
@click.option("--encoder", "reranker_dir", type=click.Path(path_type=Path), required=True, help="Reranker directory")
@click.option("--candidates", type=click.Path(path_type=Path), required=True, help="Candidates JSON-lines")
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True, help="Re-ranked JSON-lines")
@click.option("--hyp-out", type=click.Path(path_type=Path), default=None, help="Top-1 text per line")
def rerank_apply(reranker_dir: Path, candidates: Path, out_path: Path, hyp_out: Optional[Path]) -> None:
    """Re-score every sentence's candidates, best first."""
    reranker = Reranker.load(reranker_dir)
    records = list(read_jsonl(candidates))
    sources = {int(r["sid"]): r.get("source", "") for r in records}
    best: List[str] = []
    ranked_records = []
    for sid, hyps in sorted(hypotheses_from_candidates(records).items()):
        source = Sentence(normalize_text(sources[sid], reranker.src_lang), reranker.src_lang)
        ranked = rerank(reranker, source, hyps)
        best.append(ranked[0].text or "")
        ranked_records += [
            {"sid": sid, "source": sources[sid], "rank": r, **h.to_serializable_dict()} for r, h in enumerate(ranked)
        ]
    write_jsonl(out_path, ranked_records)
    if hyp_out is not None:
        hyp_out.write_text("".join(f"{t}\n" for t in best), encoding="utf-8")
    click.echo(f"re-ranked {len(best)} sentences")


@cli.command()
@click.option("--hyp", "hyp_file", type=click.Path(path_type=Path), required=True)
@click.option("--ref", "ref_file", type=click.Path(path_type=Path), required=True)
@click.option("--mode", type=click.Choice(["word", "char"]), default="word", show_default=True)
@click.option("--scale", type=float, default=100.0, show_default=True)
def bleu(hyp_file: Path, ref_file: Path, mode: str, scale: float) -> None:
    """Corpus BLEU of aligned hypothesis and reference files."""
    hyps, refs = read_lines(hyp_file), read_lines(ref_file)
    if len(hyps) != len(refs):
        raise DataError(f"{len(hyps)} hypotheses against {len(refs)} references")
    report = corpus_bleu(zip(hyps, refs), BleuConfig(tokenizer_mode=mode, scale=scale))
    click.echo(json.dumps(report.to_serializable_dict(), indent=2))


@cli.command(context_settings=OVERRIDES)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
def pipeline(ctx: click.Context, config_path: Optional[Path], out_dir: Optional[Path]) -> None:
    """Preprocess, train, decode, re-rank and score every direction."""
    cfg = load_config(config_path, ctx.args)
    report = run_pipeline(cfg, out_dir)
    for name, result in report["directions"].items():
        dev = result["dev"]
        click.echo(f"{name}\tdev BLEU {dev['bleu']:.2f}" if dev else f"{name}\tno dev score")
    if report["leaderboard_average"] is not None:
        click.echo(f"leaderboard average\t{report['leaderboard_average']:.2f}")


@cli.command()
@click.argument("hyp_file", type=click.Path(path_type=Path))
@click.option("--out", "out_path", type=click.Path(path_type=Path), required=True)
def submit(hyp_file: Path, out_path: Path) -> None:
    """Write one hypothesis per line as the competition XML."""
    hyps = read_lines(hyp_file)
    write_submission(hyps, out_path)
    click.echo(f"{len(hyps)} segments written to {out_path}")


@cli.command(context_settings=OVERRIDES)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--seeds", default="0,1,2", show_default=True, help="Comma-separated seeds")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
def ablation(ctx: click.Context, config_path: Optional[Path], seeds: str, out_dir: Optional[Path]) -> None:
    """Run the component ladder over several seeds."""
    cfg = load_config(config_path, ctx.args)
    report = run_ablation(cfg, _seed_list(seeds), out_dir)
    for rung in report["rungs"]:
        click.echo(f"{rung['name']:<12}\t{rung['mean']:.2f}")
    for component, check in report["checks"].items():
        click.echo(f"{component:<12}\t{check['delta']:+.2f}\t{'ok' if check['holds'] else 'worse'}")


@cli.command(context_settings=OVERRIDES)
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--component", type=click.Choice(sorted(COMPARISONS)), required=True)
@click.option("--seeds", default="0,1,2", show_default=True, help="Comma-separated seeds")
@click.option("--noise-rate", type=click.FloatRange(0.0, 1.0), default=None, help="Training target noise")
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=None)
@click.pass_context
def compare(
    ctx: click.Context,
    config_path: Optional[Path],
    component: str,
    seeds: str,
    noise_rate: Optional[float],
    out_dir: Optional[Path],
) -> None:
    """Baseline with and without one component over several seeds."""
    cfg = load_config(config_path, ctx.args)
    report = run_comparison(cfg, component, _seed_list(seeds), out_dir, noise_rate)
    click.echo(f"without\t{report['without']['mean']:.2f}")
    click.echo(f"with\t{report['with']['mean']:.2f}")
    click.echo(f"delta\t{report['delta']:+.2f}\t{'ok' if report['holds'] else 'worse'}")


@cli.command()
@click.option("--run-dir", type=click.Path(path_type=Path), default=None, help="Defaults to LRNMT_SERVE_DIR")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(run_dir: Optional[Path], host: str, port: int) -> None:
    """Serve /bleu and /translate over HTTP."""
    import uvicorn

    from app.main import app, load_translators

    app.state.translators = load_translators(run_dir or settings.SERVE_DIR)
    uvicorn.run(app, host=host, port=port, log_level=logging.getLevelName(logging.getLogger().level).lower())


if __name__ == "__main__":
    cli()
