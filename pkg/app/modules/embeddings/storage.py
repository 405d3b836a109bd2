"""
Text interchange format for word vectors: a "count dim" header, then one
"token v1 ... vd" row per token. Specials are written as ordinary rows so
the vocabulary comes back in the same order.
"""

import logging
from pathlib import Path

import numpy as np
import torch

from app.core.artifacts import ensure_dir
from app.core.errors import CorpusReadError, DataError
from app.modules.embeddings.services import EmbeddingTable
from app.modules.textproc.vocab import Vocabulary

logger = logging.getLogger(__name__)


def save_embeddings(tbl: EmbeddingTable, path: Path) -> None:
    ensure_dir(path.parent)
    vectors = tbl.vectors.detach().cpu().to(torch.float32).numpy()
    with path.open("w", encoding="utf-8") as f:
        f.write(f"{len(tbl.vocab)} {tbl.dim}\n")
        for token, row in zip(tbl.vocab.tokens, vectors):
            # 9 significant digits round-trip float32 exactly
            f.write(token + " " + " ".join(format(float(x), ".9g") for x in row) + "\n")
    logger.info("Saved %d vectors (dim %d) to %s", len(tbl.vocab), tbl.dim, path)


def load_embeddings(path: Path) -> EmbeddingTable:
    try:
        with path.open("r", encoding="utf-8") as f:
            header = f.readline().split()
            if len(header) != 2:
                raise CorpusReadError(f"{path}: expected a 'count dim' header")
            count, dim = int(header[0]), int(header[1])
            tokens, rows = [], []
            for lineno, line in enumerate(f, start=2):
                parts = line.rstrip("\r\n").split(" ")
                if len(parts) != dim + 1:
                    raise CorpusReadError(f"{path}:{lineno}: expected {dim} values")
                tokens.append(parts[0])
                rows.append(np.asarray(parts[1:], dtype=np.float32))
    except OSError as exc:
        raise CorpusReadError(f"failed to read {path}: {exc}") from exc
    except ValueError as exc:
        raise CorpusReadError(f"{path}: malformed number: {exc}") from exc
    if len(tokens) != count:
        raise CorpusReadError(f"{path}: header announces {count} rows, found {len(tokens)}")
    try:
        vocab = Vocabulary(tuple(tokens))
    except DataError as exc:
        raise CorpusReadError(f"{path}: {exc}") from exc
    vectors = torch.from_numpy(np.stack(rows)) if rows else torch.zeros((0, dim))
    return EmbeddingTable(vocab, vectors)
