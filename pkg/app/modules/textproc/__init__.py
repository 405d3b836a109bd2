from .services import (
    clean_control_chars,
    clean_parallel,
    detokenize,
    load_simplification_table,
    normalize_entities,
    normalize_text,
    to_halfwidth,
    tokenize,
    traditional_to_simplified,
)
from .vocab import (
    BOS,
    EOS,
    PAD,
    SEP_TOKEN,
    UNK,
    Vocabulary,
    build_vocab,
    decode,
    encode,
    load_vocab,
    save_vocab,
)

__all__ = [
    "BOS",
    "EOS",
    "PAD",
    "SEP_TOKEN",
    "UNK",
    "Vocabulary",
    "build_vocab",
    "clean_control_chars",
    "clean_parallel",
    "decode",
    "detokenize",
    "encode",
    "load_simplification_table",
    "load_vocab",
    "normalize_entities",
    "normalize_text",
    "save_vocab",
    "to_halfwidth",
    "tokenize",
    "traditional_to_simplified",
]
