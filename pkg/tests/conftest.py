from typing import List, Tuple

import hypothesis
import pytest

from app.modules.decoding import DecodeConfig, Translator
from app.modules.nnet import ModelHyper, Seq2SeqModel
from app.modules.textproc import build_vocab
from app.shared.models import Lang
from tests.stubs import PrefixScorer, TwoPeakScorer

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("lab", deadline=None)
hypothesis.settings.load_profile("lab")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: training-outcome experiments, run with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def prefix_scorer():
    return PrefixScorer()


@pytest.fixture
def two_peak_scorer():
    return TwoPeakScorer()


@pytest.fixture
def copy_pairs() -> List[Tuple[List[str], List[str]]]:
    """A tiny copy task over five word types."""
    words = ["a", "b", "c", "d", "e"]
    pairs = []
    for i in range(40):
        length = 2 + i % 3
        sentence = [words[(i * 7 + j * 3) % len(words)] for j in range(length)]
        pairs.append((sentence, list(sentence)))
    return pairs


@pytest.fixture
def tiny_translator():
    """An untrained ms->zh translator; enough to exercise decoding plumbing."""
    src_vocab = build_vocab([["saya", "makan", "nasi"]])
    tgt_vocab = build_vocab([list("我吃饭")])
    hyper = ModelHyper(
        src_vocab_size=len(src_vocab),
        tgt_vocab_size=len(tgt_vocab),
        d_model=16,
        heads=2,
        d_ff=32,
        enc_layers=1,
        dec_layers=1,
        max_len=12,
    )
    model = Seq2SeqModel(hyper, seed=0, vocab_hashes=(src_vocab.content_hash, tgt_vocab.content_hash))
    decode_cfg = DecodeConfig(beam=4, groups=2, beam_per_group=2, max_len=12)
    return Translator(model.eval(), src_vocab, tgt_vocab, Lang.MS, Lang.ZH, decode_cfg)
