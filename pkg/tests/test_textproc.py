import pytest
from hypothesis import given
from hypothesis import strategies as st

from app.core.errors import EmptyCorpus, InvalidId, MissingTable
from app.modules.textproc import (
    BOS,
    EOS,
    SEP_TOKEN,
    UNK,
    build_vocab,
    clean_control_chars,
    clean_parallel,
    decode,
    detokenize,
    encode,
    load_simplification_table,
    load_vocab,
    normalize_entities,
    normalize_text,
    save_vocab,
    to_halfwidth,
    tokenize,
    traditional_to_simplified,
)
from app.shared.models import Lang, Sentence

SPECIALS = ["<pad>", "<s>", "</s>", "<unk>"]


class TestEntities:
    def test_decode_without_semicolon(self):
        assert normalize_entities("A &amp B", "decode") == "A & B"

    def test_decode_with_semicolon(self):
        assert normalize_entities("A &amp; B", "decode") == "A & B"

    def test_encode(self):
        assert normalize_entities("A & B", "encode") == "A &amp; B"

    def test_entity_free_text_is_unchanged(self):
        assert normalize_entities("no entities here", "decode") == "no entities here"

    def test_encode_is_idempotent(self):
        once = normalize_entities("x & y &amp; z", "encode")
        assert normalize_entities(once, "encode") == once

    @pytest.mark.parametrize(
        "text, expected",
        [("fish &amp;amp; chips", "fish & chips"), ("a &amp;amp;amp b", "a & b"), ("&ampamp;", "&")],
    )
    def test_decode_collapses_nested_escapes(self, text, expected):
        assert normalize_entities(text, "decode") == expected

    @given(st.text(alphabet="&amp; x", max_size=40))
    def test_decode_is_idempotent(self, text):
        once = normalize_entities(text, "decode")
        assert normalize_entities(once, "decode") == once

    def test_encode_restores_well_formed_entities(self):
        text = "fish &amp; chips"
        assert normalize_entities(normalize_entities(text, "decode"), "encode") == text

    def test_unknown_direction(self):
        with pytest.raises(ValueError):
            normalize_entities("x", "sideways")


class TestHalfwidth:
    @pytest.mark.parametrize(
        "text, expected",
        [("ＡＢＣ１２３", "ABC123"), ("（x）", "(x)"), ("中文", "中文"), ("a　b", "a b")],
    )
    def test_examples(self, text, expected):
        assert to_halfwidth(text) == expected

    @given(st.text())
    def test_idempotent(self, text):
        assert to_halfwidth(to_halfwidth(text)) == to_halfwidth(text)


class TestSimplification:
    def test_table_lookup(self):
        table = {"漢": "汉", "語": "语"}
        assert traditional_to_simplified("漢語", table) == "汉语"

    def test_shipped_table(self):
        table = load_simplification_table()
        assert table["漢"] == "汉"
        assert traditional_to_simplified("漢", table) == "汉"

    def test_simplified_is_fixed_point(self):
        assert traditional_to_simplified("汉语") == "汉语"

    def test_empty(self):
        assert traditional_to_simplified("") == ""

    @given(st.text(alphabet="漢語汉语abc "))
    def test_length_preserved(self, text):
        assert len(traditional_to_simplified(text)) == len(text)

    def test_missing_table(self, tmp_path):
        with pytest.raises(MissingTable):
            load_simplification_table(tmp_path / "absent.tsv")

    def test_malformed_lines_are_skipped(self, tmp_path):
        path = tmp_path / "table.tsv"
        path.write_text("# comment\n漢\t汉\nbroken line\n語語\t语\n", encoding="utf-8")
        assert load_simplification_table(path) == {"漢": "汉"}


class TestNormalize:
    def test_control_chars(self):
        assert clean_control_chars("a\tb\x00c\r\nd") == "a bc d"

    def test_zh_chain(self):
        assert normalize_text("漢語&amp;ＡＢ", Lang.ZH) == "汉语&AB"

    def test_non_zh_keeps_fullwidth(self):
        assert normalize_text("ＡＢ &amp c", Lang.MS) == "ＡＢ & c"

    def test_sentence_rejects_control_chars(self):
        with pytest.raises(ValueError):
            Sentence("a\tb", Lang.MS)


class TestTokenize:
    def test_word(self):
        assert tokenize("saya makan nasi", "word") == ["saya", "makan", "nasi"]

    def test_char(self):
        assert tokenize("我吃饭", "char") == ["我", "吃", "饭"]

    def test_case_sensitive(self):
        assert tokenize("Ab aB", "word") == ["Ab", "aB"]

    def test_sentence_uses_text(self):
        assert tokenize(Sentence("我 吃", Lang.ZH), "char") == ["我", "吃"]

    @given(st.text())
    def test_char_length(self, text):
        assert len(tokenize(text, "char")) == sum(1 for ch in text if not ch.isspace())

    def test_detokenize(self):
        assert detokenize(["saya", "makan"], "word") == "saya makan"
        assert detokenize(["我", "吃"], "char") == "我吃"


class TestVocab:
    def test_frequency_order(self):
        vocab = build_vocab([["a", "b", "a"]], min_count=1)
        assert list(vocab.tokens) == SPECIALS + ["a", "b"]

    def test_threshold(self):
        vocab = build_vocab([["a", "b", "a"]], min_count=2)
        assert list(vocab.tokens) == SPECIALS + ["a"]

    def test_lexicographic_ties(self):
        vocab = build_vocab([["b", "a"]])
        assert list(vocab.tokens) == SPECIALS + ["a", "b"]

    def test_max_size(self):
        vocab = build_vocab([["a", "a", "b", "c"]], max_size=5)
        assert list(vocab.tokens) == SPECIALS + ["a"]

    def test_reserved_follow_specials(self):
        vocab = build_vocab([["a"]], reserved=(SEP_TOKEN,))
        assert list(vocab.tokens) == SPECIALS + [SEP_TOKEN, "a"]

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            build_vocab([["a"]], min_count=2)

    def test_encode_with_bos_eos(self):
        vocab = build_vocab([["a"]])
        assert encode(["a"], vocab, add_bos_eos=True) == [BOS, vocab.index["a"], EOS]

    def test_unknown_maps_to_unk(self):
        vocab = build_vocab([["a"]])
        assert encode(["zzz-not-in-vocab"], vocab) == [UNK]

    def test_decode_strips_specials(self):
        vocab = build_vocab([["a", "b"]])
        assert decode(encode(["a", "b"], vocab, True), vocab) == ["a", "b"]

    def test_decode_invalid_id(self):
        vocab = build_vocab([["a"]])
        with pytest.raises(InvalidId):
            decode([len(vocab)], vocab)

    @given(st.lists(st.lists(st.sampled_from(list("abcdefg")), min_size=1, max_size=8), min_size=1, max_size=6))
    def test_round_trip_in_vocab(self, corpus):
        vocab = build_vocab(corpus)
        for sentence in corpus:
            assert decode(encode(sentence, vocab), vocab) == sentence

    def test_deterministic(self):
        corpus = [["x", "y", "z", "y"], ["z", "w"]]
        assert build_vocab(corpus).tokens == build_vocab(corpus).tokens

    def test_index_is_inverse(self):
        vocab = build_vocab([["a", "b", "c"]])
        assert all(vocab.tokens[i] == t for t, i in vocab.index.items())
        assert sorted(vocab.index.values()) == list(range(len(vocab)))

    def test_save_load(self, tmp_path):
        vocab = build_vocab([["a", "b"]], reserved=(SEP_TOKEN,))
        save_vocab(vocab, tmp_path / "vocab.json")
        loaded = load_vocab(tmp_path / "vocab.json")
        assert loaded.tokens == vocab.tokens
        assert loaded.content_hash == vocab.content_hash


class TestCleanParallel:
    def test_drops_empty_duplicates_and_ratio(self):
        pairs = [
            (["a", "b"], ["x", "y"]),
            (["a", "b"], ["x", "y"]),
            ([], ["x"]),
            (["a"], ["x", "y", "z", "w"]),
        ]
        kept, dropped = clean_parallel(pairs, max_ratio=3.0)
        assert kept == [(["a", "b"], ["x", "y"])]
        assert dropped == 3

    def test_max_len(self):
        kept, dropped = clean_parallel([(["a"] * 5, ["b"] * 5)], max_len=4)
        assert kept == [] and dropped == 1
