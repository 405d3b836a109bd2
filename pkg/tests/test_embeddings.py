import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from app.core.errors import CorpusReadError, UnknownToken, ZeroVector
from app.modules.embeddings import (
    AugmentConfig,
    EmbeddingTable,
    SkipgramConfig,
    augment_by_substitution,
    cosine_similarity,
    init_vectors,
    load_embeddings,
    nearest_neighbors,
    save_embeddings,
    train_skipgram,
)
from app.modules.textproc.vocab import SPECIAL_TOKENS, Vocabulary

CORPUS = [
    ["saya", "makan", "nasi", "goreng"],
    ["dia", "makan", "roti", "bakar"],
    ["saya", "minum", "teh", "panas"],
    ["dia", "minum", "kopi", "panas"],
] * 5


@pytest.fixture
def toy_table() -> EmbeddingTable:
    vocab = Vocabulary(SPECIAL_TOKENS + ("a", "b", "c", "d"))
    vectors = torch.tensor(
        [
            [0.3, 0.3],
            [0.2, -0.1],
            [0.1, 0.5],
            [0.4, 0.4],
            [1.0, 0.0],  # a
            [0.9, 0.1],  # b
            [-1.0, 0.0],  # c
            [0.9, 0.1],  # d
        ]
    )
    return EmbeddingTable(vocab, vectors)


class TestCosine:
    def test_identity(self):
        assert cosine_similarity([1.0, 2.0], [1.0, 2.0]) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert cosine_similarity([1.0, 0.0], [0.0, 3.0]) == pytest.approx(0.0)

    def test_opposite(self):
        assert cosine_similarity([1.0, 1.0], [-2.0, -2.0]) == pytest.approx(-1.0)

    def test_zero_vector(self):
        with pytest.raises(ZeroVector):
            cosine_similarity([0.0, 0.0], [1.0, 0.0])

    def test_size_mismatch(self):
        with pytest.raises(ValueError):
            cosine_similarity([1.0, 0.0], [1.0, 0.0, 0.0])

    @given(
        st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
        st.lists(st.floats(-10, 10), min_size=3, max_size=3).filter(lambda v: any(abs(x) > 1e-3 for x in v)),
    )
    def test_bounded_and_symmetric(self, u, v):
        sim = cosine_similarity(u, v)
        assert -1.0 <= sim <= 1.0
        assert sim == pytest.approx(cosine_similarity(v, u))


class TestNearestNeighbors:
    def test_ranking_excludes_query_and_specials(self, toy_table):
        tokens = [t for t, _ in nearest_neighbors(toy_table, "a", 3)]
        assert tokens == ["b", "d", "c"]

    def test_ties_keep_vocabulary_order(self, toy_table):
        assert [t for t, _ in nearest_neighbors(toy_table, "a", 2)] == ["b", "d"]

    def test_similarities_are_cosines(self, toy_table):
        [(token, sim)] = nearest_neighbors(toy_table, "c", 1)
        assert token == "b"
        assert sim == pytest.approx(cosine_similarity([-1.0, 0.0], [0.9, 0.1]))

    def test_unknown_token(self, toy_table):
        with pytest.raises(UnknownToken):
            nearest_neighbors(toy_table, "zzz", 1)

    def test_invalid_k(self, toy_table):
        with pytest.raises(ValueError):
            nearest_neighbors(toy_table, "a", 0)

    def test_k_larger_than_vocabulary(self, toy_table):
        assert len(nearest_neighbors(toy_table, "a", 100)) == 3


class TestSkipgram:
    def test_zero_epochs_returns_initial_vectors(self):
        cfg = SkipgramConfig(dim=8, epochs=0, seed=11)
        table = train_skipgram(CORPUS, cfg)
        assert torch.equal(table.vectors, init_vectors(len(table.vocab), 8, 11))

    def test_deterministic(self):
        cfg = SkipgramConfig(dim=8, epochs=2, window=2, seed=3)
        first = train_skipgram(CORPUS, cfg)
        second = train_skipgram(CORPUS, cfg)
        assert first.vocab.tokens == second.vocab.tokens
        assert torch.equal(first.vectors, second.vectors)

    def test_seed_changes_vectors(self):
        a = train_skipgram(CORPUS, SkipgramConfig(dim=8, epochs=1, seed=0))
        b = train_skipgram(CORPUS, SkipgramConfig(dim=8, epochs=1, seed=1))
        assert not torch.equal(a.vectors, b.vectors)

    def test_loss_decreases(self):
        history = []
        train_skipgram(CORPUS, SkipgramConfig(dim=16, epochs=8, window=2, lr=0.1, batch_size=16, seed=0), history)
        assert len(history) == 8
        assert history[-1] < history[0]

    def test_shape(self):
        table = train_skipgram(CORPUS, SkipgramConfig(dim=12, epochs=1))
        assert table.vectors.shape == (len(table.vocab), 12)
        assert table.dim == 12


class TestAugment:
    def test_expansion_and_targets(self, toy_table):
        pairs = [(["a", "c"], ["x", "y"]), (["d"], ["z"])]
        out = augment_by_substitution(pairs, toy_table, AugmentConfig(expansion_factor=4, top_k=1))
        assert len(out) == 8
        assert out[0] == pairs[0] and out[4] == pairs[1]
        assert all(tgt == ["x", "y"] for _, tgt in out[:4])
        assert all(tgt == ["z"] for _, tgt in out[4:])

    def test_substitutes_with_close_neighbour(self, toy_table):
        out = augment_by_substitution([(["a"], ["x"])], toy_table, AugmentConfig(expansion_factor=3, top_k=1))
        assert [src for src, _ in out] == [["a"], ["b"], ["b"]]

    def test_token_without_close_neighbour_is_kept(self, toy_table):
        # the only neighbour of c points the other way
        cfg = AugmentConfig(expansion_factor=3, top_k=1, min_similarity=0.5)
        out = augment_by_substitution([(["c"], ["x"])], toy_table, cfg)
        assert all(src == ["c"] for src, _ in out)

    def test_out_of_vocabulary_tokens_untouched(self, toy_table):
        out = augment_by_substitution([(["oov"], ["x"])], toy_table, AugmentConfig(expansion_factor=2))
        assert out == [(["oov"], ["x"]), (["oov"], ["x"])]

    def test_no_substitutions(self, toy_table):
        cfg = AugmentConfig(expansion_factor=3, substitutions_per_sentence=0)
        out = augment_by_substitution([(["a", "b"], ["x"])], toy_table, cfg)
        assert out == [(["a", "b"], ["x"])] * 3

    def test_factor_one_is_identity(self, toy_table):
        pairs = [(["a"], ["x"]), (["b"], ["y"])]
        assert augment_by_substitution(pairs, toy_table, AugmentConfig(expansion_factor=1)) == pairs

    def test_deterministic(self, toy_table):
        pairs = [(["a", "b", "d"], ["x"])] * 3
        cfg = AugmentConfig(expansion_factor=5, top_k=2, seed=9)
        assert augment_by_substitution(pairs, toy_table, cfg) == augment_by_substitution(pairs, toy_table, cfg)


class TestStorage:
    def test_round_trip(self, tmp_path):
        table = train_skipgram(CORPUS, SkipgramConfig(dim=6, epochs=1))
        save_embeddings(table, tmp_path / "vec" / "embeddings.txt")
        loaded = load_embeddings(tmp_path / "vec" / "embeddings.txt")
        assert loaded.vocab.tokens == table.vocab.tokens
        assert torch.equal(loaded.vectors, table.vectors)

    def test_bad_header(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("not-a-header\n", encoding="utf-8")
        with pytest.raises(CorpusReadError):
            load_embeddings(path)

    def test_row_count_mismatch(self, tmp_path):
        path = tmp_path / "short.txt"
        path.write_text("5 2\n<pad> 0 0\n", encoding="utf-8")
        with pytest.raises(CorpusReadError):
            load_embeddings(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusReadError):
            load_embeddings(tmp_path / "absent.txt")
