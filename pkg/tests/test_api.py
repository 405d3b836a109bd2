import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from app.cli import cli
from app.core.artifacts import read_jsonl
from app.main import app, load_translators
from app.modules.experiment import read_submission


@pytest.fixture
def client(tiny_translator):
    app.state.translators = {"ms-zh": tiny_translator}
    yield TestClient(app)
    app.state.translators = {}


@pytest.fixture
def runner():
    return CliRunner()


class TestHttp:
    def test_root_lists_translators(self, client):
        body = client.get("/").json()
        assert body["translators"] == ["ms-zh"]

    def test_bleu(self, client):
        line = "saya makan nasi goreng"
        response = client.post("/bleu", json={"hyps": [line], "refs": [line]})
        assert response.status_code == 200
        assert response.json()["bleu"] == pytest.approx(100.0)

    def test_bleu_char_mode(self, client):
        response = client.post("/bleu", json={"hyps": ["我吃饭了"], "refs": ["我吃饭了"], "mode": "char"})
        assert response.json()["bleu"] == pytest.approx(100.0)

    def test_bleu_length_mismatch(self, client):
        response = client.post("/bleu", json={"hyps": ["a"], "refs": []})
        assert response.status_code == 400

    def test_bleu_empty_corpus(self, client):
        assert client.post("/bleu", json={"hyps": [], "refs": []}).status_code == 400

    def test_bleu_bad_mode(self, client):
        assert client.post("/bleu", json={"hyps": ["a"], "refs": ["a"], "mode": "bpe"}).status_code == 422

    def test_translate(self, client):
        response = client.post("/translate", json={"src_lang": "ms", "tgt_lang": "zh", "text": "saya makan"})
        assert response.status_code == 200
        assert set(response.json()["text"]) <= set("我吃饭")

    def test_unknown_direction(self, client):
        response = client.post("/translate", json={"src_lang": "zh", "tgt_lang": "ms", "text": "我"})
        assert response.status_code == 404


class TestLoadTranslators:
    def test_missing_dir(self, tmp_path):
        assert load_translators(tmp_path / "absent") == {}
        assert load_translators(None) == {}

    def test_finds_saved_translators(self, tmp_path, tiny_translator):
        tiny_translator.save(tmp_path / "ms-zh" / "translator")
        (tmp_path / "broken" / "translator").mkdir(parents=True)
        assert list(load_translators(tmp_path)) == ["ms-zh"]


MONO = "saya makan nasi\nsaya makan\nnasi goreng enak\nsaya suka nasi goreng\n" * 5
PAIRS_TSV = "saya makan nasi\t我吃饭\nsaya makan\t我吃\nnasi\t饭\n"


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


@pytest.fixture
def vectors(runner, tmp_path):
    mono = write(tmp_path / "mono.txt", MONO)
    out = tmp_path / "ms.vec"
    result = runner.invoke(
        cli, ["embed", "train", "--mono", mono, "--lang", "ms", "--out", str(out), "--dim", "8", "--epochs", "1"]
    )
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture
def candidates(runner, tmp_path, tiny_translator):
    tiny_translator.save(tmp_path / "translator")
    src = write(tmp_path / "src.txt", "saya makan\nnasi\n")
    out = tmp_path / "cands.jsonl"
    result = runner.invoke(
        cli,
        ["decode", "--model", str(tmp_path / "translator"), "--input", src, "--mode", "diverse", "--out", str(out)],
    )
    assert result.exit_code == 0, result.output
    return out


class TestCli:
    def test_bleu(self, runner, tmp_path):
        hyp = write(tmp_path / "hyp.txt", "saya makan nasi goreng\n")
        ref = write(tmp_path / "ref.txt", "saya makan nasi goreng\n")
        result = runner.invoke(cli, ["--log-level", "ERROR", "bleu", "--hyp", hyp, "--ref", ref])
        assert result.exit_code == 0
        assert '"bleu": 100.0' in result.output

    def test_bleu_char_mode_and_scale(self, runner, tmp_path):
        hyp = write(tmp_path / "hyp.txt", "我吃饭了\n")
        result = runner.invoke(
            cli, ["--log-level", "ERROR", "bleu", "--hyp", hyp, "--ref", hyp, "--mode", "char", "--scale", "1"]
        )
        assert result.exit_code == 0
        assert '"bleu": 1.0' in result.output

    def test_bleu_files_are_named_options(self, runner, tmp_path):
        hyp = write(tmp_path / "hyp.txt", "a\n")
        assert runner.invoke(cli, ["bleu", hyp, hyp]).exit_code == 2

    def test_bleu_length_mismatch_is_a_data_error(self, runner, tmp_path):
        hyp = write(tmp_path / "hyp.txt", "a\nb\n")
        ref = write(tmp_path / "ref.txt", "a\n")
        result = runner.invoke(cli, ["bleu", "--hyp", hyp, "--ref", ref])
        assert result.exit_code == 3

    def test_missing_config_is_a_config_error(self, runner, tmp_path):
        result = runner.invoke(cli, ["pipeline", "--config", str(tmp_path / "absent.json")])
        assert result.exit_code == 2

    def test_bad_override_is_a_config_error(self, runner, tmp_path):
        result = runner.invoke(cli, ["pipeline", "--out", str(tmp_path), "--model.d_model=30", "--model.heads=4"])
        assert result.exit_code == 2

    def test_prep(self, runner, tmp_path):
        src = write(tmp_path / "in.tsv", "saya makan\t我吃\nbroken\nsaya makan\t我吃\n")
        out = tmp_path / "clean.tsv"
        result = runner.invoke(cli, ["prep", src, "--src-lang", "ms", "--tgt-lang", "zh", "--out", str(out)])
        assert result.exit_code == 0
        assert out.read_text(encoding="utf-8") == "saya makan\t我吃\n"

    def test_submit(self, runner, tmp_path):
        hyp = write(tmp_path / "hyp.txt", "a & b\n汉语\n")
        out = tmp_path / "submission.xml"
        result = runner.invoke(cli, ["submit", hyp, "--out", str(out)])
        assert result.exit_code == 0
        assert read_submission(out) == ["a & b", "汉语"]

    def test_embed_train(self, vectors):
        header = vectors.read_text(encoding="utf-8").splitlines()[0]
        assert header.split()[1] == "8"

    def test_embed_train_rejected_option_is_a_config_error(self, runner, tmp_path):
        mono = write(tmp_path / "mono.txt", MONO)
        result = runner.invoke(
            cli, ["embed", "train", "--mono", mono, "--lang", "ms", "--out", str(tmp_path / "v"), "--dim", "0"]
        )
        assert result.exit_code == 2
        assert not (tmp_path / "v").exists()

    def test_embed_nn(self, runner, vectors):
        result = runner.invoke(
            cli, ["--log-level", "ERROR", "embed", "nn", "--table", str(vectors), "--word", "saya", "--k", "2"]
        )
        assert result.exit_code == 0
        lines = result.output.strip().splitlines()
        assert len(lines) == 2
        assert all(line.split("\t")[0] != "saya" for line in lines)

    def test_embed_nn_unknown_word_is_a_data_error(self, runner, vectors):
        result = runner.invoke(cli, ["embed", "nn", "--table", str(vectors), "--word", "tidak-ada"])
        assert result.exit_code == 3

    def test_embed_nn_k_must_be_positive(self, runner, vectors):
        result = runner.invoke(cli, ["embed", "nn", "--table", str(vectors), "--word", "saya", "--k", "0"])
        assert result.exit_code == 2

    def test_augment(self, runner, tmp_path, vectors):
        src = write(tmp_path / "in.tsv", "saya makan nasi\t我吃饭\nnasi goreng\t炒饭\n")
        out = tmp_path / "aug.tsv"
        result = runner.invoke(
            cli,
            [
                "augment", src, "--src-lang", "ms", "--tgt-lang", "zh", "--embeddings", str(vectors),
                "--out", str(out), "--factor", "3", "--min-similarity", "-1",
            ],
        )
        assert result.exit_code == 0
        rows = out.read_text(encoding="utf-8").splitlines()
        assert len(rows) == 6
        assert [row.split("\t")[1] for row in rows] == ["我吃饭"] * 3 + ["炒饭"] * 3

    def test_augment_zero_factor_is_a_config_error(self, runner, tmp_path, vectors):
        src = write(tmp_path / "in.tsv", "saya makan\t我吃\n")
        result = runner.invoke(
            cli,
            [
                "augment", src, "--src-lang", "ms", "--tgt-lang", "zh", "--embeddings", str(vectors),
                "--out", str(tmp_path / "aug.tsv"), "--factor", "0",
            ],
        )
        assert result.exit_code == 2

    def test_decode(self, runner, tmp_path, tiny_translator):
        tiny_translator.save(tmp_path / "translator")
        src = write(tmp_path / "src.txt", "saya makan\nnasi\n")
        result = runner.invoke(
            cli,
            [
                "decode", "--model", str(tmp_path / "translator"), "--input", src, "--mode", "diverse",
                "--out", str(tmp_path / "cands.jsonl"), "--hyp-out", str(tmp_path / "hyp.txt"),
            ],
        )
        assert result.exit_code == 0
        assert len((tmp_path / "hyp.txt").read_text(encoding="utf-8").splitlines()) == 2
        records = list(read_jsonl(tmp_path / "cands.jsonl"))
        assert {r["sid"] for r in records} == {0, 1}
        assert all(r["text"] is not None for r in records)

    def test_decode_nbest(self, runner, tmp_path, tiny_translator):
        tiny_translator.save(tmp_path / "translator")
        src = write(tmp_path / "src.txt", "saya makan\n")
        out = tmp_path / "cands.jsonl"
        result = runner.invoke(
            cli, ["decode", "--model", str(tmp_path / "translator"), "--input", src, "--nbest", "1", "--out", str(out)]
        )
        assert result.exit_code == 0
        assert len(list(read_jsonl(out))) == 1

    def test_rerank_train_and_apply(self, runner, tmp_path, candidates):
        pairs = write(tmp_path / "train.tsv", PAIRS_TSV)
        result = runner.invoke(
            cli,
            [
                "rerank", "train", "--pairs", pairs, "--translator", str(tmp_path / "translator"),
                "--out", str(tmp_path / "reranker"), "--epochs", "1", "--negatives", "2",
            ],
        )
        assert result.exit_code == 0, result.output
        ranked_path = tmp_path / "ranked.jsonl"
        result = runner.invoke(
            cli,
            [
                "rerank", "apply", "--encoder", str(tmp_path / "reranker"), "--candidates", str(candidates),
                "--out", str(ranked_path), "--hyp-out", str(tmp_path / "hyp.txt"),
            ],
        )
        assert result.exit_code == 0, result.output
        ranked = list(read_jsonl(ranked_path))
        assert len(ranked) == len(list(read_jsonl(candidates)))
        for sid in (0, 1):
            scores = [r["score"] for r in ranked if r["sid"] == sid]
            assert scores == sorted(scores, reverse=True)
        best = (tmp_path / "hyp.txt").read_text(encoding="utf-8").splitlines()
        assert best == [next(r["text"] for r in ranked if r["sid"] == sid) for sid in (0, 1)]

    def test_rerank_apply_missing_encoder_is_a_data_error(self, runner, tmp_path, candidates):
        result = runner.invoke(
            cli,
            [
                "rerank", "apply", "--encoder", str(tmp_path / "absent"), "--candidates", str(candidates),
                "--out", str(tmp_path / "ranked.jsonl"),
            ],
        )
        assert result.exit_code == 3

    def test_train(self, runner, tmp_path):
        result = runner.invoke(
            cli,
            [
                "train", "--direction", "ms-zh", "--out", str(tmp_path),
                "--synthetic.train_pairs=30", "--train.epochs=1", "--use_augmentation=false",
                "--use_backtranslation=false", "--use_curriculum=false",
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmp_path / "ms-zh" / "translator").is_dir()

    def test_train_unknown_direction_is_a_data_error(self, runner, tmp_path):
        result = runner.invoke(cli, ["train", "--direction", "xx-yy", "--out", str(tmp_path)])
        assert result.exit_code == 3

    def test_ablation_seeds_must_be_integers(self, runner, tmp_path):
        result = runner.invoke(cli, ["ablation", "--seeds", "a,b", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_compare_unknown_component(self, runner, tmp_path):
        result = runner.invoke(cli, ["compare", "--component", "reranking", "--out", str(tmp_path)])
        assert result.exit_code == 2

    def test_compare_noise_rate_is_bounded(self, runner, tmp_path):
        result = runner.invoke(
            cli, ["compare", "--component", "in_trust", "--noise-rate", "1.5", "--out", str(tmp_path)]
        )
        assert result.exit_code == 2
