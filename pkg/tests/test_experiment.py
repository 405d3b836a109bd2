import json

import numpy as np
import pytest

from app.core.errors import ArtifactWriteError, ConfigError, CorpusReadError, DataError, EmptyCorpus, PipelineError
from app.modules.decoding import Hypothesis
from app.modules.experiment import (
    COMPARISONS,
    DirectionConfig,
    ExperimentConfig,
    SyntheticTaskConfig,
    build_lexicon,
    comparison_configs,
    decode_split,
    generate_task,
    hypotheses_from_candidates,
    load_config,
    load_monolingual,
    load_parallel_tsv,
    parse_overrides,
    prepare_direction,
    read_submission,
    render,
    report_metrics,
    rung_configs,
    run_ablation,
    run_comparison,
    run_pipeline,
    write_submission,
    write_task,
)
from app.modules.experiment.services import component
from app.modules.experiment.synthetic import to_text
from app.modules.textproc import BOS, EOS
from app.shared.models import Lang, Sentence

SMALL_TASK = SyntheticTaskConfig(concepts=12, train_pairs=10, dev_pairs=3, test_pairs=2, mono_size=4, seed=3)

# shrinks the bundled toy config to a few seconds per pipeline run
QUICK = [
    "--synthetic.train_pairs=40",
    "--synthetic.dev_pairs=6",
    "--synthetic.test_pairs=4",
    "--synthetic.mono_size=8",
    "--train.epochs=1",
    "--rerank.epochs=1",
    "--rerank_pairs=8",
    "--backtrans.sample_size=4",
    "--curriculum.family_epochs=1",
    "--curriculum.short_epochs=1",
    "--curriculum.long_epochs=1",
    "--skipgram.epochs=1",
]


def write_tsv(path, rows):
    path.write_text("".join(f"{a}\t{b}\n" for a, b in rows), encoding="utf-8")
    return path


@pytest.fixture
def direction_files(tmp_path):
    rows = [("saya makan nasi", "我吃饭"), ("saya makan", "我吃"), ("nasi", "饭")]
    return {
        "train": write_tsv(tmp_path / "train.tsv", rows),
        "dev": write_tsv(tmp_path / "dev.tsv", rows[:2]),
    }


class TestLoaders:
    def test_crlf_and_malformed_lines(self, tmp_path):
        path = tmp_path / "pairs.tsv"
        path.write_bytes("saya makan\t我吃饭\r\nno tab here\nnasi &amp; air\t饭\r\na\tb\tc\n".encode("utf-8"))
        stats = {}
        pairs = load_parallel_tsv(path, "ms", "zh", stats)
        assert [(s.text, t.text) for s, t in pairs] == [("saya makan", "我吃饭"), ("nasi & air", "饭")]
        assert stats == {"skipped": 2, "pairs": 2}
        assert pairs[0][0].lang is Lang.MS and pairs[0][1].lang is Lang.ZH

    def test_fullwidth_target_is_folded(self, tmp_path):
        path = write_tsv(tmp_path / "pairs.tsv", [("saya", "我Ａ")])
        [(_, tgt)] = load_parallel_tsv(path, Lang.MS, Lang.ZH)
        assert tgt.text == "我A"

    def test_missing_file(self, tmp_path):
        with pytest.raises(CorpusReadError):
            load_parallel_tsv(tmp_path / "absent.tsv", "ms", "zh")

    def test_monolingual_skips_empty_lines(self, tmp_path):
        path = tmp_path / "mono.txt"
        path.write_text("我吃饭\n\n饭\n", encoding="utf-8")
        assert [s.text for s in load_monolingual(path, "zh")] == ["我吃饭", "饭"]


class TestSubmission:
    def test_round_trip(self, tmp_path):
        texts = ["a & b", "x<y", "汉语"]
        path = tmp_path / "out" / "submission.xml"
        write_submission(texts, path)
        assert read_submission(path) == texts
        xml = path.read_text(encoding="utf-8")
        assert '<seg id="1">a &amp; b</seg>' in xml
        assert "x&lt;y" in xml

    def test_existing_entity_reads_back_decoded(self, tmp_path):
        write_submission([Sentence("a &amp; b", Lang.MS)], tmp_path / "s.xml")
        assert read_submission(tmp_path / "s.xml") == ["a & b"]

    def test_empty_hypothesis(self, tmp_path):
        write_submission(["", "x"], tmp_path / "s.xml")
        assert read_submission(tmp_path / "s.xml") == ["", "x"]

    def test_unreadable(self, tmp_path):
        (tmp_path / "s.xml").write_text("<translations><seg", encoding="utf-8")
        with pytest.raises(CorpusReadError):
            read_submission(tmp_path / "s.xml")

    def test_unwritable(self, tmp_path):
        (tmp_path / "s.xml").mkdir()
        with pytest.raises(ArtifactWriteError):
            write_submission(["x"], tmp_path / "s.xml")


class TestOverrides:
    def test_dotted_keys_and_json_values(self):
        assert parse_overrides(["--train.epochs=4", "seed=1", "--name=demo", "--use_reranker=false"]) == {
            "train": {"epochs": 4},
            "seed": 1,
            "name": "demo",
            "use_reranker": False,
        }

    @pytest.mark.parametrize("arg", ["--train.epochs", "=3", "plain"])
    def test_malformed(self, arg):
        with pytest.raises(ConfigError):
            parse_overrides([arg])

    def test_scalar_is_not_a_section(self):
        with pytest.raises(ConfigError):
            parse_overrides(["--seed=1", "--seed.x=2"])


class TestConfig:
    def test_bundled_toy_config(self):
        cfg = load_config()
        assert cfg.name == "toy"
        assert cfg.synthetic is not None and not cfg.directions
        assert cfg.train.seed == cfg.seed + 1
        assert cfg.rerank.seed == cfg.seed + 6

    def test_overrides_apply(self):
        cfg = load_config(None, ["--seed=10", "--train.epochs=2", "--loss.name=ce"])
        assert cfg.train.epochs == 2
        assert cfg.loss.name == "ce"
        assert cfg.train.seed == 11
        assert cfg.synthetic.seed == 17

    def test_explicit_component_seed_wins(self):
        cfg = load_config(None, ["--train.seed=99"])
        assert cfg.train.seed == 99

    def test_with_seed_rederives_every_component(self):
        cfg = load_config(None, ["--train.seed=99"]).with_seed(5)
        assert cfg.seed == 5
        assert cfg.train.seed == 6
        assert cfg.model.seed == 5
        assert cfg.synthetic.seed == 12

    def test_decode_length_is_clamped(self):
        cfg = load_config(None, ["--decode.max_len=500"])
        assert cfg.decode.max_len == cfg.model.max_len

    def test_needs_data(self):
        with pytest.raises(ConfigError, match="either directions or synthetic"):
            load_config(None, ["--synthetic=null"])

    def test_missing_data_file(self, tmp_path, direction_files):
        path = tmp_path / "exp.json"
        direction = {"src_lang": "ms", "tgt_lang": "zh", "train": "nope.tsv", "dev": "dev.tsv"}
        path.write_text(json.dumps({"directions": [direction]}), encoding="utf-8")
        with pytest.raises(ConfigError, match="train"):
            load_config(path)

    def test_yaml_with_relative_paths(self, tmp_path, direction_files):
        path = tmp_path / "exp.yaml"
        path.write_text(
            "name: demo\nseed: 2\ndirections:\n"
            "  - {src_lang: ms, tgt_lang: zh, train: train.tsv, dev: dev.tsv}\n",
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert cfg.directions[0].train == direction_files["train"].resolve()
        assert cfg.directions[0].name == "ms-zh"
        assert cfg.skipgram.seed == 4

    def test_duplicate_directions(self, tmp_path, direction_files):
        direction = {"src_lang": "ms", "tgt_lang": "zh", "train": "train.tsv", "dev": "dev.tsv"}
        path = tmp_path / "exp.json"
        path.write_text(json.dumps({"directions": [direction, direction]}), encoding="utf-8")
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(path)

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "exp.yaml"
        path.write_text("name: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_top_level_must_be_mapping(self, tmp_path):
        path = tmp_path / "exp.json"
        path.write_text("[1, 2]", encoding="utf-8")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_missing_config_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_invalid_value(self):
        with pytest.raises(ConfigError, match="model"):
            load_config(None, ["--model.d_model=30", "--model.heads=4"])


class TestDirectionConfig:
    def test_names(self, direction_files):
        direction = DirectionConfig(src_lang="ms", tgt_lang="zh", **direction_files)
        assert direction.name == "ms-zh"
        assert direction.reverse_name == "zh-ms"
        assert set(direction.files()) == {"train", "dev"}

    def test_family_langs(self, direction_files):
        to_zh = DirectionConfig(src_lang="ms", tgt_lang="zh", family_lang="id", **direction_files)
        from_zh = DirectionConfig(src_lang="zh", tgt_lang="ms", family_lang="id", **direction_files)
        plain = DirectionConfig(src_lang="zh", tgt_lang="ms", **direction_files)
        assert to_zh.family_langs() == (Lang.ID, Lang.ZH)
        assert from_zh.family_langs() == (Lang.ZH, Lang.ID)
        assert plain.family_langs() == (Lang.ZH, Lang.MS)


class TestSynthetic:
    def test_lexicon_is_deterministic(self):
        a, b = build_lexicon(SMALL_TASK), build_lexicon(SMALL_TASK)
        assert a.ms == b.ms and a.id == b.id and a.zh == b.zh
        assert len(set(a.ms)) == SMALL_TASK.concepts
        assert len(set(a.id)) == SMALL_TASK.concepts

    def test_render_moves_modifiers(self):
        lexicon = build_lexicon(SMALL_TASK)
        # concept 3 is a modifier, 0 and 1 are not
        assert render([3, 0, 1], Lang.ZH, lexicon) == [lexicon.zh[3], lexicon.zh[0], lexicon.zh[1]]
        assert render([3, 0, 1], Lang.MS, lexicon) == [lexicon.ms[0], lexicon.ms[3], lexicon.ms[1]]
        assert render([0, 3], Lang.MS, lexicon) == [lexicon.ms[0], lexicon.ms[3]]

    def test_task_is_deterministic(self):
        a, b = generate_task(SMALL_TASK), generate_task(SMALL_TASK)
        assert a.splits == b.splits and a.mono == b.mono
        lengths = [len(c) for c in a.splits["ms"]["train"]]
        assert min(lengths) >= SMALL_TASK.min_len and max(lengths) <= SMALL_TASK.max_len

    def test_write_task(self, tmp_path):
        directions = write_task(generate_task(SMALL_TASK), SMALL_TASK, tmp_path)
        assert [d.name for d in directions] == ["zh-ms", "ms-zh", "zh-id", "id-zh"]
        for direction in directions:
            folder = tmp_path / direction.name
            for name in ("train.tsv", "dev.tsv", "test.tsv", "family.tsv", "mono.txt"):
                assert (folder / name).is_file()
        assert directions[1].family_lang is Lang.ID
        assert directions[3].family_lang is Lang.MS

    def test_written_files_load_cleanly(self, tmp_path):
        [_, ms_zh, _, _] = write_task(generate_task(SMALL_TASK), SMALL_TASK, tmp_path)
        cfg = ExperimentConfig(directions=[ms_zh], model={"max_len": 24})
        data = prepare_direction(ms_zh, cfg)
        assert len(data.train) == SMALL_TASK.train_pairs
        assert data.stats["skipped"] == 0
        assert len(data.family) == SMALL_TASK.train_pairs
        assert all(s.lang is Lang.ID and t.lang is Lang.ZH for s, t in data.family)
        assert all(s.lang is Lang.ZH for s in data.mono)

    def test_noise_only_touches_training_targets(self, tmp_path):
        cfg = SMALL_TASK.model_copy(update={"noise_rate": 0.5, "traditional_rate": 0.0})
        task = generate_task(cfg)
        [_, ms_zh, _, _] = write_task(task, cfg, tmp_path)

        def targets(path):
            return [line.split("\t")[1] for line in path.read_text(encoding="utf-8").splitlines()]

        def clean(split):
            return [to_text(render(c, Lang.ZH, task.lexicon), Lang.ZH) for c in task.splits["ms"][split]]

        assert targets(ms_zh.dev) == clean("dev")
        assert targets(ms_zh.test) == clean("test")
        assert targets(ms_zh.train) != clean("train")

    def test_min_len_order(self):
        with pytest.raises(ValueError):
            SyntheticTaskConfig(min_len=5, max_len=3)


class TestPipelinePieces:
    def test_prepare_direction_drops_long_pairs(self, tmp_path, direction_files):
        write_tsv(direction_files["train"], [("saya " * 30, "我吃饭"), ("saya makan", "我吃")])
        direction = DirectionConfig(src_lang="ms", tgt_lang="zh", **direction_files)
        cfg = ExperimentConfig(directions=[direction], model={"max_len": 16})
        data = prepare_direction(direction, cfg)
        assert data.stats["dropped"] == 1
        assert data.stats["cleaned"] == 1
        assert data.train_tokens == [(["saya", "makan"], ["我", "吃"])]

    def test_decode_split(self, tiny_translator):
        pairs = [(Sentence("saya makan", Lang.MS), Sentence("我吃", Lang.ZH)), (Sentence("nasi", Lang.MS), Sentence("饭", Lang.ZH))]
        hyps, records = decode_split(tiny_translator, pairs)
        assert len(hyps) == 2
        assert {r["sid"] for r in records} == {0, 1}
        first = [r for r in records if r["sid"] == 0]
        assert [r["rank"] for r in first] == list(range(len(first)))
        assert first[0]["text"] == hyps[0]

    def test_candidates_regroup(self, tiny_translator):
        _, records = decode_split(tiny_translator, [(Sentence("saya", Lang.MS), Sentence("我", Lang.ZH))])
        grouped = hypotheses_from_candidates(records)
        assert list(grouped) == [0]
        assert all(isinstance(h, Hypothesis) for h in grouped[0])

    def test_hypotheses_from_candidates_keeps_order(self):
        records = [
            {"sid": 1, "ids": [BOS, 4, EOS], "logprob": -1.0, "text": "b"},
            {"sid": 0, "ids": [BOS, 5, EOS], "logprob": -2.0, "text": "a"},
            {"sid": 1, "ids": [BOS, 6, EOS], "logprob": -3.0, "text": "c"},
        ]
        grouped = hypotheses_from_candidates(records)
        assert [h.text for h in grouped[1]] == ["b", "c"]
        assert [h.text for h in grouped[0]] == ["a"]

    def test_component_wraps_domain_errors(self):
        with pytest.raises(PipelineError) as info:
            with component("train", "ms-zh"):
                raise EmptyCorpus("nothing to train on")
        assert info.value.exit_code == DataError.exit_code
        assert info.value.stage == "ms-zh"
        assert "train" in str(info.value)

    def test_component_passes_other_errors(self):
        with pytest.raises(KeyError):
            with component("train", "ms-zh"):
                raise KeyError("bug")

    def test_report_metrics(self):
        report = {"directions": {}, "leaderboard_average": 1.0, "mean_dev_bleu": 1.0, "timings": {"x": 2.0}, "host": {}}
        assert report_metrics(report) == {"directions": {}, "leaderboard_average": 1.0, "mean_dev_bleu": 1.0}


class TestAblationConfigs:
    def test_rungs_are_cumulative(self):
        rungs = dict(rung_configs(load_config()))
        assert list(rungs) == ["baseline", "+augment", "+in_trust", "+curriculum", "+rerank"]
        base = rungs["baseline"]
        assert base.loss.name == "ce"
        assert not (base.use_augmentation or base.use_curriculum or base.use_reranker or base.use_backtranslation)
        assert rungs["+augment"].use_augmentation and rungs["+augment"].loss.name == "ce"
        assert rungs["+in_trust"].loss.name == "in_trust" and not rungs["+in_trust"].use_curriculum
        full = rungs["+rerank"]
        assert full.use_augmentation and full.use_curriculum and full.use_reranker
        assert full.loss.name == "in_trust"

    def test_needs_a_seed(self, tmp_path):
        with pytest.raises(ValueError):
            run_ablation(load_config(), [], tmp_path)


class TestComparisonConfigs:
    def test_in_trust_arms_differ_only_in_loss(self):
        without, with_ = comparison_configs(load_config(), "in_trust", 0.3)
        assert (without.loss.name, with_.loss.name) == ("ce", "in_trust")
        assert without.synthetic.noise_rate == with_.synthetic.noise_rate == 0.3
        for arm in (without, with_):
            assert not (arm.use_augmentation or arm.use_curriculum or arm.use_reranker or arm.use_backtranslation)
        assert without.model_dump(exclude={"loss"}) == with_.model_dump(exclude={"loss"})

    def test_augmentation_arm_expands_tenfold(self):
        without, with_ = comparison_configs(load_config(), "augmentation")
        assert not without.use_augmentation and with_.use_augmentation
        assert with_.augment.expansion_factor == 10
        assert without.loss.name == with_.loss.name == "ce"

    def test_curriculum_arms(self):
        without, with_ = comparison_configs(load_config(), "curriculum")
        assert not without.use_curriculum and with_.use_curriculum
        assert without.synthetic.noise_rate == load_config().synthetic.noise_rate

    def test_every_component_is_known(self):
        assert set(COMPARISONS) == {"in_trust", "augmentation", "curriculum"}
        with pytest.raises(ConfigError):
            comparison_configs(load_config(), "reranking")

    def test_noise_needs_the_synthetic_task(self):
        cfg = load_config().model_copy(update={"synthetic": None})
        with pytest.raises(ConfigError):
            comparison_configs(cfg, "in_trust", 0.3)

    def test_needs_a_seed(self, tmp_path):
        with pytest.raises(ValueError):
            run_comparison(load_config(), "in_trust", [], tmp_path)


@pytest.mark.slow
class TestPipelineRuns:
    def test_toy_pipeline(self, tmp_path):
        report = run_pipeline(load_config(None, QUICK), tmp_path / "run")
        assert list(report["directions"]) == ["zh-ms", "ms-zh", "zh-id", "id-zh"]
        assert report["leaderboard_average"] is not None
        assert 0.0 <= report["leaderboard_average"] <= 100.0
        for name, result in report["directions"].items():
            assert [m["stage"] for m in result["stage_metrics"]][0] == "family"
            submission = tmp_path / "run" / name / "submission.xml"
            assert len(read_submission(submission)) == 4
        manifest = json.loads((tmp_path / "run" / "manifest.json").read_text(encoding="utf-8"))
        assert "run_report.json" in manifest["files"]

    def test_same_seed_same_metrics(self, tmp_path):
        cfg = load_config(None, QUICK + ["--use_reranker=false", "--use_backtranslation=false"])
        first = run_pipeline(cfg, tmp_path / "a")
        second = run_pipeline(cfg, tmp_path / "b")
        assert report_metrics(first) == report_metrics(second)

    def test_ablation_smoke(self, tmp_path):
        cfg = load_config(None, QUICK + ["--use_backtranslation=false"])
        report = run_ablation(cfg, [0], tmp_path)
        assert [r["name"] for r in report["rungs"]] == ["baseline", "+augment", "+in_trust", "+curriculum", "+rerank"]
        assert set(report["checks"]) == {"augmentation", "in_trust", "curriculum", "reranking"}
        assert np.isfinite([r["mean"] for r in report["rungs"]]).all()
        assert (tmp_path / "ablation_report.json").is_file()


@pytest.mark.slow
class TestComparisons:
    """Direction of each component's effect on the toy task, mean over three seeds."""

    SEEDS = (0, 1, 2)

    def test_in_trust_holds_under_heavy_noise(self, tmp_path):
        report = run_comparison(load_config(None, ["--stage_dev_bleu=false"]), "in_trust", self.SEEDS, tmp_path)
        assert report["noise_rate"] == 0.3
        assert len(report["with"]["scores"]) == 3
        assert report["with"]["mean"] >= report["without"]["mean"]
        assert (tmp_path / "comparison_in_trust.json").is_file()

    def test_augmentation_holds(self, tmp_path):
        report = run_comparison(load_config(None, ["--stage_dev_bleu=false"]), "augmentation", self.SEEDS, tmp_path)
        assert report["holds"]

    def test_curriculum_holds(self, tmp_path):
        report = run_comparison(load_config(None, ["--stage_dev_bleu=false"]), "curriculum", self.SEEDS, tmp_path)
        assert report["holds"]
