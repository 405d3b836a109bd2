"""
Experiment configuration: one pydantic model tree loaded from JSON or YAML,
with --dotted.key=value overrides from the command line.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import yaml
from pydantic import BaseModel, Field, ValidationError, model_validator

from app.config import settings
from app.core.errors import ConfigError
from app.modules.curriculum import BacktransConfig, CurriculumConfig
from app.modules.decoding import DecodeConfig
from app.modules.embeddings import AugmentConfig, SkipgramConfig
from app.modules.losses import LossConfig
from app.modules.nnet import TrainConfig
from app.modules.reranker import RerankConfig
from app.shared.models import Lang

logger = logging.getLogger(__name__)

# component seed = top-level seed + offset, unless the file sets it
SEED_OFFSETS: Dict[str, int] = {
    "model": 0,
    "train": 1,
    "skipgram": 2,
    "augment": 3,
    "backtrans": 4,
    "curriculum": 5,
    "rerank": 6,
    "synthetic": 7,
}


class ModelDims(BaseModel):
    """Translation model dimensions; vocabulary sizes come from the data."""

    d_model: int = Field(64, ge=2)
    heads: int = Field(4, ge=1)
    d_ff: int = Field(128, ge=1)
    enc_layers: int = Field(2, ge=1)
    dec_layers: int = Field(2, ge=1)
    max_len: int = Field(64, ge=4, description="Longest sequence, BOS/EOS included")
    seed: int = 0

    @model_validator(mode="after")
    def _heads_divide_model(self) -> "ModelDims":
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        return self


class DirectionConfig(BaseModel):
    """One translation direction and its data files."""

    src_lang: Lang
    tgt_lang: Lang
    train: Path = Field(..., description="Parallel TSV, SRC<TAB>TGT per line")
    dev: Path = Field(..., description="Parallel TSV scored after every stage")
    test: Optional[Path] = Field(None, description="Parallel TSV decoded into the submission")
    family: Optional[Path] = Field(None, description="Related-language pairs for the first curriculum stage")
    family_lang: Optional[Lang] = Field(
        None, description="Language on the non-zh side of the family pairs (default: this direction's)"
    )
    mono: Optional[Path] = Field(None, description="Target-language monolingual text for back-translation")

    @property
    def name(self) -> str:
        return f"{self.src_lang.value}-{self.tgt_lang.value}"

    @property
    def reverse_name(self) -> str:
        return f"{self.tgt_lang.value}-{self.src_lang.value}"

    def family_langs(self) -> Tuple[Lang, Lang]:
        sibling = self.family_lang
        if sibling is None:
            return self.src_lang, self.tgt_lang
        if self.src_lang is Lang.ZH:
            return self.src_lang, sibling
        return sibling, self.tgt_lang

    def files(self) -> Dict[str, Path]:
        names = ("train", "dev", "test", "family", "mono")
        return {n: getattr(self, n) for n in names if getattr(self, n) is not None}


class SyntheticTaskConfig(BaseModel):
    """Generator settings for the bundled synthetic zh/ms/id task."""

    concepts: int = Field(40, ge=8, description="Lexicon size shared by the three languages")
    train_pairs: int = Field(300, ge=1)
    dev_pairs: int = Field(50, ge=1)
    test_pairs: int = Field(50, ge=0)
    mono_size: int = Field(100, ge=0, description="Monolingual sentences per language")
    min_len: int = Field(3, ge=1)
    max_len: int = Field(8, ge=1)
    noise_rate: float = Field(0.0, ge=0, le=1, description="Target tokens replaced in training splits")
    traditional_rate: float = Field(0.1, ge=0, le=1, description="Pivot characters written in traditional form")
    sibling_overlap: float = Field(0.7, ge=0, le=1, description="Share of ms words the sibling keeps")
    zipf: float = Field(1.1, ge=0, description="Exponent of the concept frequency distribution")
    seed: int = 0

    @model_validator(mode="after")
    def _length_order(self) -> "SyntheticTaskConfig":
        if self.min_len > self.max_len:
            raise ValueError("min_len must be <= max_len")
        return self


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    seed: int = 0
    output_dir: Path = Field(default_factory=lambda: settings.OUTPUT_DIR)
    directions: List[DirectionConfig] = Field(default_factory=list)
    synthetic: Optional[SyntheticTaskConfig] = Field(
        None, description="Generate the synthetic task when no directions are given"
    )

    model: ModelDims = Field(default_factory=ModelDims)
    skipgram: SkipgramConfig = Field(default_factory=SkipgramConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    decode: DecodeConfig = Field(default_factory=DecodeConfig)
    rerank: RerankConfig = Field(default_factory=RerankConfig)
    curriculum: CurriculumConfig = Field(default_factory=CurriculumConfig)
    backtrans: BacktransConfig = Field(default_factory=BacktransConfig)

    use_augmentation: bool = True
    use_backtranslation: bool = False
    use_curriculum: bool = True
    use_reranker: bool = True
    max_ratio: float = Field(3.0, gt=0, description="Longest allowed token-length ratio within a pair")
    rerank_pairs: int = Field(200, ge=1, description="Training pairs used to mine reranker triples")
    stage_dev_bleu: bool = Field(True, description="Score dev after every curriculum stage")

    @model_validator(mode="before")
    @classmethod
    def _propagate_seed(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        seed = int(data.get("seed", 0))
        for key, offset in SEED_OFFSETS.items():
            section = data.get(key)
            if section is None and key == "synthetic":
                continue
            if section is None:
                data[key] = {"seed": seed + offset}
            elif isinstance(section, dict) and "seed" not in section:
                data[key] = {**section, "seed": seed + offset}
        return data

    @model_validator(mode="after")
    def _check_data(self) -> "ExperimentConfig":
        if not self.directions and self.synthetic is None:
            raise ValueError("either directions or synthetic must be given")
        names = [d.name for d in self.directions]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate directions in {names}")
        for direction in self.directions:
            for key, path in direction.files().items():
                if not path.is_file():
                    raise ValueError(f"{direction.name}.{key}: file not found: {path}")
        # hypotheses must fit the model that scores them
        if self.decode.max_len > self.model.max_len:
            self.decode = self.decode.model_copy(update={"max_len": self.model.max_len})
        return self

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """A copy whose every component seed is re-derived from `seed`."""
        data = self.model_dump(mode="json")
        data["seed"] = seed
        for key in SEED_OFFSETS:
            if isinstance(data.get(key), dict):
                data[key].pop("seed", None)
        return ExperimentConfig.model_validate(data)


def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {dotted}: '{part}' is not a section")
        node = child
    node[parts[-1]] = value


def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_overrides(args: Sequence[str]) -> Dict[str, Any]:
    """["--train.epochs=4", "seed=1"] -> {"train": {"epochs": 4}, "seed": 1}"""
    result: Dict[str, Any] = {}
    for arg in args:
        text = arg[2:] if arg.startswith("--") else arg
        key, sep, raw = text.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like --key=value, got {arg!r}")
        _set_dotted(result, key, _parse_value(raw))
    return result


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def read_config_file(path: Path) -> Dict[str, Any]:
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() in (".yaml", ".yml"):
            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a mapping at the top level")
    return data


def _resolve_paths(data: Dict[str, Any], base: Path) -> None:
    """Relative data paths are taken from the config file's directory."""
    for direction in data.get("directions") or []:
        if not isinstance(direction, dict):
            continue
        for key in ("train", "dev", "test", "family", "mono"):
            value = direction.get(key)
            if isinstance(value, str) and not Path(value).is_absolute():
                direction[key] = str(base / value)


def build_config(data: Dict[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or '<root>'}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid experiment config: {problems}") from exc


def load_config(path: Optional[Path] = None, overrides: Sequence[str] = ()) -> ExperimentConfig:
    """Read the config file (default: the bundled toy config) and apply overrides."""
    path = Path(path) if path is not None else settings.TOY_CONFIG
    data = read_config_file(path)
    _resolve_paths(data, path.resolve().parent)
    data = _merge(data, parse_overrides(overrides))
    cfg = build_config(data)
    logger.info("Loaded config %s (%s, seed %d)", path, cfg.name, cfg.seed)
    return cfg
