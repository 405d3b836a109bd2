"""
Ablation ladder: each rung switches one more component on.

    baseline     cross-entropy, no augmentation, shuffled data, top-1 beam
    +augment     embedding-substitution augmentation
    +in_trust    In-trust loss instead of cross-entropy
    +curriculum  family -> short -> long schedule
    +rerank      contrastive re-ranking of diverse-beam candidates

Comparisons toggle a single component on top of the baseline instead, with
everything else held fixed, so its effect is read in isolation. The In-trust
comparison runs on heavily corrupted training targets; dev stays clean.
"""

from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from app.core.artifacts import ensure_dir, save_json
from app.core.errors import ConfigError

from .config import ExperimentConfig
from .services import run_pipeline

logger = logging.getLogger(__name__)

ABLATION_REPORT = "ablation_report.json"

RUNGS: Tuple[Tuple[str, Dict[str, Any]], ...] = (
    (
        "baseline",
        {
            "use_augmentation": False,
            "use_curriculum": False,
            "use_reranker": False,
            "use_backtranslation": False,
            "loss": {"name": "ce"},
        },
    ),
    ("+augment", {"use_augmentation": True}),
    ("+in_trust", {"loss": {"name": "in_trust"}}),
    ("+curriculum", {"use_curriculum": True}),
    ("+rerank", {"use_reranker": True}),
)

# component -> (rung without it, rung with it)
CHECKS: Dict[str, Tuple[str, str]] = {
    "augmentation": ("baseline", "+augment"),
    "in_trust": ("+augment", "+in_trust"),
    "curriculum": ("+in_trust", "+curriculum"),
    "reranking": ("+curriculum", "+rerank"),
}


# component -> (changes without it, changes with it), both applied over the baseline rung
COMPARISONS: Dict[str, Tuple[Dict[str, Any], Dict[str, Any]]] = {
    "in_trust": ({"loss": {"name": "ce"}}, {"loss": {"name": "in_trust"}}),
    "augmentation": ({"use_augmentation": False}, {"use_augmentation": True, "augment": {"expansion_factor": 10}}),
    "curriculum": ({"use_curriculum": False}, {"use_curriculum": True}),
}

# share of training target tokens corrupted when a comparison does not say otherwise
COMPARISON_NOISE: Dict[str, float] = {"in_trust": 0.3}


def _apply(data: Dict[str, Any], changes: Dict[str, Any]) -> None:
    for key, value in changes.items():
        if isinstance(value, dict):
            data[key] = {**(data.get(key) or {}), **value}
        else:
            data[key] = value


def rung_configs(cfg: ExperimentConfig) -> List[Tuple[str, ExperimentConfig]]:
    """Cumulative configs, one per rung."""
    data = cfg.model_dump(mode="json")
    out = []
    for name, changes in RUNGS:
        _apply(data, changes)
        out.append((name, ExperimentConfig.model_validate(data)))
    return out


def comparison_configs(
    cfg: ExperimentConfig, component: str, noise_rate: Optional[float] = None
) -> Tuple[ExperimentConfig, ExperimentConfig]:
    """
    (without, with) configs for one component over the baseline rung.

    noise_rate overrides the synthetic task's target noise; it needs the
    synthetic task since real corpora cannot be corrupted on demand.
    """
    if component not in COMPARISONS:
        raise ConfigError(f"unknown comparison {component!r} (have {', '.join(sorted(COMPARISONS))})")
    data = cfg.model_dump(mode="json")
    _apply(data, RUNGS[0][1])
    if noise_rate is not None:
        if data.get("synthetic") is None or data.get("directions"):
            raise ConfigError("a noise rate needs the synthetic task")
        _apply(data, {"synthetic": {"noise_rate": noise_rate}})
    without, with_ = COMPARISONS[component]
    arms = []
    for changes in (without, with_):
        arm = {key: dict(value) if isinstance(value, dict) else value for key, value in data.items()}
        _apply(arm, changes)
        arms.append(ExperimentConfig.model_validate(arm))
    return arms[0], arms[1]


def run_score(report: Dict[str, Any]) -> float:
    """Leaderboard average when all four directions ran, else the mean dev BLEU."""
    if report.get("leaderboard_average") is not None:
        return float(report["leaderboard_average"])
    return float(report.get("mean_dev_bleu") or 0.0)


def run_ablation(
    cfg: ExperimentConfig, seeds: Sequence[int] = (0, 1, 2), out_dir: Optional[Path] = None
) -> Dict[str, Any]:
    """
    Run every rung under every seed and report the mean score per rung plus
    whether each added component held or improved the score.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    out_dir = ensure_dir(Path(out_dir or cfg.output_dir / f"{cfg.name}-ablation"))
    scores: Dict[str, List[float]] = {name: [] for name, _ in RUNGS}
    for seed in seeds:
        for name, rung_cfg in rung_configs(cfg.with_seed(seed)):
            logger.info("Ablation rung %s, seed %d", name, seed)
            report = run_pipeline(rung_cfg, out_dir / name.lstrip("+") / f"seed_{seed}")
            scores[name].append(run_score(report))

    means = {name: math.fsum(values) / len(values) for name, values in scores.items()}
    checks = {
        component: {
            "without": means[before],
            "with": means[after],
            "delta": means[after] - means[before],
            "holds": means[after] >= means[before],
        }
        for component, (before, after) in CHECKS.items()
    }
    report = {
        "seeds": list(seeds),
        "rungs": [{"name": name, "scores": scores[name], "mean": means[name]} for name, _ in RUNGS],
        "checks": checks,
    }
    save_json(out_dir / ABLATION_REPORT, report)
    for name, _ in RUNGS:
        logger.info("%-12s mean %.2f", name, means[name])
    return report


def run_comparison(
    cfg: ExperimentConfig,
    component: str,
    seeds: Sequence[int] = (0, 1, 2),
    out_dir: Optional[Path] = None,
    noise_rate: Optional[float] = None,
) -> Dict[str, Any]:
    """
    Score the baseline with and without one component under every seed.

    noise_rate defaults to COMPARISON_NOISE for the component (None keeps the
    config's). The comparison holds when the mean score with the component is
    at least the mean without it.
    """
    if not seeds:
        raise ValueError("at least one seed is required")
    if noise_rate is None:
        noise_rate = COMPARISON_NOISE.get(component)
    out_dir = ensure_dir(Path(out_dir or cfg.output_dir / f"{cfg.name}-compare-{component}"))
    scores: Dict[str, List[float]] = {"without": [], "with": []}
    for seed in seeds:
        arms = comparison_configs(cfg.with_seed(seed), component, noise_rate)
        for arm, arm_cfg in zip(("without", "with"), arms):
            logger.info("Comparison %s (%s), seed %d", component, arm, seed)
            report = run_pipeline(arm_cfg, out_dir / arm / f"seed_{seed}")
            scores[arm].append(run_score(report))

    means = {arm: math.fsum(values) / len(values) for arm, values in scores.items()}
    report = {
        "component": component,
        "noise_rate": noise_rate,
        "seeds": list(seeds),
        "without": {"scores": scores["without"], "mean": means["without"]},
        "with": {"scores": scores["with"], "mean": means["with"]},
        "delta": means["with"] - means["without"],
        "holds": means["with"] >= means["without"],
    }
    save_json(out_dir / f"comparison_{component}.json", report)
    logger.info("%s: %.2f without, %.2f with", component, means["without"], means["with"])
    return report
