"""Declarative experiment configuration.

A config is a single JSON file; unknown keys anywhere are hard errors so a
typo cannot silently corrupt a sweep. Every omitted field takes a default,
and the fully resolved dictionary is what lands in the run manifest, which
therefore reproduces the run on its own.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from . import nn
from .data import FullData, SessionPlan, SyntheticSpec, generate_synthetic, load_flatfile, make_plan
from .engine import NovelTrainConfig, UpdateMode
from .errors import ConfigError
from .numcore import Rng

DEFAULT_SEEDS = (1, 2, 3, 4, 5)

_PLAN_KEYS = {"profile", "K", "n", "k", "S", "seed"}
_SYNTH_KEYS = {"input_dim", "mean_radius", "noise_sigma", "train_per_class", "test_per_class"}
_FLATFILE_KEYS = {"train_csv", "test_csv"}
_EXTRACTOR_KEYS = {"hidden_dims", "feature_dim", "with_norm"}
_BASE_KEYS = {
    "epochs", "batch_size", "lr", "momentum", "nesterov", "weight_decay",
    "milestones", "gamma", "label_smoothing",
}
_NOVEL_KEYS = {"steps", "lr", "momentum", "weight_decay"}
_TOP_KEYS = {"plan", "data", "extractor", "base", "novel", "modes", "epsilons", "seeds"}

DEFAULT_BASE = dict(
    epochs=20, batch_size=64, lr=0.1, momentum=0.9, nesterov=True,
    weight_decay=5e-4, milestones=[12, 16], gamma=0.1, label_smoothing=0.0,
)
DEFAULT_NOVEL = dict(steps=100, lr=0.01, momentum=0.9, weight_decay=0.0)
DEFAULT_EXTRACTOR = dict(hidden_dims=[64], feature_dim=128, with_norm=True)
DEFAULT_PLAN = dict(profile="cifar-like", seed=0)
DEFAULT_SYNTHETIC = dict(
    input_dim=32, mean_radius=6.0, noise_sigma=1.0, train_per_class=100, test_per_class=50
)


@dataclass(frozen=True)
class FlatfilePaths:
    train_csv: str
    test_csv: str


@dataclass
class ExperimentConfig:
    plan: SessionPlan
    data_source: SyntheticSpec | FlatfilePaths
    arch_hidden: tuple[int, ...]
    arch_feature_dim: int
    arch_with_norm: bool
    base_cfg: nn.TrainConfig
    novel_cfg: NovelTrainConfig
    modes: list[UpdateMode]
    epsilons: list[float]
    epsilons_explicit: bool
    seeds: list[int]
    resolved: dict

    def arch(self, input_dim: int) -> nn.ExtractorArch:
        return nn.ExtractorArch(
            input_dim, self.arch_hidden, self.arch_feature_dim, self.arch_with_norm
        )

    def base_cfg_with_smoothing(self, eps: float) -> nn.TrainConfig:
        resolved = dict(self.resolved["base"])
        resolved["label_smoothing"] = eps
        return nn.TrainConfig(**resolved)


def _check_keys(section: dict, allowed: set[str], where: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _as_list(value, what: str) -> list:
    if isinstance(value, (str, int, float)):
        return [value]
    if isinstance(value, list) and value:
        return value
    raise ConfigError(f"{what} must be a value or a non-empty list")


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    # A manifest embeds the resolved config; accept it directly.
    if "config" in raw and "format_version" in raw:
        return config_from_dict(raw["config"])
    _check_keys(raw, _TOP_KEYS, "config")

    plan_raw = {**DEFAULT_PLAN, **raw.get("plan", {})}
    _check_keys(raw.get("plan", {}), _PLAN_KEYS, "plan")
    profile = plan_raw.pop("profile")
    plan = make_plan(profile, **plan_raw)

    data_raw = raw.get("data", {"synthetic": {}})
    _check_keys(data_raw, {"synthetic", "flatfile"}, "data")
    if len(data_raw) != 1:
        raise ConfigError("data must contain exactly one of 'synthetic' or 'flatfile'")
    if "synthetic" in data_raw:
        _check_keys(data_raw["synthetic"], _SYNTH_KEYS, "data.synthetic")
        synth = {**DEFAULT_SYNTHETIC, **data_raw["synthetic"]}
        source: SyntheticSpec | FlatfilePaths = SyntheticSpec(**synth)
        data_resolved = {"synthetic": synth}
    else:
        _check_keys(data_raw["flatfile"], _FLATFILE_KEYS, "data.flatfile")
        missing = _FLATFILE_KEYS - set(data_raw["flatfile"])
        if missing:
            raise ConfigError(f"data.flatfile missing keys: {sorted(missing)}")
        source = FlatfilePaths(**data_raw["flatfile"])
        data_resolved = {"flatfile": dict(data_raw["flatfile"])}

    _check_keys(raw.get("extractor", {}), _EXTRACTOR_KEYS, "extractor")
    extractor = {**DEFAULT_EXTRACTOR, **raw.get("extractor", {})}

    _check_keys(raw.get("base", {}), _BASE_KEYS, "base")
    base_resolved = {**DEFAULT_BASE, **raw.get("base", {})}
    base_cfg = nn.TrainConfig(**base_resolved)

    _check_keys(raw.get("novel", {}), _NOVEL_KEYS, "novel")
    novel_resolved = {**DEFAULT_NOVEL, **raw.get("novel", {})}
    novel_cfg = NovelTrainConfig(**novel_resolved)

    modes = [UpdateMode.from_string(m) for m in _as_list(raw.get("modes", "NONPC"), "modes")]
    epsilons_explicit = "epsilons" in raw
    epsilons = [float(e) for e in _as_list(
        raw.get("epsilons", base_cfg.label_smoothing), "epsilons"
    )]
    for eps in epsilons:
        if not 0.0 <= eps < 1.0:
            raise ConfigError(f"label smoothing {eps} outside [0, 1)")
    seeds = [int(s) for s in _as_list(raw.get("seeds", list(DEFAULT_SEEDS)), "seeds")]

    resolved = {
        "plan": {"profile": profile, "K": plan.K, "n": plan.n, "k": plan.k,
                 "S": plan.S, "seed": plan.seed},
        "data": data_resolved,
        "extractor": extractor,
        "base": {**base_resolved, "milestones": list(base_cfg.milestones)},
        "novel": novel_resolved,
        "modes": [m.value for m in modes],
        "epsilons": epsilons,
        "seeds": seeds,
    }
    return ExperimentConfig(
        plan=plan,
        data_source=source,
        arch_hidden=tuple(extractor["hidden_dims"]),
        arch_feature_dim=int(extractor["feature_dim"]),
        arch_with_norm=bool(extractor["with_norm"]),
        base_cfg=base_cfg,
        novel_cfg=novel_cfg,
        modes=modes,
        epsilons=epsilons,
        epsilons_explicit=epsilons_explicit,
        seeds=seeds,
        resolved=resolved,
    )


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    try:
        return config_from_dict(raw)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def materialize_data(cfg: ExperimentConfig) -> FullData:
    """Produce the full dataset: synthetic from the plan seed, or CSV files."""
    if isinstance(cfg.data_source, SyntheticSpec):
        return generate_synthetic(cfg.data_source, cfg.plan, Rng(cfg.plan.seed))
    train = load_flatfile(cfg.data_source.train_csv, "train")
    test = load_flatfile(cfg.data_source.test_csv, "test")
    total = cfg.plan.total_classes
    for ds in (train, test):
        if ds.labels.min() < 0 or ds.labels.max() >= total:
            raise ConfigError(
                f"flatfile labels must lie in [0, {total}) for the configured plan"
            )
    return FullData(train=train, test=test)
