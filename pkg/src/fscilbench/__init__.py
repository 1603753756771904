"""Desk-scale workbench for few-shot class-incremental learning experiments."""

__version__ = "0.1.0"

from .data import Dataset, FullData, SessionPlan, SyntheticSpec, make_plan
from .engine import ModelState, NovelTrainConfig, UpdateMode, run_protocol
from .evaluation import EvalReport, EvalRow, LogitProfile, accuracy, aggregate, weighted
from .nn import Classifier, Extractor, ExtractorArch, TrainConfig
from .numcore import Rng

__all__ = [
    "__version__",
    "Classifier",
    "Dataset",
    "EvalReport",
    "EvalRow",
    "Extractor",
    "ExtractorArch",
    "FullData",
    "LogitProfile",
    "ModelState",
    "NovelTrainConfig",
    "Rng",
    "SessionPlan",
    "SyntheticSpec",
    "TrainConfig",
    "UpdateMode",
    "accuracy",
    "aggregate",
    "make_plan",
    "run_protocol",
    "weighted",
]
