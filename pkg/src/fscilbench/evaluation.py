"""Accuracy metrics, logit-distribution diagnostics, and multi-seed
aggregation.

Functions here treat the model as a read-only predictor exposing
`predict(inputs)`, `logits_for(inputs)`, `blocks`, `num_base_classes`,
`num_novel_classes`, and `session_index` (see engine.ModelState). A missing
metric (no novel classes yet) is represented as None, never 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SessionPlan
from .errors import InputError
from .numcore import softmax_rows

DEFAULT_PROBE_CLASSES = (0, 1, 2)


@dataclass
class EvalRow:
    """Per-session accuracies; weighted = (K*base + M*novel) / (K + M)."""

    session: int
    base_acc: float
    novel_acc: float | None
    weighted_acc: float
    base_class_count: int
    novel_class_count: int


@dataclass
class LogitProfile:
    """Mean logit vector of each probe base class plus every row norm."""

    session: int
    probe_classes: tuple[int, ...]
    mean_logits: dict[int, np.ndarray]
    row_norms: np.ndarray
    base_row_count: int


@dataclass
class EvalReport:
    """All per-session rows and profiles of a single protocol run."""

    plan: SessionPlan
    seed: int
    rows: list[EvalRow] = field(default_factory=list)
    profiles: list[LogitProfile] = field(default_factory=list)


def accuracy(model, dataset: Dataset, restrict_to: str = "all") -> float | None:
    """Fraction of samples whose full-logit argmax equals the true label.

    restrict_to filters which samples count ('all', 'base', or
    'novel-up-to-i'); predictions always run over every seen class. An empty
    restricted set yields None.
    """
    k = model.num_base_classes
    seen = model.num_novel_classes
    labels = dataset.labels
    if restrict_to == "all":
        mask = np.ones(len(dataset), dtype=bool)
    elif restrict_to == "base":
        mask = labels < k
    elif restrict_to == "novel-up-to-i":
        mask = (labels >= k) & (labels < k + seen)
    else:
        raise InputError(f"unknown restriction {restrict_to!r}")
    if not mask.any():
        return None
    preds = model.predict(dataset.inputs[mask])
    return float(np.mean(preds == labels[mask]))


def weighted(base_acc: float, novel_acc: float | None, K: int, M: int) -> float:
    """Class-count weighted accuracy; M = 0 reduces to the base accuracy."""
    if K < 1 or M < 0:
        raise InputError("need K >= 1 and M >= 0")
    if M == 0:
        return base_acc
    if novel_acc is None:
        raise InputError("novel accuracy missing but M > 0")
    return (K * base_acc + M * novel_acc) / (K + M)


def logit_profile(
    model, base_test: Dataset, probe_classes: tuple[int, ...] = DEFAULT_PROBE_CLASSES
) -> LogitProfile:
    """Mean logit vectors of a few probe base classes, plus all row norms."""
    k = model.num_base_classes
    for cls in probe_classes:
        if not 0 <= cls < k:
            raise InputError(f"probe class {cls} is not a base class")
    mean_logits = {}
    for cls in probe_classes:
        mask = base_test.labels == cls
        if not mask.any():
            raise InputError(f"base test set has no samples of probe class {cls}")
        mean_logits[cls] = model.logits_for(base_test.inputs[mask]).mean(axis=0)
    norms = np.concatenate(
        [np.sqrt(np.sum(b.weight**2, axis=1)) for b in model.blocks]
    )
    return LogitProfile(
        session=model.session_index,
        probe_classes=tuple(probe_classes),
        mean_logits=mean_logits,
        row_norms=norms,
        base_row_count=k,
    )


def evaluate_model(model, base_test: Dataset, novel_test: Dataset,
                   probe_classes: tuple[int, ...] = DEFAULT_PROBE_CLASSES):
    """(EvalRow, LogitProfile) for the model's current session."""
    k = model.num_base_classes
    m = model.num_novel_classes
    base_acc = accuracy(model, base_test, "all")
    novel_acc = accuracy(model, novel_test, "all") if len(novel_test) else None
    row = EvalRow(
        session=model.session_index,
        base_acc=base_acc,
        novel_acc=novel_acc,
        weighted_acc=weighted(base_acc, novel_acc, k, m if novel_acc is not None else 0),
        base_class_count=k,
        novel_class_count=m,
    )
    return row, logit_profile(model, base_test, probe_classes)


def true_class_probabilities(model, inputs, labels) -> np.ndarray:
    """Softmax probability of each sample's true class over all seen classes."""
    probs = softmax_rows(model.logits_for(inputs))
    return probs[np.arange(len(labels)), np.asarray(labels, dtype=np.int64)]


@dataclass
class AggregateRow:
    """Mean/std of each metric over seeds, for one session."""

    session: int
    base_mean: float
    base_std: float
    novel_mean: float | None
    novel_std: float | None
    weighted_mean: float
    weighted_std: float
    base_class_count: int
    novel_class_count: int
    seeds: tuple[int, ...]


def aggregate(reports: list[EvalReport]) -> list[AggregateRow]:
    """Elementwise mean and (population) std across seeds, session by session."""
    if not reports:
        raise InputError("need at least one report to aggregate")
    plan = reports[0].plan
    if any(r.plan != plan for r in reports):
        raise InputError("reports come from different plans")
    n_rows = len(reports[0].rows)
    if any(len(r.rows) != n_rows for r in reports):
        raise InputError("reports have differing session counts")
    seeds = tuple(r.seed for r in reports)
    out = []
    for s in range(n_rows):
        rows = [r.rows[s] for r in reports]
        base = np.array([row.base_acc for row in rows])
        wgt = np.array([row.weighted_acc for row in rows])
        novels = [row.novel_acc for row in rows]
        have_novel = [v for v in novels if v is not None]
        if have_novel and len(have_novel) != len(novels):
            raise InputError("novel accuracy present for some seeds but not others")
        novel_arr = np.array(have_novel) if have_novel else None
        out.append(
            AggregateRow(
                session=rows[0].session,
                base_mean=float(base.mean()),
                base_std=float(base.std()),
                novel_mean=float(novel_arr.mean()) if novel_arr is not None else None,
                novel_std=float(novel_arr.std()) if novel_arr is not None else None,
                weighted_mean=float(wgt.mean()),
                weighted_std=float(wgt.std()),
                base_class_count=rows[0].base_class_count,
                novel_class_count=rows[0].novel_class_count,
                seeds=seeds,
            )
        )
    return out
