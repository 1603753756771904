"""CSV serialization of evaluation reports.

Floats are written with repr (shortest exact representation) so files are
byte-stable across identical runs and parse back to the same float64. A
missing novel accuracy is an empty field, never 0.
"""

from __future__ import annotations

import csv

from .evaluation import AggregateRow, EvalReport

REPORT_FIELDS = ("seed", "session", "base_acc", "novel_acc", "weighted_acc", "K", "M")
AGGREGATE_FIELDS = (
    "session",
    "base_acc_mean", "base_acc_std",
    "novel_acc_mean", "novel_acc_std",
    "weighted_acc_mean", "weighted_acc_std",
    "K", "M", "seeds",
)
PROFILE_FIELDS = ("seed", "session", "probe_class", "column_index", "mean_logit")
ROW_NORM_FIELDS = ("seed", "session", "class_index", "row_norm")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def report_rows(report: EvalReport) -> list[dict]:
    return [
        {
            "seed": report.seed,
            "session": row.session,
            "base_acc": row.base_acc,
            "novel_acc": row.novel_acc,
            "weighted_acc": row.weighted_acc,
            "K": row.base_class_count,
            "M": row.novel_class_count,
        }
        for row in report.rows
    ]


def aggregate_rows(aggs: list[AggregateRow]) -> list[dict]:
    return [
        {
            "session": a.session,
            "base_acc_mean": a.base_mean,
            "base_acc_std": a.base_std,
            "novel_acc_mean": a.novel_mean,
            "novel_acc_std": a.novel_std,
            "weighted_acc_mean": a.weighted_mean,
            "weighted_acc_std": a.weighted_std,
            "K": a.base_class_count,
            "M": a.novel_class_count,
            "seeds": ";".join(str(s) for s in a.seeds),
        }
        for a in aggs
    ]


def profile_rows(report: EvalReport) -> list[dict]:
    out = []
    for profile in report.profiles:
        for cls in profile.probe_classes:
            vec = profile.mean_logits[cls]
            for col, value in enumerate(vec):
                out.append(
                    {
                        "seed": report.seed,
                        "session": profile.session,
                        "probe_class": cls,
                        "column_index": col,
                        "mean_logit": float(value),
                    }
                )
    return out


def row_norm_rows(report: EvalReport) -> list[dict]:
    out = []
    for profile in report.profiles:
        for idx, norm in enumerate(profile.row_norms):
            out.append(
                {
                    "seed": report.seed,
                    "session": profile.session,
                    "class_index": idx,
                    "row_norm": float(norm),
                }
            )
    return out


def write_csv(path: str, fieldnames, rows: list[dict]):
    """Write rows with a fixed header order; values go through fmt()."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([fmt(row.get(name)) for name in fieldnames])


def read_csv(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
