"""Labeled feature cohorts and the feature/label CSV schemas.

Feature CSV: header `case_id,<12 feature columns>`, values rendered with 17
significant digits so a parse-back is lossless. Labels CSV: `case_id,label`
with label 1 = CD, 0 = ITB.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .biomarkers import FEATURE_COLUMNS, FeatureVector

__all__ = ["LabeledCohort", "write_features_csv", "read_features_csv",
           "write_labels_csv", "read_labels_csv"]


@dataclass(frozen=True)
class LabeledCohort:
    """Feature rows with binary labels (1 = CD, 0 = ITB)."""

    rows: tuple
    labels: np.ndarray
    source: str = ""

    def __post_init__(self):
        labels = np.asarray(self.labels).astype(int)
        if len(self.rows) != labels.size:
            raise ValueError(
                f"{len(self.rows)} rows but {labels.size} labels"
            )
        labels.setflags(write=False)
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "labels", labels)

    def X(self) -> np.ndarray:
        return np.array([row.values() for row in self.rows], dtype=np.float64)

    def y(self) -> np.ndarray:
        return self.labels

    def require_both_classes(self):
        if self.labels.size == 0 or self.labels.min() == self.labels.max():
            raise ValueError("cohort must contain both classes")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_features_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("case_id",) + FEATURE_COLUMNS)
        for row in rows:
            writer.writerow([row.case_id] + [_fmt(getattr(row, c)) for c in FEATURE_COLUMNS])


def append_features_csv(row: FeatureVector, path) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        writer = csv.writer(fh)
        if new:
            writer.writerow(("case_id",) + FEATURE_COLUMNS)
        writer.writerow([row.case_id] + [_fmt(getattr(row, c)) for c in FEATURE_COLUMNS])


def read_features_csv(path) -> list[FeatureVector]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["case_id"] + list(FEATURE_COLUMNS)
        if header != expected:
            raise ValueError(f"unexpected feature CSV header {header}; expected {expected}")
        for rec in reader:
            values = {c: float(v) for c, v in zip(FEATURE_COLUMNS, rec[1:])}
            rows.append(FeatureVector(case_id=rec[0], **values))
    return rows


def write_labels_csv(pairs, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("case_id", "label"))
        for case_id, label in pairs:
            writer.writerow((case_id, int(label)))


def read_labels_csv(path) -> dict:
    labels = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["case_id", "label"]:
            raise ValueError(f"unexpected labels CSV header {header}")
        for rec in reader:
            labels[rec[0]] = int(rec[1])
    return labels


def build_cohort(feature_rows, label_map, source="") -> LabeledCohort:
    """Pair feature rows with labels by case_id; missing labels are an error."""
    labels = []
    for row in feature_rows:
        if row.case_id not in label_map:
            raise ValueError(f"no label for case {row.case_id}")
        labels.append(label_map[row.case_id])
    return LabeledCohort(tuple(feature_rows), np.array(labels), source)
