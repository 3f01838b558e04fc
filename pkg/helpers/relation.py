# Inter-Class Relation module: a streaming, EMA-smoothed estimate of class confusion
# Copyright (C) 2025  Scott Lebow and Krisztian Hajdu

# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:

# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.

# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

# Author contact:
# Scott Lebow: scott.lebow@student.iaac.net
# Krisztian Hajdu: krisztian.hajdu@students.iaac.net

"""
Inter-Class Relation module (ICRm)

The ICRm approximates P(predicted j | ground-truth i) for the model being trained.
It is built one training batch at a time:

1. Accumulate the batch:
- Every (ground-truth, prediction) pair adds one count to a C x (C+1) matrix.
- The last column counts ground truths that were matched to background / nothing.

2. Normalize the batch:
- Each row is divided by its total, then the background column is dropped and the
  row is re-divided by its foreground mass so the batch estimate stays C x C.
- Rows with no foreground evidence are flagged absent.

3. Update the global matrix:
- A row seen for the first time is copied from the batch.
- Every later row is blended with EMA: row = m * row + (1 - m) * batch_row.
- Absent rows are left untouched, so a class does not need to appear in every batch.

The global matrix is then queried for the mean diagonal and the majority/minority split
used by Class-Relation Augmentation, and for the Inter-Class Loss weights.
"""

import json
import logging
from dataclasses import dataclass
from typing import FrozenSet, Iterable, NamedTuple, Tuple

import numpy as np

logger = logging.getLogger(__name__)

BACKGROUND = -1
ROW_SUM_TOLERANCE = 1e-9
DEFAULT_ICRM_MOMENTUM = 0.99


class MatchedPair(NamedTuple):
    gt_class: int
    pred_class: int  # class index or BACKGROUND
    iou: float = 0.0


@dataclass
class BatchConfusion:
    """Raw per-batch counts; column C holds background-matched ground truths."""
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[1] != self.counts.shape[0] + 1:
            raise ValueError(f"batch counts must be C x (C+1), got {self.counts.shape}")
        if np.any(self.counts < 0):
            raise ValueError("batch counts must be non-negative")

    @classmethod
    def empty(cls, num_classes: int) -> "BatchConfusion":
        return cls(np.zeros((num_classes, num_classes + 1), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return int(self.counts.shape[0])


@dataclass
class ClassRelationMatrix:
    """C x C row-stochastic matrix with a per-row initialization flag."""
    num_classes: int
    values: np.ndarray = None
    row_initialized: np.ndarray = None

    def __post_init__(self):
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        c = self.num_classes
        if self.values is None:
            self.values = np.zeros((c, c), dtype=np.float64)
        if self.row_initialized is None:
            self.row_initialized = np.zeros(c, dtype=bool)
        self.values = np.array(self.values, dtype=np.float64)
        self.row_initialized = np.array(self.row_initialized, dtype=bool)
        if self.values.shape != (c, c) or self.row_initialized.shape != (c,):
            raise ValueError(f"matrix shape {self.values.shape} does not match num_classes {c}")
        check_row_stochastic(self)

    @classmethod
    def from_values(cls, values) -> "ClassRelationMatrix":
        """Build a fully initialized matrix from a row-stochastic array."""
        values = np.asarray(values, dtype=np.float64)
        return cls(num_classes=values.shape[0], values=values, row_initialized=np.ones(values.shape[0], dtype=bool))

    def snapshot(self) -> "ClassRelationMatrix":
        """Value copy that can be handed to readers on other threads."""
        return ClassRelationMatrix(self.num_classes, self.values.copy(), self.row_initialized.copy())

    def to_dict(self) -> dict:
        return {
            "num_classes": self.num_classes,
            "values": self.values.tolist(),
            "row_initialized": self.row_initialized.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ClassRelationMatrix":
        return cls(
            num_classes=int(data["num_classes"]),
            values=np.asarray(data["values"], dtype=np.float64),
            row_initialized=np.asarray(data["row_initialized"], dtype=bool),
        )

    def to_json(self) -> str:
        # json writes floats with repr, which round-trips doubles exactly
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ClassRelationMatrix":
        return cls.from_dict(json.loads(text))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ClassRelationMatrix":
        with open(path, "r", encoding="utf-8") as f:
            return cls.from_json(f.read())


def check_row_stochastic(m: ClassRelationMatrix) -> None:
    """Raise ValueError if the matrix breaks the ICRm invariants."""
    if np.any(m.values < 0.0) or np.any(m.values > 1.0):
        raise ValueError("ICRm entries must lie in [0, 1]")
    sums = m.values.sum(axis=1)
    bad = m.row_initialized & (np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
    if np.any(bad):
        raise ValueError(f"initialized ICRm rows {np.flatnonzero(bad).tolist()} do not sum to 1")
    if np.any(m.values[~m.row_initialized] != 0.0):
        raise ValueError("uninitialized ICRm rows must be all zeros")


def accumulate(batch: BatchConfusion, pairs: Iterable[MatchedPair]) -> BatchConfusion:
    """Return a copy of the batch counts with one increment per (gt, pred) pair."""
    c = batch.num_classes
    counts = batch.counts.copy()
    pairs = list(pairs)
    if not pairs:
        return BatchConfusion(counts)
    gt = np.fromiter((p[0] for p in pairs), dtype=np.int64, count=len(pairs))
    pred = np.fromiter((p[1] for p in pairs), dtype=np.int64, count=len(pairs))
    if np.any((gt < 0) | (gt >= c)):
        raise IndexError(f"ground-truth class out of range [0, {c}): {gt[(gt < 0) | (gt >= c)].tolist()}")
    bad_pred = (pred != BACKGROUND) & ((pred < 0) | (pred >= c))
    if np.any(bad_pred):
        raise IndexError(f"predicted class out of range [0, {c}): {pred[bad_pred].tolist()}")
    pred = np.where(pred == BACKGROUND, c, pred)
    np.add.at(counts, (gt, pred), 1)
    return BatchConfusion(counts)


def normalize_batch(batch: BatchConfusion) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row-normalize the batch counts over foreground classes only.

    Returns the C x C normalized matrix and a boolean flag per row telling
    whether that row had any evidence. Rows whose matches were all background
    are flagged absent as well, since they say nothing about class confusion.
    """
    c = batch.num_classes
    counts = batch.counts.astype(np.float64)
    totals = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        fractions = np.where(totals[:, None] > 0, counts / totals[:, None], 0.0)
    foreground = fractions[:, :c]
    mass = foreground.sum(axis=1)
    row_present = mass > 0
    normalized = np.zeros((c, c), dtype=np.float64)
    normalized[row_present] = foreground[row_present] / mass[row_present, None]
    return normalized, row_present


def ema_update(global_m: ClassRelationMatrix, batch_norm: np.ndarray, row_present: np.ndarray,
               momentum: float = DEFAULT_ICRM_MOMENTUM) -> ClassRelationMatrix:
    """Blend a normalized batch into the global matrix (copy on first sight, EMA afterwards)."""
    if not 0.0 <= momentum <= 1.0:
        raise ValueError(f"ICRm momentum must be in [0, 1], got {momentum}")
    batch_norm = np.asarray(batch_norm, dtype=np.float64)
    row_present = np.asarray(row_present, dtype=bool)
    if batch_norm.shape != global_m.values.shape:
        raise ValueError(f"batch shape {batch_norm.shape} does not match ICRm {global_m.values.shape}")

    values = global_m.values.copy()
    initialized = global_m.row_initialized.copy()

    copy_rows = row_present & ~initialized
    blend_rows = row_present & initialized
    values[copy_rows] = batch_norm[copy_rows]
    values[blend_rows] = momentum * values[blend_rows] + (1.0 - momentum) * batch_norm[blend_rows]
    initialized |= row_present

    updated = ClassRelationMatrix(global_m.num_classes, values, initialized)
    if np.any(copy_rows):
        logger.debug(f"ICRm rows {np.flatnonzero(copy_rows).tolist()} initialized from batch")
    return updated


def update_from_pairs(global_m: ClassRelationMatrix, pairs: Iterable[MatchedPair],
                      momentum: float = DEFAULT_ICRM_MOMENTUM) -> ClassRelationMatrix:
    """One full pass of the batch loop: accumulate, normalize, EMA."""
    batch = accumulate(BatchConfusion.empty(global_m.num_classes), pairs)
    normalized, present = normalize_batch(batch)
    return ema_update(global_m, normalized, present, momentum)


def mean_diagonal(m: ClassRelationMatrix) -> float:
    """Average probability of correct classification (uninitialized rows count as 0)."""
    return float(np.trace(m.values) / m.num_classes)


def partition_classes(m: ClassRelationMatrix) -> Tuple[FrozenSet[int], FrozenSet[int]]:
    """Split classes into majority (diagonal strictly above the mean) and minority."""
    avg = mean_diagonal(m)
    diag = np.diag(m.values)
    majority = frozenset(int(c) for c in np.flatnonzero(diag > avg))
    minority = frozenset(range(m.num_classes)) - majority
    return majority, minority
