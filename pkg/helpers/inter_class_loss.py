# Inter-Class Loss: ICRm-derived per-instance classification weights and loss composition
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
Inter-Class Loss (ICL)

Weights are computed per classified sample in three steps:

1. Raw weight from the ICRm:
- correct prediction (c == x):   sqrt(1 - ICRm(c, c))
- misclassification (c != x):    sqrt(ICRm(c, x) / max(ICRm(c, c), eps))
- foreground predicted as background uses the correct-prediction branch.
- background samples get exactly 1.

2. Foreground normalization: foreground weights are divided by their mean so the mean
   equals the background weight (1).

3. Regularization: w = (w + lambda_l) / (1 + lambda_l) over every weight.

The weighted classification loss is the mean of w_i * CE(label_i, softmax(logits_i)).
Weights are constants with respect to the logits.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import log_softmax, softmax

from helpers.instances import LABEL_TOLERANCE
from helpers.relation import ClassRelationMatrix

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6
DEFAULT_LAMBDA_L = 1.0
DEFAULT_LAMBDA_U = 1.0
DEFAULT_LAMBDA_D = 0.1
PROB_FLOOR = 1e-12
WEIGHT_STRATEGIES = ("icl", "class_level", "icl_no_reg", "none")


@dataclass
class ClassifiedSample:
    """
    One classified proposal.

    gt_label is a probability vector over the C foreground classes (ignored and may be
    None for background samples); pred_logits covers C foreground classes + background.
    """
    gt_label: Optional[np.ndarray]
    pred_logits: np.ndarray
    is_foreground: bool = True

    def __post_init__(self):
        self.pred_logits = np.asarray(self.pred_logits, dtype=np.float64)
        if self.pred_logits.ndim != 1 or self.pred_logits.size < 3:
            raise ValueError("pred_logits must be a vector over C foreground classes + background")
        if not np.all(np.isfinite(self.pred_logits)):
            raise ValueError(f"pred_logits must be finite, got {self.pred_logits}")
        if self.is_foreground:
            if self.gt_label is None:
                raise ValueError("foreground samples need a gt_label")
            self.gt_label = np.asarray(self.gt_label, dtype=np.float64)
            if self.gt_label.size != self.num_classes:
                raise ValueError(f"gt_label has {self.gt_label.size} entries, expected {self.num_classes}")
            if np.any(self.gt_label < 0) or abs(self.gt_label.sum() - 1.0) > LABEL_TOLERANCE:
                raise ValueError(f"gt_label is not a probability vector: {self.gt_label}")

    @property
    def num_classes(self) -> int:
        return int(self.pred_logits.size - 1)

    @property
    def pred_class(self) -> int:
        """Argmax over all logits; num_classes means background."""
        return int(np.argmax(self.pred_logits))

    @property
    def gt_class(self) -> int:
        """Dominant ground-truth class; num_classes for background samples."""
        if not self.is_foreground:
            return self.num_classes
        return int(np.argmax(self.gt_label))

    def target(self) -> np.ndarray:
        """Target distribution over C + 1 outputs."""
        t = np.zeros(self.num_classes + 1, dtype=np.float64)
        if self.is_foreground:
            t[:-1] = self.gt_label
        else:
            t[-1] = 1.0
        return t


def raw_weight(m: ClassRelationMatrix, gt_class: int, pred_class: int, eps: float = DEFAULT_EPSILON) -> float:
    c = m.num_classes
    if not 0 <= gt_class < c:
        raise IndexError(f"gt class {gt_class} out of range for {c} classes")
    if not 0 <= pred_class <= c:
        raise IndexError(f"pred class {pred_class} out of range for {c} classes + background")
    diag = m.values[gt_class, gt_class]
    if pred_class == gt_class or pred_class == c:
        return float(np.sqrt(max(0.0, 1.0 - diag)))
    return float(np.sqrt(m.values[gt_class, pred_class] / max(diag, eps)))


def class_level_weight(m: ClassRelationMatrix, gt_class: int) -> float:
    """Diagonal-only variant: the weight depends on the ground-truth class alone."""
    return raw_weight(m, gt_class, gt_class)


def normalize_foreground(weights: np.ndarray, foreground_mask: np.ndarray) -> np.ndarray:
    """Scale foreground weights to mean 1; background weights are set to exactly 1."""
    weights = np.asarray(weights, dtype=np.float64).copy()
    mask = np.asarray(foreground_mask, dtype=bool)
    if weights.shape != mask.shape:
        raise ValueError(f"weights {weights.shape} and mask {mask.shape} differ in shape")
    weights[~mask] = 1.0
    if not np.any(mask):
        return weights
    mean = weights[mask].mean()
    if mean <= 0.0:
        logger.warning("Foreground weights have zero mean, falling back to uniform weights")
        weights[mask] = 1.0
        return weights
    weights[mask] = weights[mask] / mean
    return weights


def regularize(weights: np.ndarray, lambda_l: float = DEFAULT_LAMBDA_L) -> np.ndarray:
    if lambda_l < 0:
        raise ValueError(f"lambda_l must be >= 0, got {lambda_l}")
    weights = np.asarray(weights, dtype=np.float64)
    return (weights + lambda_l) / (1.0 + lambda_l)


def compute_weights(m: ClassRelationMatrix, samples: Sequence[ClassifiedSample],
                    lambda_l: float = DEFAULT_LAMBDA_L, strategy: str = "icl",
                    eps: float = DEFAULT_EPSILON) -> np.ndarray:
    """Full weight pipeline for a batch of samples under the chosen strategy."""
    if strategy not in WEIGHT_STRATEGIES:
        raise ValueError(f"unknown weight strategy '{strategy}', expected one of {WEIGHT_STRATEGIES}")
    n = len(samples)
    if strategy == "none":
        return np.ones(n, dtype=np.float64)

    mask = np.array([s.is_foreground for s in samples], dtype=bool)
    raw = np.ones(n, dtype=np.float64)
    for i, s in enumerate(samples):
        if not s.is_foreground:
            continue
        if strategy == "class_level":
            raw[i] = class_level_weight(m, s.gt_class)
        else:
            raw[i] = raw_weight(m, s.gt_class, s.pred_class, eps)

    weights = normalize_foreground(raw, mask)
    if strategy == "icl_no_reg":
        return weights
    return regularize(weights, lambda_l)


def _stack(samples: Sequence[ClassifiedSample]):
    if len(samples) == 0:
        raise ValueError("weighted classification loss needs at least one sample")
    logits = np.stack([s.pred_logits for s in samples])
    targets = np.stack([s.target() for s in samples])
    return logits, targets


def per_sample_cross_entropy(samples: Sequence[ClassifiedSample]) -> np.ndarray:
    logits, targets = _stack(samples)
    log_probs = np.maximum(log_softmax(logits, axis=1), np.log(PROB_FLOOR))
    return -(targets * log_probs).sum(axis=1)


def weighted_cls_loss(samples: Sequence[ClassifiedSample], weights: np.ndarray) -> float:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(samples),):
        raise ValueError(f"got {weights.shape} weights for {len(samples)} samples")
    ce = per_sample_cross_entropy(samples)
    return float(np.mean(weights * ce))


def weighted_cls_loss_grad(samples: Sequence[ClassifiedSample], weights: np.ndarray) -> np.ndarray:
    """Gradient of weighted_cls_loss with respect to each sample's logits (N x (C+1))."""
    weights = np.asarray(weights, dtype=np.float64)
    logits, targets = _stack(samples)
    probs = softmax(logits, axis=1)
    # soft targets sum to 1, so d CE / d logits = p - t
    return (weights[:, None] * (probs - targets)) / len(samples)


@dataclass
class PseudoBatch:
    """Thresholded pseudo-labeled samples with their weights and an objectness term."""
    samples: List[ClassifiedSample] = field(default_factory=list)
    weights: Optional[np.ndarray] = None
    objectness_loss: float = 0.0


def unsup_loss(pseudo_batch: PseudoBatch) -> float:
    """Objectness + weighted classification over pseudo-labels; no regression term."""
    if not pseudo_batch.samples:
        return float(pseudo_batch.objectness_loss)
    weights = pseudo_batch.weights
    if weights is None:
        weights = np.ones(len(pseudo_batch.samples), dtype=np.float64)
    return float(pseudo_batch.objectness_loss) + weighted_cls_loss(pseudo_batch.samples, weights)


def total_loss(sup: float, unsup: float, dis: float,
               lambda_u: float = DEFAULT_LAMBDA_U, lambda_d: float = DEFAULT_LAMBDA_D) -> float:
    if lambda_u < 0 or lambda_d < 0:
        raise ValueError(f"loss weights must be >= 0, got lambda_u={lambda_u}, lambda_d={lambda_d}")
    return sup + lambda_u * unsup + lambda_d * dis
