# Oracle detector with a known confusion process, for desk-scale verification
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

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from helpers.instances import AnnotatedInstance, Domain, LabeledImage, one_hot
from helpers.mean_teacher import PseudoLabel
from helpers.relation import BACKGROUND, MatchedPair


@dataclass
class OracleDetector:
    """
    A stand-in detector whose mistakes follow a known process.

    confusion[c] is the class distribution of a detection of a class-c object,
    recall[c] the probability that the object is detected at all, and
    score_mean / score_std the Gaussian confidence of class-c detections.
    """
    confusion: np.ndarray
    recall: np.ndarray
    score_mean: np.ndarray
    score_std: np.ndarray
    bbox_jitter: float = 0.0

    def __post_init__(self):
        self.confusion = np.asarray(self.confusion, dtype=np.float64)
        c = self.confusion.shape[0]
        if self.confusion.shape != (c, c) or c < 2:
            raise ValueError(f"confusion must be C x C with C >= 2, got {self.confusion.shape}")
        if np.any(self.confusion < 0) or np.any(np.abs(self.confusion.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("confusion rows must be probability vectors")
        self.recall = np.broadcast_to(np.asarray(self.recall, dtype=np.float64), (c,)).copy()
        self.score_mean = np.broadcast_to(np.asarray(self.score_mean, dtype=np.float64), (c,)).copy()
        self.score_std = np.broadcast_to(np.asarray(self.score_std, dtype=np.float64), (c,)).copy()
        if np.any((self.recall < 0) | (self.recall > 1)):
            raise ValueError("recall entries must be in [0, 1]")
        if np.any(self.score_std < 0) or self.bbox_jitter < 0:
            raise ValueError("score_std and bbox_jitter must be >= 0")

    @property
    def num_classes(self) -> int:
        return int(self.confusion.shape[0])


def default_oracle_confusion(num_classes: int) -> np.ndarray:
    """
    A biased confusion process: accuracy falls from 0.95 for class 0 to 0.55 for the
    last class, and most of each missing mass is predicted as class 0 (the majority),
    the rest spread evenly.
    """
    c = num_classes
    q = np.zeros((c, c), dtype=np.float64)
    for i in range(c):
        accuracy = 0.95 - 0.4 * i / max(c - 1, 1)
        q[i, i] = accuracy
        remainder = 1.0 - accuracy
        others = [j for j in range(c) if j != i]
        sink = 0 if i != 0 else 1
        q[i, sink] += 0.7 * remainder
        for j in others:
            q[i, j] += 0.3 * remainder / len(others)
    return q / q.sum(axis=1, keepdims=True)


def oracle_from_config(config) -> OracleDetector:
    confusion = config.oracle_confusion
    if confusion is None:
        confusion = default_oracle_confusion(config.num_classes)
    return OracleDetector(
        confusion=np.asarray(confusion, dtype=np.float64),
        recall=config.oracle_recall,
        score_mean=config.oracle_score_mean,
        score_std=config.oracle_score_std,
        bbox_jitter=config.bbox_jitter,
    )


def _draw(det: OracleDetector, classes: np.ndarray, rng: np.random.Generator):
    # Draw order is fixed so sample_matched_pairs and oracle_predict agree for one seed.
    n = classes.size
    detected = rng.random(n) < det.recall[classes]
    cumulative = np.cumsum(det.confusion, axis=1)[classes]
    u = rng.random(n)
    predicted = np.minimum((u[:, None] >= cumulative).sum(axis=1), det.num_classes - 1)
    scores = np.clip(det.score_mean[classes] + det.score_std[classes] * rng.standard_normal(n), 0.0, 1.0)
    return detected, predicted, scores


def oracle_predict(det: OracleDetector, image: LabeledImage, rng: np.random.Generator) -> List[PseudoLabel]:
    """
    Detections for the ground-truth instances of image.

    Each object of class c is detected with probability recall[c]; a detection is
    labelled by drawing from confusion[c], scored from N(score_mean[c], score_std[c])
    clipped to [0, 1], and placed on the ground-truth box with Gaussian jitter on x, y, w and h
    (width and height kept at least 1).
    """
    classes = np.array([inst.class_id for inst in image.instances], dtype=np.int64)
    if classes.size == 0:
        return []
    detected, predicted, scores = _draw(det, classes, rng)
    jitter = None
    if det.bbox_jitter > 0:
        jitter = det.bbox_jitter * rng.standard_normal((classes.size, 4))

    preds = []
    for k, inst in enumerate(image.instances):
        if not detected[k]:
            continue
        x, y, w, h = inst.bbox
        if jitter is not None:
            x, y = x + jitter[k, 0], y + jitter[k, 1]
            w, h = max(1.0, w + jitter[k, 2]), max(1.0, h + jitter[k, 3])
        pred_class = int(predicted[k])
        box = AnnotatedInstance(bbox=(x, y, w, h), label=one_hot(pred_class, det.num_classes), score=float(scores[k]))
        preds.append(PseudoLabel(instance=box, score=float(scores[k])))
    return preds


def sample_matched_pairs(det: OracleDetector, classes: Sequence[int], rng: np.random.Generator) -> List[MatchedPair]:
    """
    Matched (gt, pred) pairs for a batch of objects, skipping image synthesis.

    Equals matching oracle_predict output on a grid image when bbox_jitter is 0: the
    boxes do not overlap, so every detection matches its own object. Consumes the
    generator exactly as oracle_predict does.
    """
    classes = np.asarray(classes, dtype=np.int64)
    if classes.size == 0:
        return []
    detected, predicted, _ = _draw(det, classes, rng)
    pred = np.where(detected, predicted, BACKGROUND)
    return [MatchedPair(int(g), int(p), 1.0 if d else 0.0) for g, p, d in zip(classes, pred, detected)]


def effective_confusion(det: OracleDetector) -> np.ndarray:
    """
    The matrix the ICRm should converge to under the oracle.

    A missed object lands in the background column, which is dropped and the row
    renormalized: row c is recall[c] * Q[c] / (recall[c] * sum(Q[c])), i.e. Q[c] itself
    for any detected class, and zeros for a class that is never detected.
    """
    q = det.confusion
    scaled = det.recall[:, None] * q
    mass = scaled.sum(axis=1, keepdims=True)
    return np.divide(scaled, mass, out=np.zeros_like(scaled), where=mass > 0)


def grid_image(classes: Sequence[int], num_classes: int, cell: int = 16,
               domain: Domain = Domain.SOURCE, image_id: str = "",
               rng: Optional[np.random.Generator] = None) -> LabeledImage:
    """
    Synthetic image with one non-overlapping cell-sized box per class in `classes`,
    laid out on a square grid. Each box is filled with a colour derived from its class.
    """
    n = len(classes)
    side = max(1, int(np.ceil(np.sqrt(n))))
    pixels = np.zeros((side * cell, side * cell, 3), dtype=np.uint8)
    instances = []
    margin = max(1, cell // 8)
    for k, class_id in enumerate(classes):
        row, col = divmod(k, side)
        x, y = col * cell + margin, row * cell + margin
        size = cell - 2 * margin
        colour = np.array([(37 * class_id) % 256, (91 * class_id + 64) % 256, (53 * class_id + 128) % 256], dtype=np.uint8)
        pixels[y:y + size, x:x + size] = colour
        if rng is not None:
            noise = rng.integers(0, 16, size=(size, size, 3), dtype=np.uint8)
            pixels[y:y + size, x:x + size] = np.clip(pixels[y:y + size, x:x + size].astype(int) + noise, 0, 255).astype(np.uint8)
        instances.append(AnnotatedInstance.from_class((x, y, size, size), int(class_id), num_classes))
    return LabeledImage(pixels=pixels, instances=instances, domain=domain, image_id=image_id)
