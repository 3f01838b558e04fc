# Detection metrics: per-class AP at one IoU threshold, mAP and class spread
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

from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np

from helpers.instances import AnnotatedInstance
from helpers.mean_teacher import PseudoLabel
from simulator.matching import DEFAULT_IOU_THRESHOLD, iou_matrix


@dataclass
class MetricsReport:
    per_class_ap: Dict[int, float] = field(default_factory=dict)
    map: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.map <= 1.0:
            raise ValueError(f"map must be in [0, 1], got {self.map}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")


def average_precision(recall: np.ndarray, precision: np.ndarray) -> float:
    """All-points AP: area under the monotone precision envelope of the PR staircase."""
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def _class_ap(class_id: int, gt_stream, pred_stream, iou_threshold: float) -> float:
    gt_boxes = [np.array([g.bbox for g in gts if g.class_id == class_id]).reshape(-1, 4) for gts in gt_stream]
    num_gt = sum(len(b) for b in gt_boxes)

    detections = []
    for image_idx, preds in enumerate(pred_stream):
        for p in preds:
            if p.class_id == class_id:
                detections.append((p.score, image_idx, p.instance.bbox))
    if not detections:
        return 0.0
    # Stable sort keeps stream order among equal scores.
    order = sorted(range(len(detections)), key=lambda k: -detections[k][0])

    used = [np.zeros(len(b), dtype=bool) for b in gt_boxes]
    tp = np.zeros(len(order))
    for rank, k in enumerate(order):
        _, image_idx, box = detections[k]
        candidates = gt_boxes[image_idx]
        if len(candidates) == 0:
            continue
        ious = iou_matrix([box], candidates)[0]
        ious[used[image_idx]] = -1.0
        best = int(np.argmax(ious))
        if ious[best] >= iou_threshold:
            used[image_idx][best] = True
            tp[rank] = 1.0

    acc_tp = np.cumsum(tp)
    acc_fp = np.cumsum(1.0 - tp)
    recall = acc_tp / num_gt
    precision = acc_tp / (acc_tp + acc_fp)
    return average_precision(recall, precision)


def compute_metrics(gt_stream: Sequence[Sequence[AnnotatedInstance]],
                    pred_stream: Sequence[Sequence[PseudoLabel]],
                    iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> MetricsReport:
    """
    Per-class AP over a stream of images, gt_stream[i] and pred_stream[i] belonging to
    image i. Only classes with at least one ground truth count towards map and sigma;
    sigma is the population standard deviation of their APs.
    """
    if len(gt_stream) != len(pred_stream):
        raise ValueError(f"gt_stream has {len(gt_stream)} images but pred_stream has {len(pred_stream)}")
    present: List[int] = sorted({g.class_id for gts in gt_stream for g in gts})
    if not present:
        raise ValueError("cannot compute metrics without ground-truth instances")

    per_class_ap = {c: _class_ap(c, gt_stream, pred_stream, iou_threshold) for c in present}
    values = np.array(list(per_class_ap.values()))
    return MetricsReport(per_class_ap=per_class_ap, map=float(values.mean()), sigma=float(values.std()))
