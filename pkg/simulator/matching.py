# Greedy IoU matching between ground-truth instances and predictions
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

from typing import List, Sequence

import numpy as np

from helpers.instances import AnnotatedInstance
from helpers.mean_teacher import PseudoLabel
from helpers.relation import BACKGROUND, MatchedPair

DEFAULT_IOU_THRESHOLD = 0.5


def iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (x, y, w, h) boxes, shape len(a) x len(b)."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ax0, ay0 = a[:, 0:1], a[:, 1:2]
    ax1, ay1 = ax0 + a[:, 2:3], ay0 + a[:, 3:4]
    bx0, by0 = b[:, 0], b[:, 1]
    bx1, by1 = bx0 + b[:, 2], by0 + b[:, 3]
    iw = np.clip(np.minimum(ax1, bx1) - np.maximum(ax0, bx0), 0, None)
    ih = np.clip(np.minimum(ay1, by1) - np.maximum(ay0, by0), 0, None)
    inter = iw * ih
    union = (a[:, 2:3] * a[:, 3:4]) + (b[:, 2] * b[:, 3]) - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def match_predictions(gt: Sequence[AnnotatedInstance], preds: Sequence[PseudoLabel],
                      iou_threshold: float = DEFAULT_IOU_THRESHOLD) -> List[MatchedPair]:
    """
    One-to-one matching in descending IoU order. Every ground truth yields exactly one
    MatchedPair: the class of its matched prediction, or BACKGROUND if nothing reaches
    the threshold. Ties keep (gt index, prediction index) order.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1], got {iou_threshold}")
    matched_class = [BACKGROUND] * len(gt)
    matched_iou = [0.0] * len(gt)
    if gt and preds:
        ious = iou_matrix([g.bbox for g in gt], [p.instance.bbox for p in preds])
        order = np.argsort(-ious, axis=None, kind="stable")
        gt_used = np.zeros(len(gt), dtype=bool)
        pred_used = np.zeros(len(preds), dtype=bool)
        for flat in order:
            gi, pi = divmod(int(flat), len(preds))
            value = ious[gi, pi]
            if value < iou_threshold:
                break
            if gt_used[gi] or pred_used[pi]:
                continue
            gt_used[gi] = pred_used[pi] = True
            matched_class[gi] = preds[pi].class_id
            matched_iou[gi] = float(value)
    return [MatchedPair(g.class_id, matched_class[i], matched_iou[i]) for i, g in enumerate(gt)]
