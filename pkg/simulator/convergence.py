# ICRm convergence experiment against the oracle's closed-form confusion
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

from typing import List, NamedTuple, Tuple

import numpy as np
from tqdm import tqdm

from helpers.relation import DEFAULT_ICRM_MOMENTUM, ClassRelationMatrix, update_from_pairs
from simulator.matching import DEFAULT_IOU_THRESHOLD, match_predictions
from simulator.metrics import compute_metrics
from simulator.oracle_detector import (OracleDetector, effective_confusion, grid_image,
                                       oracle_predict, sample_matched_pairs)
from simulator.results import ResultRow

CONVERGE_STAGE = "converge"


class ConvergenceRun(NamedTuple):
    matrix: ClassRelationMatrix
    error: float
    rows: List[ResultRow]


def icrm_error(m: ClassRelationMatrix, det: OracleDetector) -> float:
    return float(np.max(np.abs(m.values - effective_confusion(det))))


def balanced_classes(num_classes: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffled batch holding every class equally often (up to the remainder)."""
    return rng.permutation(np.arange(batch_size) % num_classes)


def converge_with_history(det: OracleDetector, batches: int, momentum: float = DEFAULT_ICRM_MOMENTUM,
                          rng: np.random.Generator = None, batch_size: int = 64, eval_every: int = 0,
                          seed: int = 0, iou_threshold: float = DEFAULT_IOU_THRESHOLD,
                          progress: bool = False) -> ConvergenceRun:
    """
    Stream `batches` oracle batches through the ICRm update and track the error.

    Batches go through image synthesis, oracle_predict and IoU matching whenever the
    boxes can be mis-matched (bbox_jitter > 0) or the batch is an evaluation batch
    (every eval_every batches and the last one); other batches use the equivalent
    sample_matched_pairs draw. One CSV row is produced per evaluation batch.
    """
    if batches < 1:
        raise ValueError(f"batches must be >= 1, got {batches}")
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    rng = rng if rng is not None else np.random.default_rng(seed)

    m = ClassRelationMatrix(det.num_classes)
    rows = []
    for b in tqdm(range(batches), desc="icrm-converge", disable=not progress, leave=False):
        classes = balanced_classes(det.num_classes, batch_size, rng)
        evaluate = eval_every > 0 and ((b + 1) % eval_every == 0 or b + 1 == batches)
        if det.bbox_jitter > 0 or evaluate:
            image = grid_image(classes, det.num_classes, image_id=f"batch{b}")
            preds = oracle_predict(det, image, rng)
            pairs = match_predictions(image.instances, preds, iou_threshold)
        else:
            pairs = sample_matched_pairs(det, classes, rng)
        m = update_from_pairs(m, pairs, momentum)
        if evaluate:
            report = compute_metrics([image.instances], [preds], iou_threshold)
            rows.append(ResultRow(seed, CONVERGE_STAGE, b + 1, report.map, report.sigma, icrm_error(m, det)))
    return ConvergenceRun(m, icrm_error(m, det), rows)


def run_convergence_experiment(det: OracleDetector, batches: int, momentum: float = DEFAULT_ICRM_MOMENTUM,
                               rng: np.random.Generator = None, batch_size: int = 64) -> Tuple[ClassRelationMatrix, float]:
    """Final ICRm and its max-abs error against effective_confusion(det)."""
    run = converge_with_history(det, batches, momentum, rng, batch_size)
    return run.matrix, run.error
