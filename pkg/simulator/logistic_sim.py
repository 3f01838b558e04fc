# Two-stage mean-teacher simulation on a linear softmax learner over Gaussian clusters
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
Logistic stand-in for the detector

The learner is a linear softmax classifier over 2-D features with C foreground logits
plus one background logit, so its per-sample outputs plug straight into the ICRm and
the Inter-Class Loss.

Data:
- Class k is a unit Gaussian around a point on the unit circle.
- The labeled source stream is imbalanced: class priors fall geometrically from 1 to
  1 / sim_imbalance. The unlabeled target stream has the same priors, shifted by
  sim_domain_shift along both axes.
- Evaluation sets are balanced.

Training:
- Burn-in: supervised source batches. The source ICRm is updated from
  (ground truth, student argmax) pairs and drives the ICL weights.
- Mutual: the teacher (EMA of the student) labels the weak view of a target batch,
  labels below tau are dropped, the target ICRm is updated from (pseudo class,
  student argmax) pairs, and the weighted pseudo-label loss is added with lambda_u.
- With use_cra, features are mixed the way CRA mixes instance crops: a per-class,
  per-domain FIFO of recent features plays the role of the Cropbank.
"""

import logging
from collections import deque
from typing import Dict, List, NamedTuple, Sequence, Tuple

import numpy as np
from scipy.special import softmax
from scipy.stats import binomtest
from tqdm import tqdm

from helpers.augmentation import mixup_labels, select_mix_class
from helpers.config import ExperimentConfig
from helpers.instances import AnnotatedInstance, Domain, one_hot
from helpers.inter_class_loss import ClassifiedSample, compute_weights, weighted_cls_loss_grad
from helpers.mean_teacher import MeanTeacher, ParameterVector, PseudoLabel, TrainingStage, filter_pseudo_labels
from helpers.relation import (BACKGROUND, BatchConfusion, ClassRelationMatrix, MatchedPair, accumulate,
                              normalize_batch, partition_classes, update_from_pairs)
from simulator.metrics import compute_metrics
from simulator.results import ResultRow

logger = logging.getLogger(__name__)

FEATURE_DIM = 2
CLUSTER_STD = 1.0
STRONG_NOISE_STD = 0.1
EVAL_PER_CLASS = 250
UNIT_BOX = (0.0, 0.0, 1.0, 1.0)


class SimulationResult(NamedTuple):
    per_class_accuracy: np.ndarray
    minority_accuracy: float
    rows: List[ResultRow]
    source_icrm: ClassRelationMatrix
    target_icrm: ClassRelationMatrix


def class_means(num_classes: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def class_priors(num_classes: int, imbalance: float) -> np.ndarray:
    priors = float(imbalance) ** (-np.arange(num_classes) / (num_classes - 1))
    return priors / priors.sum()


def minority_classes(priors: np.ndarray) -> np.ndarray:
    return np.flatnonzero(priors < 1.0 / priors.size)


def sample_stream(n: int, means: np.ndarray, priors: np.ndarray, shift: float,
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    labels = rng.choice(priors.size, size=n, p=priors)
    features = means[labels] + CLUSTER_STD * rng.standard_normal((n, FEATURE_DIM)) + shift
    return features, labels


def balanced_set(per_class: int, means: np.ndarray, shift: float,
                 rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    labels = np.repeat(np.arange(means.shape[0]), per_class)
    features = means[labels] + CLUSTER_STD * rng.standard_normal((labels.size, FEATURE_DIM)) + shift
    return features, labels


class LinearSoftmax:
    """logits = x @ W + b over C foreground classes and background, stored as one flat vector."""

    def __init__(self, num_classes: int, dim: int = FEATURE_DIM):
        self.num_classes = num_classes
        self.dim = dim

    @property
    def num_outputs(self) -> int:
        return self.num_classes + 1

    def init_params(self) -> ParameterVector:
        return ParameterVector(np.zeros(self.dim * self.num_outputs + self.num_outputs))

    def unpack(self, params: ParameterVector) -> Tuple[np.ndarray, np.ndarray]:
        split = self.dim * self.num_outputs
        return params.values[:split].reshape(self.dim, self.num_outputs), params.values[split:]

    def logits(self, params: ParameterVector, features: np.ndarray) -> np.ndarray:
        w, b = self.unpack(params)
        return features @ w + b

    def param_grad(self, features: np.ndarray, logit_grad: np.ndarray) -> np.ndarray:
        return np.concatenate([(features.T @ logit_grad).ravel(), logit_grad.sum(axis=0)])


def _pred_for_icrm(logits: np.ndarray, num_classes: int) -> np.ndarray:
    pred = np.argmax(logits, axis=1)
    return np.where(pred == num_classes, BACKGROUND, pred)


def _pairs(gt: Sequence[int], pred: Sequence[int]) -> List[MatchedPair]:
    return [MatchedPair(int(g), int(p)) for g, p in zip(gt, pred)]


class FeatureBank:
    """Per-class FIFO of recent feature vectors for one domain."""

    def __init__(self, num_classes: int, domain: Domain, capacity: int):
        self.domain = domain
        self.rings: Dict[int, deque] = {c: deque(maxlen=capacity) for c in range(num_classes)}

    def insert(self, features: np.ndarray, labels: Sequence[int]) -> None:
        for x, y in zip(features, labels):
            self.rings[int(y)].append(np.array(x, copy=True))

    def candidates(self, class_id: int) -> List[np.ndarray]:
        return list(self.rings[class_id])


def mix_features(features: np.ndarray, labels: np.ndarray, domain: Domain, m: ClassRelationMatrix,
                 source_bank: FeatureBank, target_bank: FeatureBank, ratio: float,
                 config: ExperimentConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Feature-space CRA with the same domain rules as image CRA; returns features and soft labels."""
    num_classes = m.num_classes
    majority, _ = partition_classes(m)
    mixed = features.copy()
    soft = np.stack([one_hot(int(y), num_classes) for y in labels])
    for i, y in enumerate(labels):
        if rng.random() >= ratio:
            continue
        base = int(y)
        is_majority = base in majority
        if domain == Domain.TARGET and not is_majority:
            continue
        mix_class = select_mix_class(m, base, is_majority, rng, strategy=config.selection_strategy)
        if mix_class is None:
            continue
        if domain == Domain.SOURCE:
            pool = source_bank.candidates(mix_class) + target_bank.candidates(mix_class)
        else:
            pool = target_bank.candidates(mix_class) or source_bank.candidates(mix_class)
        if not pool:
            continue
        partner = pool[int(rng.integers(len(pool)))]
        beta = float(rng.beta(*config.beta_params))
        mixed[i] = beta * features[i] + (1.0 - beta) * partner
        soft[i] = mixup_labels(soft[i], mix_class, beta)
    return mixed, soft


def _samples(soft_labels: np.ndarray, logits: np.ndarray) -> List[ClassifiedSample]:
    return [ClassifiedSample(gt_label=t, pred_logits=z) for t, z in zip(soft_labels, logits)]


def teacher_pseudo_labels(logits: np.ndarray, num_classes: int, tau: float) -> Tuple[np.ndarray, np.ndarray]:
    """Indices and classes of teacher predictions whose foreground confidence reaches tau."""
    probs = softmax(logits, axis=1)
    classes = np.argmax(probs[:, :num_classes], axis=1)
    scores = probs[np.arange(len(classes)), classes]
    candidates = [PseudoLabel(AnnotatedInstance.from_class(UNIT_BOX, int(c), num_classes, score=float(s)), float(s))
                  for c, s in zip(classes, scores)]
    kept = filter_pseudo_labels(candidates, tau)
    keep = {id(p) for p in kept}
    index = np.array([i for i, p in enumerate(candidates) if id(p) in keep], dtype=np.int64)
    return index, classes[index]


def per_class_accuracy(logits: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    pred = np.argmax(logits, axis=1)
    return np.array([np.mean(pred[labels == c] == c) for c in range(num_classes)])


def model_confusion(logits: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """Row-normalized foreground confusion of a model, computed the way the ICRm counts batches."""
    batch = accumulate(BatchConfusion.empty(num_classes), _pairs(labels, _pred_for_icrm(logits, num_classes)))
    normalized, _ = normalize_batch(batch)
    return normalized


def evaluation_metrics(logits: np.ndarray, labels: np.ndarray, num_classes: int):
    """Treat each evaluation sample as a one-box image and score it as a detection."""
    probs = softmax(logits, axis=1)
    pred = np.argmax(probs[:, :num_classes], axis=1)
    gt_stream = [[AnnotatedInstance.from_class(UNIT_BOX, int(y), num_classes)] for y in labels]
    pred_stream = []
    for p, row in zip(pred, probs):
        score = float(row[p])
        box = AnnotatedInstance.from_class(UNIT_BOX, int(p), num_classes, score=score)
        pred_stream.append([PseudoLabel(box, score)])
    return compute_metrics(gt_stream, pred_stream)


def run_logistic_simulation(config: ExperimentConfig, seed: int = 0, use_icl: bool = None,
                            use_cra: bool = None, progress: bool = False) -> SimulationResult:
    """
    Run burn-in and mutual training for config.total_steps iterations.

    use_icl / use_cra default to the config switches. The returned accuracies are the
    teacher's on the balanced target evaluation set. Runs with the same seed see the
    same data stream whatever the switches, as long as use_cra is off in both.
    """
    use_icl = config.use_icl if use_icl is None else use_icl
    use_cra = config.use_cra if use_cra is None else use_cra
    strategy = config.weight_strategy if use_icl else "none"
    c = config.num_classes

    data_rng, train_rng = np.random.default_rng(seed).spawn(2)
    means = class_means(c)
    priors = class_priors(c, config.sim_imbalance)
    shift = config.sim_domain_shift
    eval_src = balanced_set(EVAL_PER_CLASS, means, 0.0, data_rng)
    eval_tgt = balanced_set(EVAL_PER_CLASS, means, shift, data_rng)

    model = LinearSoftmax(c)

    def strong(x):
        return x + STRONG_NOISE_STD * train_rng.standard_normal(x.shape)

    mt = MeanTeacher(model.init_params(), alpha=config.alpha, tau=config.tau,
                     burn_in_steps=config.burn_in_steps, total_steps=config.total_steps,
                     strong_transform=strong)
    src_m = ClassRelationMatrix(c)
    tgt_m = ClassRelationMatrix(c)
    src_bank = FeatureBank(c, Domain.SOURCE, config.bank_capacity)
    tgt_bank = FeatureBank(c, Domain.TARGET, config.bank_capacity)
    rows = []

    for it in tqdm(range(config.total_steps), desc=f"train-sim seed={seed}", disable=not progress, leave=False):
        stage = mt.stage
        if stage == TrainingStage.MUTUAL:
            mt.start_mutual()
        student = mt.student

        x_src, y_src = sample_stream(config.sim_batch_size, means, priors, 0.0, data_rng)
        if use_cra:
            x_in, soft = mix_features(x_src, y_src, Domain.SOURCE, src_m, src_bank, tgt_bank,
                                      config.source_aug_ratio, config, train_rng)
            src_bank.insert(x_src, y_src)
        else:
            x_in, soft = x_src, np.eye(c)[y_src]
        logits = model.logits(student, x_in)
        src_m = update_from_pairs(src_m, _pairs(soft.argmax(axis=1), _pred_for_icrm(logits, c)),
                                  config.icrm_momentum)
        samples = _samples(soft, logits)
        weights = compute_weights(src_m, samples, config.lambda_l, strategy, config.icl_epsilon)
        grad = model.param_grad(x_in, weighted_cls_loss_grad(samples, weights))

        x_tgt, _ = sample_stream(config.sim_batch_size, means, priors, shift, data_rng)
        x_strong = mt.strong_transform(x_tgt)
        if stage == TrainingStage.MUTUAL:
            teacher_logits = model.logits(mt.teacher, mt.weak_transform(x_tgt))
            keep, pseudo = teacher_pseudo_labels(teacher_logits, c, config.tau)
            if keep.size:
                x_t = x_strong[keep]
                if use_cra:
                    x_t, soft_t = mix_features(x_t, pseudo, Domain.TARGET, tgt_m, src_bank, tgt_bank,
                                               config.target_aug_ratio, config, train_rng)
                    tgt_bank.insert(x_tgt[keep], pseudo)
                else:
                    soft_t = np.eye(c)[pseudo]
                t_logits = model.logits(student, x_t)
                tgt_m = update_from_pairs(tgt_m, _pairs(pseudo, _pred_for_icrm(t_logits, c)),
                                          config.icrm_momentum)
                t_samples = _samples(soft_t, t_logits)
                t_weights = compute_weights(tgt_m, t_samples, config.lambda_l, strategy, config.icl_epsilon)
                grad = grad + config.lambda_u * model.param_grad(x_t, weighted_cls_loss_grad(t_samples, t_weights))

        mt.set_student(ParameterVector(student.values - config.sim_learning_rate * grad))
        mt.step()

        done = it + 1
        if done % config.eval_every == 0 or done == config.total_steps:
            params = mt.eval_parameters()
            report = evaluation_metrics(model.logits(params, eval_tgt[0]), eval_tgt[1], c)
            confusion = model_confusion(model.logits(mt.student, eval_src[0]), eval_src[1], c)
            error = float(np.max(np.abs(src_m.values - confusion)))
            rows.append(ResultRow(seed, stage.value, done, report.map, report.sigma, error))
            logger.debug(f"seed {seed} iteration {done}: map={report.map:.4f} sigma={report.sigma:.4f}")

    params = mt.eval_parameters()
    accuracy = per_class_accuracy(model.logits(params, eval_tgt[0]), eval_tgt[1], c)
    minority = minority_classes(priors)
    return SimulationResult(accuracy, float(accuracy[minority].mean()), rows, src_m, tgt_m)


def sign_test(wins: int, losses: int) -> float:
    """One-sided binomial sign test p-value for 'wins are more likely than losses' (ties excluded)."""
    if wins < 0 or losses < 0:
        raise ValueError(f"wins and losses must be >= 0, got {wins}, {losses}")
    n = wins + losses
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)


def compare_minority_accuracy(config: ExperimentConfig, seeds: Sequence[int]) -> Tuple[List[float], List[float]]:
    """Minority accuracy with and without ICL weights for each seed, CRA off in both arms."""
    with_icl, without_icl = [], []
    for seed in seeds:
        with_icl.append(run_logistic_simulation(config, seed, use_icl=True, use_cra=False).minority_accuracy)
        without_icl.append(run_logistic_simulation(config, seed, use_icl=False, use_cra=False).minority_accuracy)
    return with_icl, without_icl
