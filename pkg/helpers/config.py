# Experiment configuration: defaults, help text, strict JSON loading and validation
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

import json
from dataclasses import asdict, dataclass, fields
from typing import List, Optional, Tuple


class ConfigError(ValueError):
    """Raised for malformed config files, unknown keys and out-of-range values."""


# Configuration class for the training and augmentation hyperparameters
class RelationConfig:
    """
    Centralized defaults for every experiment parameter.
    """

    # Model hyperparameters
    NUM_CLASSES = 8
    ALPHA = 0.9996                      # teacher EMA decay
    ICRM_MOMENTUM = 0.99                # ICRm EMA momentum
    BETA_PARAMS = (0.5, 0.5)            # Beta distribution for the MixUp ratio
    LAMBDA_U = 1.0                      # unsupervised loss weight
    LAMBDA_D = 0.1                      # discriminator loss weight
    LAMBDA_L = 1.0                      # Inter-Class Loss regularization
    TAU = 0.8                           # pseudo-label confidence threshold
    SOURCE_AUG_RATIO = 0.5
    TARGET_AUG_RATIO = 0.5
    BURN_IN_STEPS = 20000
    TOTAL_STEPS = 80000
    BANK_CAPACITY = 64                  # crops per class per domain
    SEED = 0

    # Method variants
    WEIGHT_STRATEGY = "icl"             # icl | class_level | icl_no_reg | none
    SELECTION_STRATEGY = "cra"          # cra | random
    USE_CRA = True
    USE_ICL = True
    KEEP_ASPECT_RATIO = False         # CRA crops stretched to the base box
    MIN_CROP_SIDE = 8
    IOU_THRESHOLD = 0.5
    ICL_EPSILON = 1e-6

    # Oracle detector and simulation
    ORACLE_CONFUSION = None             # None -> generated from NUM_CLASSES
    ORACLE_RECALL = 1.0
    ORACLE_SCORE_MEAN = 0.85
    ORACLE_SCORE_STD = 0.1
    BBOX_JITTER = 0.0
    CONVERGE_BATCHES = 500
    CONVERGE_BATCH_SIZE = 64
    SIM_BATCH_SIZE = 32
    SIM_LEARNING_RATE = 0.5
    SIM_IMBALANCE = 10
    SIM_DOMAIN_SHIFT = 0.3
    EVAL_EVERY = 100


HELP_TEXT_DICT = {
    'num_classes': "Number of foreground classes C.",
    'alpha': "Decay rate of the student-to-teacher EMA. Closer to 1 means a slower teacher.",
    'icrm_momentum': "EMA momentum of the Inter-Class Relation matrix. Closer to 1 smooths more across batches.",
    'beta_params': "Parameters (a, b) of the Beta distribution the MixUp ratio is drawn from.",
    'lambda_u': "Weight of the unsupervised (pseudo-label) loss in the total loss.",
    'lambda_d': "Weight of the domain discriminator loss in the total loss.",
    'lambda_l': "Regularization term of the Inter-Class Loss weights. Larger values pull weights towards 1.",
    'tau': "Confidence threshold for keeping teacher pseudo-labels (inclusive).",
    'source_aug_ratio': "Probability that an instance of a source image is augmented by CRA.",
    'target_aug_ratio': "Probability that an instance of a target image is augmented by CRA.",
    'burn_in_steps': "Supervised-only iterations before mutual teacher-student training starts.",
    'total_steps': "Total number of training iterations.",
    'bank_capacity': "Crops kept per class in each Cropbank (FIFO).",
    'seed': "Random seed; identical seeds give byte-identical outputs.",
    'weight_strategy': "Classification loss weighting: icl, class_level, icl_no_reg or none.",
    'selection_strategy': "How the mix class is picked: cra (ICRm-weighted) or random.",
    'use_cra': "Enable Class-Relation Augmentation.",
    'use_icl': "Enable the Inter-Class Loss weights (otherwise every weight is 1).",
    'keep_aspect_ratio': "Fit CRA crops inside the base box with their aspect ratio kept instead of stretching them.",
    'min_crop_side': "Crops smaller than this many pixels on a side are not banked.",
    'iou_threshold': "Minimum IoU for matching a prediction to a ground truth.",
    'icl_epsilon': "Floor for ICRm(c, c) in the misclassification weight.",
    'oracle_confusion': "Row-stochastic C x C confusion of the oracle detector (null generates one).",
    'oracle_recall': "Per-class (list) or shared (number) probability that the oracle detects an instance.",
    'oracle_score_mean': "Mean confidence of oracle detections.",
    'oracle_score_std': "Standard deviation of oracle detection confidence.",
    'bbox_jitter': "Standard deviation (pixels) of Gaussian noise added to oracle boxes.",
    'converge_batches': "Batches streamed by the ICRm convergence experiment.",
    'converge_batch_size': "Ground-truth instances per convergence batch.",
    'sim_batch_size': "Samples per domain per iteration in the logistic simulation.",
    'sim_learning_rate': "Gradient descent step size of the logistic simulation.",
    'sim_imbalance': "Majority-to-minority ratio of the simulated source stream.",
    'sim_domain_shift': "Feature offset between the simulated source and target domains.",
    'eval_every': "Iterations between evaluation rows written to the results CSV.",
}


def _unit(value) -> bool:
    return 0.0 <= value <= 1.0


@dataclass
class ExperimentConfig:
    num_classes: int = RelationConfig.NUM_CLASSES
    alpha: float = RelationConfig.ALPHA
    icrm_momentum: float = RelationConfig.ICRM_MOMENTUM
    beta_params: Tuple[float, float] = RelationConfig.BETA_PARAMS
    lambda_u: float = RelationConfig.LAMBDA_U
    lambda_d: float = RelationConfig.LAMBDA_D
    lambda_l: float = RelationConfig.LAMBDA_L
    tau: float = RelationConfig.TAU
    source_aug_ratio: float = RelationConfig.SOURCE_AUG_RATIO
    target_aug_ratio: float = RelationConfig.TARGET_AUG_RATIO
    burn_in_steps: int = RelationConfig.BURN_IN_STEPS
    total_steps: int = RelationConfig.TOTAL_STEPS
    bank_capacity: int = RelationConfig.BANK_CAPACITY
    seed: int = RelationConfig.SEED
    weight_strategy: str = RelationConfig.WEIGHT_STRATEGY
    selection_strategy: str = RelationConfig.SELECTION_STRATEGY
    use_cra: bool = RelationConfig.USE_CRA
    use_icl: bool = RelationConfig.USE_ICL
    keep_aspect_ratio: bool = RelationConfig.KEEP_ASPECT_RATIO
    min_crop_side: int = RelationConfig.MIN_CROP_SIDE
    iou_threshold: float = RelationConfig.IOU_THRESHOLD
    icl_epsilon: float = RelationConfig.ICL_EPSILON
    oracle_confusion: Optional[List[List[float]]] = RelationConfig.ORACLE_CONFUSION
    oracle_recall: object = RelationConfig.ORACLE_RECALL
    oracle_score_mean: float = RelationConfig.ORACLE_SCORE_MEAN
    oracle_score_std: float = RelationConfig.ORACLE_SCORE_STD
    bbox_jitter: float = RelationConfig.BBOX_JITTER
    converge_batches: int = RelationConfig.CONVERGE_BATCHES
    converge_batch_size: int = RelationConfig.CONVERGE_BATCH_SIZE
    sim_batch_size: int = RelationConfig.SIM_BATCH_SIZE
    sim_learning_rate: float = RelationConfig.SIM_LEARNING_RATE
    sim_imbalance: float = RelationConfig.SIM_IMBALANCE
    sim_domain_shift: float = RelationConfig.SIM_DOMAIN_SHIFT
    eval_every: int = RelationConfig.EVAL_EVERY

    def __post_init__(self):
        self.beta_params = tuple(self.beta_params)
        self.validate()

    def validate(self) -> None:
        def fail(key, message):
            raise ConfigError(f"config key '{key}': {message}")

        for key in ("num_classes", "burn_in_steps", "total_steps", "bank_capacity", "min_crop_side",
                    "converge_batches", "converge_batch_size", "sim_batch_size", "eval_every", "seed"):
            value = getattr(self, key)
            if isinstance(value, bool) or not isinstance(value, int):
                fail(key, f"expected an integer, got {value!r}")
        if self.num_classes < 2:
            fail("num_classes", f"must be >= 2, got {self.num_classes}")
        for key in ("total_steps", "bank_capacity", "min_crop_side", "converge_batches",
                    "converge_batch_size", "sim_batch_size", "eval_every"):
            if getattr(self, key) < 1:
                fail(key, f"must be positive, got {getattr(self, key)}")
        if self.burn_in_steps < 0 or self.burn_in_steps > self.total_steps:
            fail("burn_in_steps", f"must be in [0, total_steps], got {self.burn_in_steps}")
        for key in ("alpha", "icrm_momentum", "tau", "source_aug_ratio", "target_aug_ratio"):
            value = getattr(self, key)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not _unit(value):
                fail(key, f"must be a number in [0, 1], got {value!r}")
        if not 0.0 < self.iou_threshold <= 1.0:
            fail("iou_threshold", f"must be in (0, 1], got {self.iou_threshold}")
        if len(self.beta_params) != 2 or any(not isinstance(b, (int, float)) or b <= 0 for b in self.beta_params):
            fail("beta_params", f"must be two positive numbers, got {list(self.beta_params)}")
        for key in ("lambda_u", "lambda_d", "lambda_l", "oracle_score_std", "bbox_jitter", "sim_domain_shift"):
            if getattr(self, key) < 0:
                fail(key, f"must be >= 0, got {getattr(self, key)}")
        if self.icl_epsilon <= 0:
            fail("icl_epsilon", f"must be positive, got {self.icl_epsilon}")
        if self.sim_learning_rate <= 0:
            fail("sim_learning_rate", f"must be positive, got {self.sim_learning_rate}")
        if self.sim_imbalance < 1:
            fail("sim_imbalance", f"must be >= 1, got {self.sim_imbalance}")
        if not _unit(self.oracle_score_mean):
            fail("oracle_score_mean", f"must be in [0, 1], got {self.oracle_score_mean}")
        if self.weight_strategy not in ("icl", "class_level", "icl_no_reg", "none"):
            fail("weight_strategy", f"unknown strategy '{self.weight_strategy}'")
        if self.selection_strategy not in ("cra", "random"):
            fail("selection_strategy", f"unknown strategy '{self.selection_strategy}'")
        for key in ("use_cra", "use_icl", "keep_aspect_ratio"):
            if not isinstance(getattr(self, key), bool):
                fail(key, f"expected true or false, got {getattr(self, key)!r}")

        recall = self.oracle_recall
        recall_values = recall if isinstance(recall, list) else [recall]
        if isinstance(recall, list) and len(recall) != self.num_classes:
            fail("oracle_recall", f"needs {self.num_classes} entries, got {len(recall)}")
        if any(isinstance(r, bool) or not isinstance(r, (int, float)) or not _unit(r) for r in recall_values):
            fail("oracle_recall", f"values must be in [0, 1], got {recall!r}")

        if self.oracle_confusion is not None:
            rows = self.oracle_confusion
            if len(rows) != self.num_classes or any(len(r) != self.num_classes for r in rows):
                fail("oracle_confusion", f"must be {self.num_classes} x {self.num_classes}")
            for r in rows:
                if any(v < 0 for v in r) or abs(sum(r) - 1.0) > 1e-9:
                    fail("oracle_confusion", f"rows must be probability vectors, got {r}")

    def to_dict(self) -> dict:
        data = asdict(self)
        data["beta_params"] = list(self.beta_params)
        return data


CONFIG_KEYS = {f.name for f in fields(ExperimentConfig)}


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    unknown = sorted(set(data) - CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as e:
        raise ConfigError(f"invalid config value: {e}") from e


def load_config(path) -> ExperimentConfig:
    """Load a strict JSON config; missing keys take the defaults in RelationConfig."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed config file {path}: {e}") from e
    return config_from_dict(data)


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
