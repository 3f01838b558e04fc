# Orchestrates the command-line experiments: ICRm convergence, CRA preview, training sim, weight table
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

import logging
import os
from dataclasses import replace
from typing import List, Optional

import click
import numpy as np
import pandas as pd

from helpers.augmentation import augment_image
from helpers.config import ConfigError, ExperimentConfig, load_config, save_config
from helpers.cropbank import CropBank, bank_image
from helpers.dataset_io import DatasetError, load_dataset, write_dataset
from helpers.instances import Domain, LabeledImage, one_hot
from helpers.inter_class_loss import ClassifiedSample, compute_weights, raw_weight, regularize
from helpers.relation import ClassRelationMatrix
from simulator.convergence import converge_with_history
from simulator.logistic_sim import run_logistic_simulation
from simulator.oracle_detector import oracle_from_config
from simulator.results import RESULTS_FILE_NAME, append_results

logger = logging.getLogger(__name__)

COMMANDS = ("icrm-converge", "augment-preview", "train-sim", "weights-dump")
ICRM_FILE_NAME = "icrm.json"
TARGET_ICRM_FILE_NAME = "icrm_target.json"
WEIGHTS_FILE_NAME = "weights.csv"
BANKS_DIR_NAME = "banks"
CONFIG_FILE_NAME = "config.json"
BACKGROUND_NAME = "background"


def uniform_icrm(num_classes: int) -> ClassRelationMatrix:
    """Fully initialized matrix with every entry 1 / C; every class is then a minority class."""
    return ClassRelationMatrix.from_values(np.full((num_classes, num_classes), 1.0 / num_classes))


class ExperimentController:
    def __init__(self, config: ExperimentConfig, seed: Optional[int] = None, out: Optional[str] = None,
                 source_dir: Optional[str] = None, target_dir: Optional[str] = None,
                 icrm_path: Optional[str] = None, lenient: bool = False, progress: bool = True):
        self.config = config
        self.seed = config.seed if seed is None else seed
        self.out = out
        self.source_dir = source_dir
        self.target_dir = target_dir
        self.icrm_path = icrm_path
        self.lenient = lenient
        self.progress = progress

    def _require_out(self, command: str) -> str:
        if not self.out:
            raise ConfigError(f"{command} needs --out")
        os.makedirs(self.out, exist_ok=True)
        return self.out

    def _load_icrm(self) -> ClassRelationMatrix:
        try:
            m = ClassRelationMatrix.load(self.icrm_path)
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed ICRm checkpoint {self.icrm_path}: {e}") from e
        if m.num_classes != self.config.num_classes:
            raise ConfigError(
                f"config key 'num_classes': ICRm checkpoint {self.icrm_path} has {m.num_classes} classes, "
                f"config has {self.config.num_classes}"
            )
        return m

    def run_icrm_converge(self) -> None:
        out = self._require_out("icrm-converge")
        det = oracle_from_config(self.config)
        logger.info(f"Running ICRm convergence: {self.config.converge_batches} batches of "
                    f"{self.config.converge_batch_size}, momentum {self.config.icrm_momentum}, seed {self.seed}")
        run = converge_with_history(
            det,
            batches=self.config.converge_batches,
            momentum=self.config.icrm_momentum,
            rng=np.random.default_rng(self.seed),
            batch_size=self.config.converge_batch_size,
            eval_every=self.config.eval_every,
            seed=self.seed,
            iou_threshold=self.config.iou_threshold,
            progress=self.progress,
        )
        append_results(run.rows, os.path.join(out, RESULTS_FILE_NAME))
        run.matrix.save(os.path.join(out, ICRM_FILE_NAME))
        logger.info(f"Final ICRm error {run.error:.6f}")

    def _load_images(self, directory: Optional[str], domain: Domain) -> List[LabeledImage]:
        if not directory:
            return []
        return load_dataset(directory, self.config.num_classes, strict=not self.lenient, domain=domain)

    def run_augment_preview(self) -> None:
        if not self.source_dir:
            raise ConfigError("augment-preview needs --source-dir")
        out = self._require_out("augment-preview")
        cfg = self.config
        images = self._load_images(self.source_dir, Domain.SOURCE) + self._load_images(self.target_dir, Domain.TARGET)
        seen = set()
        for image in images:
            if image.image_id in seen:
                raise DatasetError(f"image '{image.image_id}': duplicate image id across datasets")
            seen.add(image.image_id)

        m = self._load_icrm() if self.icrm_path else uniform_icrm(cfg.num_classes)
        banks = {
            domain: CropBank(cfg.num_classes, domain, cfg.bank_capacity, cfg.min_crop_side)
            for domain in (Domain.SOURCE, Domain.TARGET)
        }
        for image in images:
            # target annotations stand in for pseudo-labels, so they pass the same threshold
            min_score = cfg.tau if image.domain == Domain.TARGET else 0.0
            bank_image(banks[image.domain], image, min_score=min_score)

        rng = np.random.default_rng(self.seed)
        augmented, unchanged = [], set()
        for image in images:
            ratio = cfg.source_aug_ratio if image.domain == Domain.SOURCE else cfg.target_aug_ratio
            if not cfg.use_cra:
                ratio = 0.0
            result, plans = augment_image(image, m, banks[Domain.SOURCE], banks[Domain.TARGET], ratio, rng,
                                          beta_params=cfg.beta_params, strategy=cfg.selection_strategy,
                                          keep_aspect_ratio=cfg.keep_aspect_ratio)
            if not plans:
                unchanged.add(image.image_id)
            augmented.append(result)
            logger.debug(f"image '{image.image_id}': {len(plans)} of {len(image.instances)} instances mixed")

        write_dataset(augmented, out, unchanged=unchanged)
        for bank in banks.values():
            bank.save(os.path.join(out, BANKS_DIR_NAME))
        logger.info(f"Wrote {len(augmented)} images ({len(images) - len(unchanged)} augmented) to {out}")

    def run_train_sim(self) -> None:
        out = self._require_out("train-sim")
        result = run_logistic_simulation(self.config, self.seed, progress=self.progress)
        append_results(result.rows, os.path.join(out, RESULTS_FILE_NAME))
        result.source_icrm.save(os.path.join(out, ICRM_FILE_NAME))
        result.target_icrm.save(os.path.join(out, TARGET_ICRM_FILE_NAME))
        save_config(replace(self.config, seed=self.seed), os.path.join(out, CONFIG_FILE_NAME))
        accuracy = ", ".join(f"{c}: {a:.4f}" for c, a in enumerate(result.per_class_accuracy))
        click.echo(f"seed {self.seed} minority accuracy {result.minority_accuracy:.4f} (per class {accuracy})")

    def weights_table(self, m: ClassRelationMatrix) -> pd.DataFrame:
        """
        One row per (ground truth, prediction) cell, background prediction included.

        The cells are weighted together as one batch. regularized_raw applies the regularization
        straight to the raw weight, skipping the batch normalization.
        """
        cfg = self.config
        c = m.num_classes
        cells = [(gt, pred) for gt in range(c) for pred in range(c + 1)]
        # a one-hot logit vector makes pred the argmax
        samples = [ClassifiedSample(gt_label=one_hot(gt, c), pred_logits=one_hot(pred, c + 1)) for gt, pred in cells]
        raw = np.array([raw_weight(m, gt, pred, cfg.icl_epsilon) for gt, pred in cells])
        weights = compute_weights(m, samples, cfg.lambda_l, cfg.weight_strategy, cfg.icl_epsilon)
        return pd.DataFrame({
            "gt": [gt for gt, _ in cells],
            "pred": [BACKGROUND_NAME if pred == c else str(pred) for _, pred in cells],
            "raw": raw,
            "regularized_raw": regularize(raw, cfg.lambda_l),
            "weight": weights,
        })

    def run_weights_dump(self) -> None:
        if not self.icrm_path:
            raise ConfigError("weights-dump needs --icrm")
        table = self.weights_table(self._load_icrm())
        click.echo(table.to_string(index=False, float_format=lambda v: f"{v:.6f}"))
        if self.out:
            os.makedirs(self.out, exist_ok=True)
            table.to_csv(os.path.join(self.out, WEIGHTS_FILE_NAME), index=False,
                         float_format="%.10f", lineterminator="\n")

    def run(self, command: str) -> int:
        """Run one command; fatal errors become a one-line diagnostic and exit code 1."""
        handlers = {
            "icrm-converge": self.run_icrm_converge,
            "augment-preview": self.run_augment_preview,
            "train-sim": self.run_train_sim,
            "weights-dump": self.run_weights_dump,
        }
        if command not in handlers:
            click.echo(f"error: unknown command '{command}', expected one of {', '.join(COMMANDS)}", err=True)
            return 1
        try:
            handlers[command]()
        except (ConfigError, DatasetError, ValueError, IndexError, OSError) as e:
            click.echo(f"error: {e}", err=True)
            return 1
        return 0


def run(command: str, config: ExperimentConfig, source_dir: Optional[str] = None,
        target_dir: Optional[str] = None, out: Optional[str] = None, seed: Optional[int] = None,
        lenient: bool = False, icrm_path: Optional[str] = None, progress: bool = True) -> int:
    controller = ExperimentController(config, seed=seed, out=out, source_dir=source_dir, target_dir=target_dir,
                                      icrm_path=icrm_path, lenient=lenient, progress=progress)
    return controller.run(command)


def load_run_config(config_path: Optional[str]) -> ExperimentConfig:
    return load_config(config_path) if config_path else ExperimentConfig()
