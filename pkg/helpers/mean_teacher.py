# Mean-teacher scaffolding: EMA parameter averaging, burn-in and pseudo-label thresholding
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
import logging
import os
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence

import numpy as np

from helpers.instances import AnnotatedInstance

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 0.9996
DEFAULT_TAU = 0.8
DEFAULT_BURN_IN_STEPS = 20000
DEFAULT_TOTAL_STEPS = 80000


class TrainingStage(str, Enum):
    BURN_IN = "burn_in"
    MUTUAL = "mutual"
    FINISHED = "finished"


@dataclass
class ParameterVector:
    """Flat float64 view of a model's parameters."""
    values: np.ndarray

    def __post_init__(self):
        self.values = np.array(self.values, dtype=np.float64).ravel()
        if self.values.size == 0:
            raise ValueError("parameter vector must not be empty")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameter vector must be finite")

    @property
    def length(self) -> int:
        return int(self.values.size)

    def copy(self) -> "ParameterVector":
        return ParameterVector(self.values.copy())


@dataclass
class PseudoLabel:
    """A teacher detection: the instance carries the hard label, score is the teacher confidence."""
    instance: AnnotatedInstance
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"pseudo-label score must be in [0, 1], got {self.score}")

    @property
    def class_id(self) -> int:
        return self.instance.class_id


def _check_unit(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")


def ema_params(teacher: ParameterVector, student: ParameterVector, alpha: float = DEFAULT_ALPHA) -> ParameterVector:
    """teacher <- alpha * teacher + (1 - alpha) * student"""
    _check_unit("alpha", alpha)
    if teacher.length != student.length:
        raise ValueError(f"teacher has {teacher.length} parameters but student has {student.length}")
    return ParameterVector(alpha * teacher.values + (1.0 - alpha) * student.values)


def burn_in_copy(student: ParameterVector) -> ParameterVector:
    return student.copy()


def filter_pseudo_labels(candidates: Sequence[PseudoLabel], tau: float = DEFAULT_TAU) -> List[PseudoLabel]:
    """Keep candidates with score >= tau, in their original order."""
    _check_unit("tau", tau)
    return [c for c in candidates if c.score >= tau]


def training_schedule(iteration: int, burn_in_steps: int = DEFAULT_BURN_IN_STEPS,
                      total_steps: int = DEFAULT_TOTAL_STEPS) -> TrainingStage:
    if iteration < 0:
        raise ValueError(f"iteration must be >= 0, got {iteration}")
    if iteration >= total_steps:
        return TrainingStage.FINISHED
    if iteration < burn_in_steps:
        return TrainingStage.BURN_IN
    return TrainingStage.MUTUAL


def _identity(x):
    return x


class MeanTeacher:
    """
    Student/teacher pair over flat parameter vectors.

    The teacher does not exist during burn-in. On the first MUTUAL iteration the student
    is copied into it, and from then on it follows the student by EMA once per iteration.
    weak_transform / strong_transform are the hooks for the teacher's and student's input
    augmentation; both default to identity.
    """

    def __init__(self, student: ParameterVector, alpha: float = DEFAULT_ALPHA, tau: float = DEFAULT_TAU,
                 burn_in_steps: int = DEFAULT_BURN_IN_STEPS, total_steps: int = DEFAULT_TOTAL_STEPS,
                 weak_transform: Callable = _identity, strong_transform: Callable = _identity):
        _check_unit("alpha", alpha)
        _check_unit("tau", tau)
        if burn_in_steps < 0 or total_steps < 1 or burn_in_steps > total_steps:
            raise ValueError(f"invalid schedule: burn_in_steps={burn_in_steps}, total_steps={total_steps}")
        self.student = student
        self.teacher: Optional[ParameterVector] = None
        self.alpha = alpha
        self.tau = tau
        self.burn_in_steps = burn_in_steps
        self.total_steps = total_steps
        self.weak_transform = weak_transform
        self.strong_transform = strong_transform
        self.iteration = 0

    @property
    def stage(self) -> TrainingStage:
        return training_schedule(self.iteration, self.burn_in_steps, self.total_steps)

    def set_student(self, student: ParameterVector) -> None:
        self.student = student

    def step(self) -> TrainingStage:
        """
        Finish the current iteration (called after the student update) and advance.
        Returns the stage the finished iteration belonged to.
        """
        stage = self.stage
        if stage == TrainingStage.MUTUAL:
            if self.teacher is None:
                self.teacher = burn_in_copy(self.student)
                logger.info(f"Burn-in finished at iteration {self.iteration}, teacher initialized from student")
            else:
                self.teacher = ema_params(self.teacher, self.student, self.alpha)
        self.iteration += 1
        return stage

    def start_mutual(self) -> None:
        """Copy the student into the teacher at the burn-in boundary."""
        if self.teacher is None:
            self.teacher = burn_in_copy(self.student)
            logger.info(f"Burn-in finished at iteration {self.iteration}, teacher initialized from student")

    def eval_parameters(self) -> ParameterVector:
        """Value copy of the parameters used for evaluation (teacher once it exists)."""
        return (self.teacher or self.student).copy()

    def save_checkpoint(self, path_prefix) -> None:
        """
        Write <prefix>.student.bin / <prefix>.teacher.bin (raw float64) and a
        <prefix>.json sidecar with iteration, alpha, tau and whether a teacher exists.
        """
        directory = os.path.dirname(str(path_prefix))
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.student.values.astype("<f8").tofile(f"{path_prefix}.student.bin")
        if self.teacher is not None:
            self.teacher.values.astype("<f8").tofile(f"{path_prefix}.teacher.bin")
        sidecar = {"iteration": self.iteration, "alpha": self.alpha, "tau": self.tau,
                   "has_teacher": self.teacher is not None}
        with open(f"{path_prefix}.json", "w", encoding="utf-8") as f:
            json.dump(sidecar, f)

    @classmethod
    def load_checkpoint(cls, path_prefix, burn_in_steps: int = DEFAULT_BURN_IN_STEPS,
                        total_steps: int = DEFAULT_TOTAL_STEPS) -> "MeanTeacher":
        with open(f"{path_prefix}.json", "r", encoding="utf-8") as f:
            sidecar = json.load(f)
        student = ParameterVector(np.fromfile(f"{path_prefix}.student.bin", dtype="<f8"))
        mt = cls(student, alpha=float(sidecar["alpha"]), tau=float(sidecar["tau"]),
                 burn_in_steps=burn_in_steps, total_steps=total_steps)
        teacher_path = f"{path_prefix}.teacher.bin"
        if sidecar.get("has_teacher", os.path.exists(teacher_path)):
            mt.teacher = ParameterVector(np.fromfile(teacher_path, dtype="<f8"))
        mt.iteration = int(sidecar["iteration"])
        return mt
