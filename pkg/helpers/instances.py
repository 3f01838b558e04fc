# Shared value types for annotated images and their instances
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
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np

LABEL_TOLERANCE = 1e-9


class Domain(str, Enum):
    SOURCE = "source"
    TARGET = "target"


def one_hot(class_id: int, num_classes: int) -> np.ndarray:
    """Return a float64 one-hot vector of length num_classes."""
    if not 0 <= class_id < num_classes:
        raise IndexError(f"class id {class_id} out of range for {num_classes} classes")
    vec = np.zeros(num_classes, dtype=np.float64)
    vec[class_id] = 1.0
    return vec


def check_pixels(pixels: np.ndarray) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ValueError(f"pixel buffer must be H x W x 3, got shape {pixels.shape}")
    if pixels.dtype != np.uint8:
        raise ValueError(f"pixel buffer must be uint8, got {pixels.dtype}")
    if pixels.shape[0] < 1 or pixels.shape[1] < 1:
        raise ValueError("pixel buffer must be at least 1x1")


@dataclass
class AnnotatedInstance:
    """
    One object in an image: an (x, y, w, h) box in pixels and a soft class label.

    The label is a probability vector over the foreground classes. Ground truth
    carries a one-hot label and score 1.0; CRA output carries a mixed label.
    """
    bbox: Tuple[float, float, float, float]
    label: np.ndarray
    score: float = 1.0

    def __post_init__(self):
        self.bbox = tuple(float(v) for v in self.bbox)
        if len(self.bbox) != 4:
            raise ValueError(f"bbox must have 4 values, got {self.bbox}")
        if self.bbox[2] < 1 or self.bbox[3] < 1:
            raise ValueError(f"bbox width and height must be >= 1, got {self.bbox}")
        self.label = np.asarray(self.label, dtype=np.float64)
        if self.label.ndim != 1 or self.label.size < 1:
            raise ValueError("label must be a non-empty 1-D probability vector")
        if np.any(self.label < 0) or np.any(self.label > 1) or abs(self.label.sum() - 1.0) > LABEL_TOLERANCE:
            raise ValueError(f"label is not a probability vector: {self.label}")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")

    @classmethod
    def from_class(cls, bbox, class_id: int, num_classes: int, score: float = 1.0) -> "AnnotatedInstance":
        return cls(bbox=bbox, label=one_hot(class_id, num_classes), score=score)

    @property
    def class_id(self) -> int:
        """Dominant class of the (possibly soft) label."""
        return int(np.argmax(self.label))

    @property
    def is_hard_label(self) -> bool:
        return bool(np.isclose(self.label.max(), 1.0, atol=LABEL_TOLERANCE, rtol=0.0))

    @property
    def num_classes(self) -> int:
        return int(self.label.size)

    def pixel_box(self) -> Tuple[int, int, int, int]:
        """Integer (x, y, w, h) used to address the pixel buffer."""
        x, y, w, h = self.bbox
        return (int(round(x)), int(round(y)), max(1, int(round(w))), max(1, int(round(h))))

    def area(self) -> int:
        _, _, w, h = self.pixel_box()
        return w * h


def box_in_bounds(box: Tuple[int, int, int, int], width: int, height: int) -> bool:
    x, y, w, h = box
    return x >= 0 and y >= 0 and x + w <= width and y + h <= height


@dataclass
class LabeledImage:
    """An RGB image with its instances and the domain it came from."""
    pixels: np.ndarray
    instances: List[AnnotatedInstance] = field(default_factory=list)
    domain: Domain = Domain.SOURCE
    image_id: str = ""
    validate: bool = field(default=True, repr=False)
    source_path: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        self.domain = Domain(self.domain)
        check_pixels(self.pixels)
        self.instances = list(self.instances)
        if self.validate:
            for idx, inst in enumerate(self.instances):
                if not box_in_bounds(inst.pixel_box(), self.width, self.height):
                    raise ValueError(
                        f"instance {idx} of image '{self.image_id}' has bbox {inst.bbox} "
                        f"outside the {self.width}x{self.height} image"
                    )

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    def copy(self) -> "LabeledImage":
        return LabeledImage(
            pixels=self.pixels.copy(),
            instances=[AnnotatedInstance(bbox=i.bbox, label=i.label.copy(), score=i.score) for i in self.instances],
            domain=self.domain,
            image_id=self.image_id,
            validate=False,
            source_path=self.source_path,
        )


def hard_labels(instances: Sequence[AnnotatedInstance]) -> List[int]:
    return [inst.class_id for inst in instances]
