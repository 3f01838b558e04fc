# Cropbank: per-class FIFO stores of instance crops, one bank per domain
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
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from PIL import Image

from helpers.instances import Domain, LabeledImage, box_in_bounds, check_pixels

logger = logging.getLogger(__name__)

DEFAULT_CAPACITY_PER_CLASS = 64
DEFAULT_MIN_CROP_SIDE = 8
MANIFEST_NAME = "manifest.json"


@dataclass
class InstanceCrop:
    """Pixels cut from one annotated box, tagged with its class and domain."""
    pixels: np.ndarray
    class_id: int
    domain: Domain
    area: int = field(init=False)

    def __post_init__(self):
        check_pixels(self.pixels)
        self.domain = Domain(self.domain)
        self.class_id = int(self.class_id)
        self.area = int(self.pixels.shape[0] * self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


class CropBank:
    """
    Per-class ring buffers of InstanceCrops for one domain.

    Each ring is a bounded deque, so appending to a full ring evicts its oldest crop.
    Crops smaller than min_crop_side on either side are not banked, since they would
    have to be upsampled heavily when mixed into a larger base instance.
    """

    def __init__(self, num_classes: int, domain: Domain,
                 capacity_per_class: int = DEFAULT_CAPACITY_PER_CLASS,
                 min_crop_side: int = DEFAULT_MIN_CROP_SIDE):
        if num_classes < 1:
            raise ValueError(f"num_classes must be positive, got {num_classes}")
        if capacity_per_class < 1:
            raise ValueError(f"capacity_per_class must be positive, got {capacity_per_class}")
        self.num_classes = num_classes
        self.domain = Domain(domain)
        self.capacity_per_class = capacity_per_class
        self.min_crop_side = min_crop_side
        self.rings: Dict[int, deque] = {c: deque(maxlen=capacity_per_class) for c in range(num_classes)}
        # insertion counter, paired with each crop so persistence can restore FIFO order
        self._counter = 0
        self._ids: Dict[int, deque] = {c: deque(maxlen=capacity_per_class) for c in range(num_classes)}

    def _check_class(self, class_id: int) -> None:
        if not 0 <= class_id < self.num_classes:
            raise IndexError(f"class id {class_id} out of range for {self.num_classes} classes")

    def insert(self, crop: InstanceCrop) -> "CropBank":
        if crop.domain != self.domain:
            raise ValueError(f"cannot insert a {crop.domain.value} crop into the {self.domain.value} bank")
        self._check_class(crop.class_id)
        if crop.height < self.min_crop_side or crop.width < self.min_crop_side:
            logger.debug(f"Skipping {crop.width}x{crop.height} crop of class {crop.class_id}: below {self.min_crop_side}px")
            return self
        self.rings[crop.class_id].append(crop)
        self._ids[crop.class_id].append(self._counter)
        self._counter += 1
        return self

    def qualifying(self, class_id: int, min_area: float = 0) -> List[InstanceCrop]:
        """Crops of a class whose area reaches min_area, oldest first."""
        self._check_class(class_id)
        return [crop for crop in self.rings[class_id] if crop.area >= min_area]

    def sample(self, class_id: int, min_area: float, rng: np.random.Generator) -> Optional[InstanceCrop]:
        if min_area < 0:
            raise ValueError(f"min_area must be >= 0, got {min_area}")
        candidates = self.qualifying(class_id, min_area)
        if not candidates:
            return None
        return candidates[int(rng.integers(len(candidates)))]

    def snapshot(self, class_id: int) -> Tuple[InstanceCrop, ...]:
        self._check_class(class_id)
        return tuple(self.rings[class_id])

    def __len__(self) -> int:
        return sum(len(ring) for ring in self.rings.values())

    def save(self, directory) -> None:
        """
        Write the bank to <directory>/<domain>/<class>/<counter>.png plus a manifest
        recording the ring order, so a reload resumes with the same FIFO state.
        """
        root = os.path.join(directory, self.domain.value)
        manifest = {
            "domain": self.domain.value,
            "num_classes": self.num_classes,
            "capacity_per_class": self.capacity_per_class,
            "min_crop_side": self.min_crop_side,
            "counter": self._counter,
            "rings": {},
        }
        for class_id, ring in self.rings.items():
            class_dir = os.path.join(root, str(class_id))
            os.makedirs(class_dir, exist_ok=True)
            names = []
            for crop_id, crop in zip(self._ids[class_id], ring):
                name = f"{crop_id:08d}.png"
                Image.fromarray(crop.pixels).save(os.path.join(class_dir, name))
                names.append(name)
            manifest["rings"][str(class_id)] = names
        with open(os.path.join(root, MANIFEST_NAME), "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2)

    @classmethod
    def load(cls, directory, domain: Domain) -> "CropBank":
        root = os.path.join(directory, Domain(domain).value)
        with open(os.path.join(root, MANIFEST_NAME), "r", encoding="utf-8") as f:
            manifest = json.load(f)
        bank = cls(
            num_classes=int(manifest["num_classes"]),
            domain=Domain(manifest["domain"]),
            capacity_per_class=int(manifest["capacity_per_class"]),
            min_crop_side=int(manifest["min_crop_side"]),
        )
        for class_key, names in manifest["rings"].items():
            class_id = int(class_key)
            for name in names:
                with Image.open(os.path.join(root, class_key, name)) as img:
                    pixels = np.array(img.convert("RGB"), dtype=np.uint8)
                bank.rings[class_id].append(InstanceCrop(pixels, class_id, bank.domain))
                bank._ids[class_id].append(int(os.path.splitext(name)[0]))
        bank._counter = int(manifest["counter"])
        return bank


def extract_crops(image: LabeledImage, min_score: float = 0.0) -> List[InstanceCrop]:
    """
    Cut one crop per hard-labeled instance of the image.

    Soft-labeled instances (already mixed by CRA) are never re-banked, and target
    instances below min_score (the pseudo-label threshold) are left out. Boxes that
    fall outside the image are skipped with a warning.
    """
    crops = []
    for idx, inst in enumerate(image.instances):
        if not inst.is_hard_label:
            continue
        if inst.score < min_score:
            continue
        x, y, w, h = inst.pixel_box()
        if not box_in_bounds((x, y, w, h), image.width, image.height):
            logger.warning(f"Instance {idx} of image '{image.image_id}' has bbox {inst.bbox} outside the image, skipping crop")
            continue
        pixels = image.pixels[y:y + h, x:x + w].copy()
        crops.append(InstanceCrop(pixels=pixels, class_id=inst.class_id, domain=image.domain))
    return crops


def bank_image(bank: CropBank, image: LabeledImage, min_score: float = 0.0) -> int:
    """Extract and insert every eligible crop of an image; returns how many were offered."""
    crops = extract_crops(image, min_score=min_score)
    for crop in crops:
        bank.insert(crop)
    return len(crops)
