# Class-Relation Augmentation: ICRm-guided MixUp of instance crops over base instances
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
Class-Relation Augmentation (CRA)

For every instance of an image (the base instance), CRA may blend in a crop of a related class:

1. Gate the instance with probability `ratio` (source and target images use their own ratio).
2. Classify the base class as majority or minority with the ICRm of the image's domain.
3. Skip minority base instances in target images so the target data keeps its integrity.
4. Pick the mix class by weighted sampling:
- majority base: the ICRm column of the base class, own entry zeroed (classes confused INTO it).
- minority base: the ICRm row of the base class, own entry kept (self-mix allowed).
5. Pick a crop of that class from the Cropbanks, at least 0.25 of the base box area:
- source image: any qualifying crop from both banks.
- target image: target bank first, the source bank only if the target ring has none.
6. Draw the mixing ratio beta ~ Beta(a, b), resize the crop to the base box and blend pixels
   and labels. The crop is stretched to the box by default; with keep_aspect_ratio it is
   fitted inside the box, centred, and the uncovered pixels keep the base image. The
   bounding box never changes.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from helpers.cropbank import CropBank, InstanceCrop
from helpers.instances import LABEL_TOLERANCE, AnnotatedInstance, Domain, LabeledImage, one_hot
from helpers.relation import ClassRelationMatrix, partition_classes

logger = logging.getLogger(__name__)

DEFAULT_BETA_PARAMS = (0.5, 0.5)
MIN_AREA_FRACTION = 0.25
SELECTION_STRATEGIES = ("cra", "random")


@dataclass
class MixPlan:
    base_index: int
    mix_crop: Optional[InstanceCrop]
    beta: float

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta <= 1.0:
        raise ValueError(f"beta must be in [0, 1], got {beta}")


def mix_weights(m: ClassRelationMatrix, base_class: int, is_majority: bool) -> np.ndarray:
    """Sampling weights over mix classes for one base class."""
    if not 0 <= base_class < m.num_classes:
        raise IndexError(f"base class {base_class} out of range for {m.num_classes} classes")
    if is_majority:
        weights = m.values[:, base_class].copy()
        weights[base_class] = 0.0
    else:
        weights = m.values[base_class, :].copy()
    return weights


def select_mix_class(m: ClassRelationMatrix, base_class: int, is_majority: bool,
                     rng: np.random.Generator, strategy: str = "cra") -> Optional[int]:
    """Draw the class to blend into a base instance; None when no class has weight."""
    if strategy == "random":
        if not 0 <= base_class < m.num_classes:
            raise IndexError(f"base class {base_class} out of range for {m.num_classes} classes")
        return int(rng.integers(m.num_classes))
    if strategy != "cra":
        raise ValueError(f"unknown selection strategy '{strategy}', expected one of {SELECTION_STRATEGIES}")

    weights = mix_weights(m, base_class, is_majority)
    total = weights.sum()
    if total <= 0.0:
        return None
    return int(rng.choice(m.num_classes, p=weights / total))


def resize_to_base(crop: InstanceCrop, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resize of a crop to exactly target_w x target_h (aspect ratio not kept)."""
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be at least 1x1, got {target_w}x{target_h}")
    image = Image.fromarray(crop.pixels)
    resized = image.resize((int(target_w), int(target_h)), resample=Image.Resampling.BILINEAR)
    return np.asarray(resized, dtype=np.uint8)


def fit_to_base(crop: InstanceCrop, base: np.ndarray) -> np.ndarray:
    """
    Scale a crop to fit inside the base region with its aspect ratio kept, centre it, and
    fill the rest with the base pixels. Returns an array shaped like base.
    """
    target_h, target_w = base.shape[:2]
    crop_h, crop_w = crop.pixels.shape[:2]
    scale = min(target_w / crop_w, target_h / crop_h)
    new_w = int(min(target_w, max(1, np.floor(crop_w * scale + 0.5))))
    new_h = int(min(target_h, max(1, np.floor(crop_h * scale + 0.5))))
    fitted = resize_to_base(crop, new_w, new_h)
    out = base.copy()
    x0, y0 = (target_w - new_w) // 2, (target_h - new_h) // 2
    out[y0:y0 + new_h, x0:x0 + new_w] = fitted
    return out


def mixup_pixels(base: np.ndarray, mix: np.ndarray, beta: float) -> np.ndarray:
    """beta * base + (1 - beta) * mix per pixel, rounded half away from zero to uint8."""
    _check_beta(beta)
    if base.shape != mix.shape:
        raise ValueError(f"cannot mix regions of shape {base.shape} and {mix.shape}")
    blended = beta * base.astype(np.float64) + (1.0 - beta) * mix.astype(np.float64)
    # values are non-negative, so floor(x + 0.5) rounds half away from zero
    return np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)


def mixup_labels(base_label: np.ndarray, mix_class: int, beta: float) -> np.ndarray:
    _check_beta(beta)
    base_label = np.asarray(base_label, dtype=np.float64)
    mixed = beta * base_label + (1.0 - beta) * one_hot(mix_class, base_label.size)
    # keep the simplex exact against float drift
    return mixed / mixed.sum()


def _pick_crop(image_domain: Domain, mix_class: int, min_area: float,
               source_bank: CropBank, target_bank: CropBank,
               rng: np.random.Generator) -> Optional[InstanceCrop]:
    if image_domain == Domain.SOURCE:
        candidates = source_bank.qualifying(mix_class, min_area) + target_bank.qualifying(mix_class, min_area)
    else:
        candidates = target_bank.qualifying(mix_class, min_area)
        if not candidates:
            candidates = source_bank.qualifying(mix_class, min_area)
    if not candidates:
        return None
    return candidates[int(rng.integers(len(candidates)))]


def _skip(image: LabeledImage, idx: int, reason: str) -> None:
    logger.debug("CRA-SKIP image=%s instance=%d reason=%s", image.image_id, idx, reason)


def plan_augmentation(image: LabeledImage, m: ClassRelationMatrix,
                      source_bank: CropBank, target_bank: CropBank,
                      ratio: float, rng: np.random.Generator,
                      beta_params: Tuple[float, float] = DEFAULT_BETA_PARAMS,
                      strategy: str = "cra") -> List[MixPlan]:
    """Decide, per instance, whether and with which crop it gets mixed."""
    if not 0.0 <= ratio <= 1.0:
        raise ValueError(f"augmentation ratio must be in [0, 1], got {ratio}")
    majority, _ = partition_classes(m)
    plans = []
    for idx, inst in enumerate(image.instances):
        # draw the gate for every instance so the stream does not depend on the outcome
        if rng.random() >= ratio:
            continue
        base_class = inst.class_id
        is_majority = base_class in majority
        if image.domain == Domain.TARGET and not is_majority:
            _skip(image, idx, "target_minority")
            continue
        mix_class = select_mix_class(m, base_class, is_majority, rng, strategy=strategy)
        if mix_class is None:
            _skip(image, idx, "no_mix_class")
            continue
        min_area = MIN_AREA_FRACTION * inst.area()
        crop = _pick_crop(image.domain, mix_class, min_area, source_bank, target_bank, rng)
        if crop is None:
            _skip(image, idx, "no_crop")
            continue
        beta = float(rng.beta(*beta_params))
        plans.append(MixPlan(base_index=idx, mix_crop=crop, beta=beta))
    return plans


def apply_augmentation(image: LabeledImage, plans: Sequence[MixPlan],
                       keep_aspect_ratio: bool = False) -> LabeledImage:
    """Blend every planned crop into its base box; boxes and instance count stay the same."""
    seen = set()
    for plan in plans:
        if plan.base_index in seen:
            raise ValueError(f"more than one plan for instance {plan.base_index} of image '{image.image_id}'")
        if not 0 <= plan.base_index < len(image.instances):
            raise IndexError(f"plan references instance {plan.base_index} but image '{image.image_id}' has {len(image.instances)}")
        seen.add(plan.base_index)

    out = image.copy()
    for plan in plans:
        if plan.mix_crop is None:
            continue
        inst = out.instances[plan.base_index]
        x, y, w, h = inst.pixel_box()
        region = out.pixels[y:y + h, x:x + w]
        if keep_aspect_ratio:
            mix = fit_to_base(plan.mix_crop, region)
        else:
            mix = resize_to_base(plan.mix_crop, region.shape[1], region.shape[0])
        out.pixels[y:y + h, x:x + w] = mixup_pixels(region, mix, plan.beta)
        label = mixup_labels(inst.label, plan.mix_crop.class_id, plan.beta)
        out.instances[plan.base_index] = AnnotatedInstance(bbox=inst.bbox, label=label, score=inst.score)
    return out


def augment_image(image: LabeledImage, m: ClassRelationMatrix,
                  source_bank: CropBank, target_bank: CropBank,
                  ratio: float, rng: np.random.Generator,
                  beta_params: Tuple[float, float] = DEFAULT_BETA_PARAMS,
                  strategy: str = "cra", keep_aspect_ratio: bool = False) -> Tuple[LabeledImage, List[MixPlan]]:
    plans = plan_augmentation(image, m, source_bank, target_bank, ratio, rng, beta_params, strategy)
    return apply_augmentation(image, plans, keep_aspect_ratio), plans


def label_is_simplex(label: np.ndarray) -> bool:
    label = np.asarray(label)
    return bool(np.all(label >= 0) and abs(label.sum() - 1.0) <= LABEL_TOLERANCE)
