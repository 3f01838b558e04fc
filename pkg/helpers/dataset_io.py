# Annotated image datasets: images.json manifest + PNG files
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
Manifest schema (images.json):

[
  {"id": "img0", "file": "img0.png", "domain": "source",
   "instances": [{"bbox": [x, y, w, h], "class": 2}, ...]},
  ...
]

Written manifests may also carry "label" (the soft class vector) and "score" per instance;
both are optional on load.
"""

import json
import logging
import os
import shutil
from typing import List, Optional

import numpy as np
from PIL import Image

from helpers.instances import AnnotatedInstance, Domain, LabeledImage, box_in_bounds

logger = logging.getLogger(__name__)

MANIFEST_NAME = "images.json"


class DatasetError(ValueError):
    """Raised for missing or malformed manifests and invalid annotations."""


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.array(img.convert("RGB"), dtype=np.uint8)


def write_png(pixels: np.ndarray, path) -> None:
    Image.fromarray(pixels).save(path, format="PNG")


def _parse_instance(raw: dict, image_id: str, num_classes: int) -> AnnotatedInstance:
    try:
        bbox = [float(v) for v in raw["bbox"]]
        class_id = int(raw["class"])
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetError(f"image '{image_id}': malformed instance {raw!r}") from e
    if len(bbox) != 4:
        raise DatasetError(f"image '{image_id}': bbox must have 4 values, got {bbox}")
    if not 0 <= class_id < num_classes:
        raise DatasetError(f"image '{image_id}': class id {class_id} out of range for {num_classes} classes")
    if bbox[2] < 1 or bbox[3] < 1:
        raise DatasetError(f"image '{image_id}': bbox {bbox} must be at least 1x1")
    score = float(raw.get("score", 1.0))
    if "label" in raw:
        label = np.asarray(raw["label"], dtype=np.float64)
        if label.ndim != 1 or label.size != num_classes:
            raise DatasetError(f"image '{image_id}': label has {label.size} entries, expected {num_classes}")
        if int(np.argmax(label)) != class_id:
            raise DatasetError(f"image '{image_id}': label argmax {int(np.argmax(label))} disagrees with class {class_id}")
        try:
            return AnnotatedInstance(bbox=bbox, label=label, score=score)
        except ValueError as e:
            raise DatasetError(f"image '{image_id}': {e}") from e
    return AnnotatedInstance.from_class(bbox, class_id, num_classes, score=score)


def load_dataset(directory, num_classes: int, strict: bool = True,
                 domain: Optional[Domain] = None) -> List[LabeledImage]:
    """
    Load every image listed in <directory>/images.json.

    In strict mode an out-of-bounds bbox is fatal; otherwise the instance is dropped
    with a warning. When domain is given, entries without a domain default to it.
    """
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise DatasetError(f"missing manifest {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            entries = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetError(f"malformed manifest {manifest_path}: {e}") from e
    if not isinstance(entries, list):
        raise DatasetError(f"manifest {manifest_path} must hold a JSON list")

    images = []
    for entry in entries:
        try:
            image_id = str(entry["id"])
            file_name = entry["file"]
            raw_domain = entry.get("domain", domain.value if domain else None)
            image_domain = Domain(raw_domain)
            raw_instances = entry.get("instances", [])
        except (KeyError, TypeError, ValueError) as e:
            raise DatasetError(f"malformed manifest entry {entry!r}") from e

        image_path = os.path.join(directory, file_name)
        if not os.path.exists(image_path):
            raise DatasetError(f"image '{image_id}': missing file {image_path}")
        pixels = read_png(image_path)
        height, width = pixels.shape[:2]

        instances = []
        for idx, raw in enumerate(raw_instances):
            inst = _parse_instance(raw, image_id, num_classes)
            if not box_in_bounds(inst.pixel_box(), width, height):
                message = f"image '{image_id}': instance {idx} bbox {list(inst.bbox)} exceeds the {width}x{height} image"
                if strict:
                    raise DatasetError(message)
                logger.warning(f"{message}, skipping")
                continue
            instances.append(inst)

        images.append(LabeledImage(pixels=pixels, instances=instances, domain=image_domain,
                                   image_id=image_id, source_path=image_path))

    logger.info(f"Loaded {len(images)} images from {directory}")
    return images


def image_entry(image: LabeledImage, file_name: str) -> dict:
    return {
        "id": image.image_id,
        "file": file_name,
        "domain": image.domain.value,
        "instances": [
            {
                "bbox": list(inst.bbox),
                "class": inst.class_id,
                "label": inst.label.tolist(),
                "score": inst.score,
            }
            for inst in image.instances
        ],
    }


def write_dataset(images: List[LabeledImage], directory, unchanged: Optional[set] = None) -> str:
    """
    Write PNGs and an images.json manifest into directory.

    Images whose id is in `unchanged` and that were loaded from disk are copied byte for
    byte instead of being re-encoded.
    """
    os.makedirs(directory, exist_ok=True)
    unchanged = unchanged or set()
    entries = []
    for image in images:
        file_name = f"{image.image_id}.png"
        out_path = os.path.join(directory, file_name)
        if image.image_id in unchanged and image.source_path:
            shutil.copyfile(image.source_path, out_path)
        else:
            write_png(image.pixels, out_path)
        entries.append(image_entry(image, file_name))
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(entries, f, indent=2)
    return manifest_path
