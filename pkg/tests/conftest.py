# Shared fixtures: seeded generators, tiny synthetic images and on-disk datasets
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
import os

import numpy as np
import pytest

from helpers.dataset_io import write_png
from helpers.instances import AnnotatedInstance, Domain, LabeledImage
from helpers.relation import ClassRelationMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def two_class_icrm():
    return ClassRelationMatrix.from_values([[0.9, 0.1], [0.3, 0.7]])


def make_image(rng, boxes, classes, num_classes=3, size=(48, 48), domain=Domain.SOURCE, image_id="img"):
    """Random-noise image with one hard-labeled instance per (box, class)."""
    height, width = size
    pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
    instances = [AnnotatedInstance.from_class(box, c, num_classes) for box, c in zip(boxes, classes)]
    return LabeledImage(pixels=pixels, instances=instances, domain=domain, image_id=image_id)


@pytest.fixture
def image_factory(rng):
    def factory(boxes, classes, **kwargs):
        return make_image(rng, boxes, classes, **kwargs)
    return factory


def write_manifest_dataset(directory, entries, rng, size=(32, 32)):
    """Write PNGs and an images.json for entries of (id, domain, [(bbox, class), ...])."""
    os.makedirs(directory, exist_ok=True)
    manifest = []
    for image_id, domain, instances in entries:
        pixels = rng.integers(0, 256, size=(size[0], size[1], 3), dtype=np.uint8)
        file_name = f"{image_id}.png"
        write_png(pixels, os.path.join(directory, file_name))
        manifest.append({
            "id": image_id,
            "file": file_name,
            "domain": domain,
            "instances": [{"bbox": list(bbox), "class": c} for bbox, c in instances],
        })
    with open(os.path.join(directory, "images.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f)
    return directory


@pytest.fixture
def dataset_factory(tmp_path, rng):
    def factory(name, entries, size=(32, 32)):
        return write_manifest_dataset(str(tmp_path / name), entries, rng, size=size)
    return factory
