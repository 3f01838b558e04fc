# Tests for the per-class FIFO crop banks
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

import numpy as np
import pytest
from scipy.stats import chisquare

from helpers.cropbank import CropBank, InstanceCrop, bank_image, extract_crops
from helpers.instances import AnnotatedInstance, Domain, LabeledImage


def crop(side, class_id=0, domain=Domain.SOURCE, fill=0):
    return InstanceCrop(np.full((side, side, 3), fill, dtype=np.uint8), class_id, domain)


class TestInsert:
    def test_below_capacity_appends(self):
        bank = CropBank(2, Domain.SOURCE, capacity_per_class=2)
        a, b = crop(8, fill=1), crop(8, fill=2)
        bank.insert(a).insert(b)
        assert bank.snapshot(0) == (a, b)

    def test_full_ring_evicts_oldest(self):
        bank = CropBank(2, Domain.SOURCE, capacity_per_class=2)
        a, b, c = crop(8, fill=1), crop(8, fill=2), crop(8, fill=3)
        for item in (a, b, c):
            bank.insert(item)
        assert bank.snapshot(0) == (b, c)

    def test_fifo_keeps_last_k(self):
        bank = CropBank(1, Domain.TARGET, capacity_per_class=4)
        crops = [crop(8, domain=Domain.TARGET, fill=i) for i in range(10)]
        for item in crops:
            bank.insert(item)
        assert bank.snapshot(0) == tuple(crops[6:])

    def test_domain_guard(self):
        bank = CropBank(2, Domain.SOURCE)
        with pytest.raises(ValueError):
            bank.insert(crop(8, domain=Domain.TARGET))

    def test_class_out_of_range(self):
        bank = CropBank(2, Domain.SOURCE)
        with pytest.raises(IndexError):
            bank.insert(crop(8, class_id=5))

    def test_small_crops_are_not_banked(self):
        bank = CropBank(2, Domain.SOURCE, min_crop_side=8)
        bank.insert(crop(7))
        assert len(bank) == 0
        bank.insert(InstanceCrop(np.zeros((8, 20, 3), dtype=np.uint8), 0, Domain.SOURCE))
        assert len(bank) == 1

    def test_rings_never_mix_classes(self, rng):
        bank = CropBank(3, Domain.SOURCE, capacity_per_class=5)
        for _ in range(40):
            bank.insert(crop(8, class_id=int(rng.integers(3))))
        for c in range(3):
            assert all(item.class_id == c for item in bank.snapshot(c))
            assert len(bank.snapshot(c)) <= 5


class TestSample:
    def test_area_filter(self, rng):
        bank = CropBank(1, Domain.SOURCE)
        small, large = crop(10), crop(20)
        bank.insert(small).insert(large)
        for _ in range(50):
            assert bank.sample(0, 300, rng) is large

    def test_empty_ring(self, rng):
        assert CropBank(2, Domain.SOURCE).sample(1, 0, rng) is None

    def test_nothing_qualifies(self, rng):
        bank = CropBank(1, Domain.SOURCE).insert(crop(8))
        assert bank.sample(0, 1000, rng) is None

    def test_uniform_over_qualifying(self, rng):
        bank = CropBank(1, Domain.SOURCE)
        crops = [crop(8, fill=i) for i in range(3)]
        for item in crops:
            bank.insert(item)
        draws = [bank.sample(0, 0, rng) for _ in range(10000)]
        counts = [sum(d is item for d in draws) for item in crops]
        assert chisquare(counts).pvalue > 0.01

    def test_negative_min_area(self, rng):
        with pytest.raises(ValueError):
            CropBank(1, Domain.SOURCE).sample(0, -1, rng)


class TestExtractCrops:
    def test_one_crop_per_box(self, image_factory):
        image = image_factory([(0, 0, 10, 12), (20, 5, 8, 8)], [0, 2])
        crops = extract_crops(image)
        assert [(c.height, c.width) for c in crops] == [(12, 10), (8, 8)]
        assert [c.class_id for c in crops] == [0, 2]
        np.testing.assert_array_equal(crops[1].pixels, image.pixels[5:13, 20:28])

    def test_unit_box(self, image_factory):
        crops = extract_crops(image_factory([(3, 4, 1, 1)], [1]))
        assert crops[0].pixels.shape == (1, 1, 3)

    def test_out_of_bounds_box_is_skipped(self, rng, caplog):
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        instances = [AnnotatedInstance.from_class((10, 10, 10, 10), 0, 2),
                     AnnotatedInstance.from_class((0, 0, 8, 8), 1, 2)]
        image = LabeledImage(pixels, instances, Domain.SOURCE, "partial", validate=False)
        with caplog.at_level(logging.WARNING):
            crops = extract_crops(image)
        assert [c.class_id for c in crops] == [1]
        assert "partial" in caplog.text

    def test_soft_labels_are_not_banked(self, rng):
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        soft = AnnotatedInstance((0, 0, 8, 8), np.array([0.6, 0.4]))
        image = LabeledImage(pixels, [soft], Domain.SOURCE, "mixed")
        assert extract_crops(image) == []

    def test_score_threshold(self, rng):
        pixels = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
        instances = [AnnotatedInstance.from_class((0, 0, 8, 8), 0, 2, score=0.5),
                     AnnotatedInstance.from_class((8, 8, 8, 8), 1, 2, score=0.9)]
        image = LabeledImage(pixels, instances, Domain.TARGET, "pseudo")
        assert [c.class_id for c in extract_crops(image, min_score=0.8)] == [1]

    def test_bank_image_tags_domain(self, image_factory):
        image = image_factory([(0, 0, 10, 10)], [1], domain=Domain.TARGET)
        bank = CropBank(3, Domain.TARGET)
        assert bank_image(bank, image) == 1
        assert bank.snapshot(1)[0].domain == Domain.TARGET


class TestPersistence:
    def test_save_and_load_resume_fifo(self, tmp_path, rng):
        bank = CropBank(2, Domain.SOURCE, capacity_per_class=2)
        for i in range(3):
            bank.insert(InstanceCrop(rng.integers(0, 256, (9, 9, 3), dtype=np.uint8), 0, Domain.SOURCE))
        bank.insert(InstanceCrop(rng.integers(0, 256, (12, 10, 3), dtype=np.uint8), 1, Domain.SOURCE))
        bank.save(tmp_path)

        restored = CropBank.load(tmp_path, Domain.SOURCE)
        assert restored.capacity_per_class == 2
        for c in range(2):
            original, loaded = bank.snapshot(c), restored.snapshot(c)
            assert len(original) == len(loaded)
            for a, b in zip(original, loaded):
                np.testing.assert_array_equal(a.pixels, b.pixels)

        extra = InstanceCrop(np.zeros((9, 9, 3), dtype=np.uint8), 0, Domain.SOURCE)
        bank.insert(extra)
        restored.insert(extra)
        np.testing.assert_array_equal(restored.snapshot(0)[0].pixels, bank.snapshot(0)[0].pixels)
