# Tests for the images.json + PNG dataset layout
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

from helpers.dataset_io import MANIFEST_NAME, DatasetError, load_dataset, read_png, write_dataset
from helpers.instances import Domain


class TestLoad:
    def test_two_images(self, dataset_factory):
        directory = dataset_factory("src", [
            ("a", "source", [((1, 2, 8, 8), 0), ((10, 10, 6, 4), 2)]),
            ("b", "target", [((0, 0, 32, 32), 1)]),
        ])
        images = load_dataset(directory, num_classes=3)
        assert [im.image_id for im in images] == ["a", "b"]
        assert [im.domain for im in images] == [Domain.SOURCE, Domain.TARGET]
        assert [inst.class_id for inst in images[0].instances] == [0, 2]
        assert images[0].instances[1].bbox == (10.0, 10.0, 6.0, 4.0)
        assert images[0].pixels.shape == (32, 32, 3)
        assert images[0].pixels.dtype == np.uint8
        assert all(inst.is_hard_label and inst.score == 1.0 for inst in images[0].instances)

    def test_zero_instance_image(self, dataset_factory):
        directory = dataset_factory("src", [("empty", "source", [])])
        images = load_dataset(directory, num_classes=2)
        assert len(images) == 1
        assert images[0].instances == []

    def test_out_of_bounds_names_image(self, dataset_factory):
        directory = dataset_factory("src", [("bad", "source", [((28, 0, 8, 8), 0)])])
        with pytest.raises(DatasetError, match="'bad'"):
            load_dataset(directory, num_classes=2)

    def test_lenient_skips_instance(self, dataset_factory, caplog):
        directory = dataset_factory("src", [("bad", "source", [((28, 0, 8, 8), 0), ((0, 0, 8, 8), 1)])])
        images = load_dataset(directory, num_classes=2, strict=False)
        assert [inst.class_id for inst in images[0].instances] == [1]
        assert "bad" in caplog.text
        assert not any(r.getMessage().startswith("Warning") for r in caplog.records)

    def test_class_out_of_range(self, dataset_factory):
        directory = dataset_factory("src", [("a", "source", [((0, 0, 8, 8), 5)])])
        with pytest.raises(DatasetError, match="class id 5"):
            load_dataset(directory, num_classes=3)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="missing manifest"):
            load_dataset(str(tmp_path), num_classes=2)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / MANIFEST_NAME).write_text("[{", encoding="utf-8")
        with pytest.raises(DatasetError, match="malformed"):
            load_dataset(str(tmp_path), num_classes=2)

    def test_missing_image_file(self, dataset_factory):
        directory = dataset_factory("src", [("a", "source", [])])
        os.remove(os.path.join(directory, "a.png"))
        with pytest.raises(DatasetError, match="missing file"):
            load_dataset(directory, num_classes=2)

    def test_domain_defaults_to_argument(self, tmp_path, dataset_factory):
        directory = dataset_factory("tgt", [("a", "target", [])])
        manifest_path = os.path.join(directory, MANIFEST_NAME)
        with open(manifest_path, encoding="utf-8") as f:
            entries = json.load(f)
        del entries[0]["domain"]
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(entries, f)
        assert load_dataset(directory, 2, domain=Domain.TARGET)[0].domain == Domain.TARGET

    @staticmethod
    def set_label(directory, label):
        manifest_path = os.path.join(directory, MANIFEST_NAME)
        with open(manifest_path, encoding="utf-8") as f:
            entries = json.load(f)
        entries[0]["instances"][0]["label"] = label
        with open(manifest_path, "w", encoding="utf-8") as f:
            json.dump(entries, f)

    def test_soft_label_loaded(self, dataset_factory):
        directory = dataset_factory("src", [("a", "source", [((0, 0, 8, 8), 1)])])
        self.set_label(directory, [0.2, 0.7, 0.1])
        inst = load_dataset(directory, num_classes=3)[0].instances[0]
        np.testing.assert_allclose(inst.label, [0.2, 0.7, 0.1])
        assert inst.class_id == 1

    def test_label_wrong_length(self, dataset_factory):
        directory = dataset_factory("src", [("short", "source", [((0, 0, 8, 8), 0)])])
        self.set_label(directory, [1.0, 0.0])
        with pytest.raises(DatasetError, match="'short'.*expected 3"):
            load_dataset(directory, num_classes=3)

    def test_label_disagrees_with_class(self, dataset_factory):
        directory = dataset_factory("src", [("mixed", "source", [((0, 0, 8, 8), 0)])])
        self.set_label(directory, [0.1, 0.9])
        with pytest.raises(DatasetError, match="'mixed'.*disagrees with class 0"):
            load_dataset(directory, num_classes=2)

    def test_label_off_simplex(self, dataset_factory):
        directory = dataset_factory("src", [("loose", "source", [((0, 0, 8, 8), 0)])])
        self.set_label(directory, [2.0, 0.5])
        with pytest.raises(DatasetError, match="'loose'"):
            load_dataset(directory, num_classes=2)


class TestWrite:
    def test_unchanged_images_are_byte_copies(self, dataset_factory, tmp_path):
        directory = dataset_factory("src", [("a", "source", [((0, 0, 8, 8), 0)]), ("b", "source", [])])
        images = load_dataset(directory, num_classes=2)
        out = str(tmp_path / "out")
        write_dataset(images, out, unchanged={"a", "b"})
        for image_id in ("a", "b"):
            with open(os.path.join(directory, f"{image_id}.png"), "rb") as f:
                original = f.read()
            with open(os.path.join(out, f"{image_id}.png"), "rb") as f:
                assert f.read() == original

    def test_written_dataset_loads_back(self, dataset_factory, tmp_path):
        directory = dataset_factory("src", [("a", "target", [((4, 4, 8, 8), 1)])])
        images = load_dataset(directory, num_classes=2)
        images[0].pixels[0, 0] = [1, 2, 3]
        out = str(tmp_path / "out")
        write_dataset(images, out)
        reloaded = load_dataset(out, num_classes=2)
        np.testing.assert_array_equal(read_png(os.path.join(out, "a.png")), images[0].pixels)
        assert reloaded[0].domain == Domain.TARGET
        np.testing.assert_array_equal(reloaded[0].instances[0].label, [0.0, 1.0])
