# End-to-end tests of the click entry point
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

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from helpers.dataset_io import load_dataset
from helpers.relation import ClassRelationMatrix
from main import main


@pytest.fixture(autouse=True)
def keep_test_logging(monkeypatch):
    # the CLI reconfigures the root logger; keep pytest's capture handlers in place
    monkeypatch.setattr("main.configure_logging", lambda: logging.INFO)


def write_config(tmp_path, **values):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(values), encoding="utf-8")
    return str(path)


def invoke(*args):
    return CliRunner().invoke(main, [*args, "--no-progress"])


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def tree_files(root):
    return sorted(os.path.relpath(os.path.join(d, f), root) for d, _, files in os.walk(root) for f in files)


@pytest.fixture
def converge_config(tmp_path):
    return write_config(tmp_path, num_classes=3, converge_batches=20, converge_batch_size=15, eval_every=5)


@pytest.fixture
def sim_config(tmp_path):
    return write_config(tmp_path, num_classes=2, burn_in_steps=10, total_steps=30, eval_every=10, alpha=0.99)


class TestIcrmConverge:
    def test_same_seed_identical_csv(self, tmp_path, converge_config):
        for name in ("a", "b"):
            result = invoke("icrm-converge", "--config", converge_config, "--seed", "7", "--out", str(tmp_path / name))
            assert result.exit_code == 0, result.output
        first = read_bytes(tmp_path / "a" / "results.csv")
        assert first == read_bytes(tmp_path / "b" / "results.csv")
        assert first.decode("utf-8").splitlines()[0] == "seed,stage,iteration,map,sigma,icrm_error"
        frame = pd.read_csv(tmp_path / "a" / "results.csv")
        assert list(frame["iteration"]) == [5, 10, 15, 20]
        assert set(frame["seed"]) == {7}
        assert ClassRelationMatrix.load(tmp_path / "a" / "icrm.json").num_classes == 3

    def test_results_are_appended(self, tmp_path, converge_config):
        out = str(tmp_path / "out")
        for seed in ("1", "2"):
            assert invoke("icrm-converge", "--config", converge_config, "--seed", seed, "--out", out).exit_code == 0
        lines = read_bytes(os.path.join(out, "results.csv")).decode("utf-8").splitlines()
        assert len(lines) == 1 + 8
        assert sum(line.startswith("seed,") for line in lines) == 1

    def test_needs_out(self, converge_config):
        result = invoke("icrm-converge", "--config", converge_config)
        assert result.exit_code == 1
        assert "error:" in result.output and "--out" in result.output


class TestTrainSim:
    def test_same_seed_identical_outputs(self, tmp_path, sim_config):
        for name in ("a", "b"):
            result = invoke("train-sim", "--config", sim_config, "--seed", "3", "--out", str(tmp_path / name))
            assert result.exit_code == 0, result.output
            assert "minority accuracy" in result.output
        for file_name in ("results.csv", "icrm.json", "icrm_target.json", "config.json"):
            assert read_bytes(tmp_path / "a" / file_name) == read_bytes(tmp_path / "b" / file_name)
        frame = pd.read_csv(tmp_path / "a" / "results.csv")
        assert list(frame["stage"]) == ["burn_in", "mutual", "mutual"]

    def test_saved_config_records_run_seed(self, tmp_path, sim_config):
        out = tmp_path / "o"
        result = invoke("train-sim", "--config", sim_config, "--seed", "7", "--out", str(out))
        assert result.exit_code == 0, result.output
        with open(out / "config.json", encoding="utf-8") as f:
            saved = json.load(f)
        assert saved["seed"] == 7



class TestAugmentPreview:
    def entries(self, domain):
        return [
            (f"{domain}0", domain, [((0, 0, 12, 12), 0), ((16, 16, 12, 12), 1)]),
            (f"{domain}1", domain, [((4, 4, 20, 20), 1)]),
            (f"{domain}2", domain, []),
        ]

    def test_zero_ratio_copies_images(self, tmp_path, dataset_factory):
        source = dataset_factory("src", self.entries("source"))
        target = dataset_factory("tgt", self.entries("target"))
        config = write_config(tmp_path, num_classes=2, source_aug_ratio=0.0, target_aug_ratio=0.0)
        out = tmp_path / "out"
        result = invoke("augment-preview", "--config", config, "--source-dir", source, "--target-dir", target,
                        "--out", str(out))
        assert result.exit_code == 0, result.output
        for directory, domain in ((source, "source"), (target, "target")):
            for k in range(3):
                name = f"{domain}{k}.png"
                assert read_bytes(out / name) == read_bytes(os.path.join(directory, name))
        assert os.path.isdir(out / "banks")

    def test_full_ratio_keeps_labels_on_simplex(self, tmp_path, dataset_factory):
        source = dataset_factory("src", self.entries("source"))
        icrm_path = tmp_path / "icrm.json"
        ClassRelationMatrix.from_values([[0.9, 0.1], [0.6, 0.4]]).save(icrm_path)
        config = write_config(tmp_path, num_classes=2, source_aug_ratio=1.0)
        out = tmp_path / "out"
        result = invoke("augment-preview", "--config", config, "--source-dir", source, "--icrm", str(icrm_path),
                        "--out", str(out), "--seed", "5")
        assert result.exit_code == 0, result.output
        images = load_dataset(str(out), num_classes=2)
        labels = [inst.label for image in images for inst in image.instances]
        assert len(labels) == 3
        assert all(np.isclose(label.sum(), 1.0) and np.all(label >= 0) for label in labels)

    def test_duplicate_ids_rejected(self, tmp_path, dataset_factory):
        source = dataset_factory("src", [("same", "source", [])])
        target = dataset_factory("tgt", [("same", "target", [])])
        result = invoke("augment-preview", "--source-dir", source, "--target-dir", target, "--out", str(tmp_path / "o"))
        assert result.exit_code == 1
        assert "duplicate" in result.output

    def test_out_of_bounds_box(self, tmp_path, dataset_factory):
        source = dataset_factory("src", [("wide", "source", [((30, 0, 8, 8), 0)])])
        config = write_config(tmp_path, num_classes=2)
        result = invoke("augment-preview", "--config", config, "--source-dir", source, "--out", str(tmp_path / "o"))
        assert result.exit_code == 1
        assert "error:" in result.output and "wide" in result.output

        lenient = invoke("augment-preview", "--config", config, "--source-dir", source, "--out", str(tmp_path / "o"),
                         "--lenient")
        assert lenient.exit_code == 0, lenient.output

    def test_same_seed_identical_outputs(self, tmp_path, dataset_factory):
        source = dataset_factory("src", self.entries("source"))
        target = dataset_factory("tgt", self.entries("target"))
        icrm_path = tmp_path / "icrm.json"
        ClassRelationMatrix.from_values([[0.9, 0.1], [0.6, 0.4]]).save(icrm_path)
        config = write_config(tmp_path, num_classes=2, source_aug_ratio=1.0, target_aug_ratio=1.0)
        for name in ("a", "b"):
            result = invoke("augment-preview", "--config", config, "--source-dir", source, "--target-dir", target,
                            "--icrm", str(icrm_path), "--out", str(tmp_path / name), "--seed", "5")
            assert result.exit_code == 0, result.output
        files_a = tree_files(tmp_path / "a")
        assert files_a == tree_files(tmp_path / "b")
        assert "images.json" in files_a
        for rel in files_a:
            assert read_bytes(tmp_path / "a" / rel) == read_bytes(tmp_path / "b" / rel), rel

    def test_keep_aspect_ratio_run(self, tmp_path, dataset_factory):
        source = dataset_factory("src", self.entries("source"))
        icrm_path = tmp_path / "icrm.json"
        ClassRelationMatrix.from_values([[0.9, 0.1], [0.6, 0.4]]).save(icrm_path)
        config = write_config(tmp_path, num_classes=2, source_aug_ratio=1.0, keep_aspect_ratio=True)
        out = tmp_path / "out"
        result = invoke("augment-preview", "--config", config, "--source-dir", source, "--icrm", str(icrm_path),
                        "--out", str(out), "--seed", "5")
        assert result.exit_code == 0, result.output
        images = load_dataset(str(out), num_classes=2)
        assert [inst.bbox for inst in images[0].instances] == [(0.0, 0.0, 12.0, 12.0), (16.0, 16.0, 12.0, 12.0)]
        assert all(np.isclose(inst.label.sum(), 1.0) for image in images for inst in image.instances)



class TestWeightsDump:
    def test_identity_matrix(self, tmp_path):
        icrm_path = tmp_path / "identity.json"
        ClassRelationMatrix.from_values(np.eye(2)).save(icrm_path)
        config = write_config(tmp_path, num_classes=2, lambda_l=1.0)
        out = tmp_path / "out"
        result = invoke("weights-dump", "--config", config, "--icrm", str(icrm_path), "--out", str(out))
        assert result.exit_code == 0, result.output
        table = pd.read_csv(out / "weights.csv")
        assert list(table.columns) == ["gt", "pred", "raw", "regularized_raw", "weight"]
        assert len(table) == 6
        assert list(table["pred"]) == ["0", "1", "background"] * 2
        np.testing.assert_allclose(table["raw"], 0.0)
        np.testing.assert_allclose(table["regularized_raw"], 0.5)
        np.testing.assert_allclose(table["weight"], 1.0)

    def test_needs_icrm(self):
        result = invoke("weights-dump")
        assert result.exit_code == 1
        assert "--icrm" in result.output

    def test_class_count_mismatch(self, tmp_path):
        icrm_path = tmp_path / "icrm.json"
        ClassRelationMatrix.from_values(np.eye(3)).save(icrm_path)
        result = invoke("weights-dump", "--config", write_config(tmp_path, num_classes=2), "--icrm", str(icrm_path))
        assert result.exit_code == 1
        assert "num_classes" in result.output

    def test_same_inputs_identical_outputs(self, tmp_path):
        icrm_path = tmp_path / "icrm.json"
        ClassRelationMatrix.from_values([[0.7, 0.3], [0.4, 0.6]]).save(icrm_path)
        config = write_config(tmp_path, num_classes=2)
        outputs = []
        for name in ("a", "b"):
            result = invoke("weights-dump", "--config", config, "--icrm", str(icrm_path), "--out", str(tmp_path / name))
            assert result.exit_code == 0, result.output
            outputs.append(result.output)
        assert outputs[0] == outputs[1]
        assert read_bytes(tmp_path / "a" / "weights.csv") == read_bytes(tmp_path / "b" / "weights.csv")



class TestBadInput:
    def test_out_of_range_config(self, tmp_path):
        result = invoke("icrm-converge", "--config", write_config(tmp_path, tau=1.5), "--out", str(tmp_path / "o"))
        assert result.exit_code == 1
        assert "error:" in result.output and "tau" in result.output

    def test_missing_config_file(self, tmp_path):
        result = invoke("train-sim", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o"))
        assert result.exit_code == 1
        assert "error:" in result.output

    def test_unknown_command(self):
        assert invoke("fly").exit_code != 0
