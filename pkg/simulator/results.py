# Experiment result rows and the results CSV
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

import os
from typing import Iterable, List, NamedTuple

import pandas as pd

RESULTS_COLUMNS = ["seed", "stage", "iteration", "map", "sigma", "icrm_error"]
RESULTS_FILE_NAME = "results.csv"


class ResultRow(NamedTuple):
    seed: int
    stage: str
    iteration: int
    map: float
    sigma: float
    icrm_error: float


def results_frame(rows: Iterable[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([tuple(r) for r in rows], columns=RESULTS_COLUMNS)


def append_results(rows: List[ResultRow], path) -> str:
    """Append rows to the CSV at path, writing the header only when the file is new."""
    write_header = not os.path.exists(path) or os.path.getsize(path) == 0
    results_frame(rows).to_csv(path, mode="a", header=write_header, index=False,
                               float_format="%.10f", lineterminator="\n")
    return path


def read_results(path) -> pd.DataFrame:
    return pd.read_csv(path)
