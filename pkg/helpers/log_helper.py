# Logging setup driven by the CAT_LOG_LEVEL environment variable
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
import os

LOG_LEVEL_ENV = "CAT_LOG_LEVEL"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

LOG_LEVELS = {
    'error': logging.ERROR,
    'warn': logging.WARNING,
    'info': logging.INFO,
    'debug': logging.DEBUG,
}


def resolve_log_level(value=None) -> int:
    if value is None:
        value = os.environ.get(LOG_LEVEL_ENV, "info")
    return LOG_LEVELS.get(str(value).strip().lower(), logging.INFO)


def configure_logging(value=None) -> int:
    """Configure the root logger once for CLI runs; returns the level in use."""
    raw = value if value is not None else os.environ.get(LOG_LEVEL_ENV)
    level = resolve_log_level(raw)
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    if raw is not None and str(raw).strip().lower() not in LOG_LEVELS:
        logging.getLogger(__name__).warning(
            f"Unknown {LOG_LEVEL_ENV} value '{raw}', expected one of {sorted(LOG_LEVELS)}; using info"
        )
    return level
