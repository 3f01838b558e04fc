# Command-line entry point for the class-relation experiments
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

import sys

import click

from helpers.config import ConfigError, HELP_TEXT_DICT
from helpers.controllers.experiment_controller import COMMANDS, load_run_config, run
from helpers.log_helper import configure_logging


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("command", type=click.Choice(COMMANDS))
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON config file; missing keys take the defaults.")
@click.option("--source-dir", type=click.Path(file_okay=False), default=None,
              help="Labeled source-domain dataset (images.json + PNGs).")
@click.option("--target-dir", type=click.Path(file_okay=False), default=None,
              help="Target-domain dataset (images.json + PNGs).")
@click.option("--out", type=click.Path(), default=None,
              help="Output directory for CSVs, images, manifests and ICRm checkpoints.")
@click.option("--seed", type=int, default=None, help=HELP_TEXT_DICT["seed"])
@click.option("--lenient", is_flag=True, default=False,
              help="Skip out-of-bounds boxes with a warning instead of failing.")
@click.option("--icrm", "icrm_path", type=click.Path(dir_okay=False), default=None,
              help="Serialized ICRm (JSON) for augment-preview and weights-dump.")
@click.option("--no-progress", is_flag=True, default=False, help="Hide progress bars.")
def main(command, config_path, source_dir, target_dir, out, seed, lenient, icrm_path, no_progress):
    """Run COMMAND: icrm-converge, augment-preview, train-sim or weights-dump."""
    configure_logging()
    try:
        config = load_run_config(config_path)
    except (ConfigError, OSError) as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    code = run(command, config, source_dir=source_dir, target_dir=target_dir, out=out, seed=seed,
               lenient=lenient, icrm_path=icrm_path, progress=not no_progress)
    sys.exit(code)


if __name__ == "__main__":
    main()
