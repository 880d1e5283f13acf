"""Run a recipe from docs/recipes through the CLI.

The first line of a recipe names the subcommand (``# command: sweep``); any
further arguments are passed through as overrides::

    python3 scripts/run_recipe.py docs/recipes/narrowband_ber.cfg --trials 20 --plot
"""

import sys

from mmsehbf.cli import main


def recipe_command(path):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    prefix = "# command:"
    if not first.startswith(prefix):
        raise SystemExit(f"{path}: first line must be '{prefix} <subcommand>'")
    return first[len(prefix):].strip()


def run(path, extra=()):
    return main([recipe_command(path), path, *extra])


if __name__ == "__main__":
    if len(sys.argv) < 2:
        raise SystemExit(__doc__)
    sys.exit(run(sys.argv[1], sys.argv[2:]))
