"""Run every recipe in docs/recipes, optionally with shared overrides.

    python3 scripts/run_all_recipes.py --trials 20
"""

import glob
import os
import sys
import time

from run_recipe import run

HERE = os.path.dirname(os.path.abspath(__file__))


def main(extra):
    status = 0
    for path in sorted(glob.glob(os.path.join(HERE, "..", "docs", "recipes", "*.cfg"))):
        start = time.perf_counter()
        rc = run(path, extra)
        print(f"{os.path.basename(path)}: exit {rc} in {time.perf_counter() - start:.0f} s", file=sys.stderr)
        status = status or rc
    return status


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
