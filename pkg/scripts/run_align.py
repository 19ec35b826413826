"""Run the align experiment with default settings; extra flags pass through.

Example: python3 scripts/run_align.py --seed 0 --out results
"""

import sys

from robustpref.cli import main

if __name__ == "__main__":
    sys.exit(main(["align", *sys.argv[1:]]))
