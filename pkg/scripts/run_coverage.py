"""Run the coverage experiment with default settings; extra flags pass through.

Example: python3 scripts/run_coverage.py --seed 0 --out results
"""

import sys

from robustpref.cli import main

if __name__ == "__main__":
    sys.exit(main(["coverage", *sys.argv[1:]]))
