"""Run the frontier experiment with default settings; extra flags pass through.

Example: python3 scripts/run_frontier.py --seed 0 --out results
"""

import sys

from robustpref.cli import main

if __name__ == "__main__":
    sys.exit(main(["frontier", *sys.argv[1:]]))
