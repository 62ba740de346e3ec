#!/usr/bin/env python3
"""Reproduce the rate-versus-blocklength sweep and its approximation.

Writes figure1.csv (n, R_star_exact, normal_approx) for n = 1..500 at
overflow budget 0.1 with the periodic side-information string 001001...
"""

import sys

from sidecomp.cli import main

if __name__ == "__main__":
    out = sys.argv[1] if len(sys.argv) > 1 else "figure1.csv"
    sys.exit(main(["figure1", "--out", out]))
