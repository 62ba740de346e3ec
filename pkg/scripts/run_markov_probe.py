#!/usr/bin/env python3
"""Probe the Gaussian approach of a Markov pair chain's information.

Prints (n, kolmogorov, kolmogorov_sqrt_n) rows; the scaled column
staying flat is the Berry-Esseen-type behaviour the rate bounds rely
on.
"""

import sys

from sidecomp.cli import main

if __name__ == "__main__":
    model = sys.argv[1] if len(sys.argv) > 1 else "models/markov2x2.json"
    sys.exit(main([
        "markov", "--model", model,
        "--n", "64", "256", "1024",
        "--trials", "50000", "--seed", "0",
    ]))
