#!/usr/bin/env python3
"""Run the model-corpus verification suite (exit 3 on any failure)."""

import sys

from sidecomp.cli import main

if __name__ == "__main__":
    corpus = sys.argv[1] if len(sys.argv) > 1 else "models"
    sys.exit(main(["verify", "--corpus", corpus, "--seed", "0"]))
