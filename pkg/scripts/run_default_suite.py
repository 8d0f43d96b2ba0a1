#!/usr/bin/env python3
"""Run the shipped verification suite and print one line per experiment."""
import sys
from pathlib import Path

from smp_spde.cli import main

if __name__ == "__main__":
    cfg = Path(__file__).resolve().parent.parent / "configs" / "suite.cfg"
    sys.exit(main(["verify", "--config", str(cfg)] + sys.argv[1:]))
