#!/usr/bin/env python3
"""Distance concentration: the farthest/nearest ratio collapses toward 1
as dimensionality grows, and the (1+eps)-ball swallows the collection."""

import sys

from annkit.harness.cli import main

if __name__ == "__main__":
    sys.exit(main(["experiment", "instability", "--dist", "gaussian",
                   "--m", "10000", "--dims", "10,100,1000",
                   "--queries", "100", "--seed", "1"]))
