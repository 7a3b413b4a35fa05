#!/usr/bin/env python3
"""Self-coincidence under MIPS as dimensionality grows.

Zero-mean coordinate distributions push the fraction of points that answer
their own inner-product query toward 1; positive-support distributions get
there much later.
"""

import sys

from annkit.harness.cli import main

if __name__ == "__main__":
    for dist in ("gaussian", "uniform_centered", "uniform_positive", "exponential"):
        print(f"# {dist}")
        main(["experiment", "coincidence", "--dist", dist,
              "--m", "10000", "--dims", "4,16,64,256", "--seed", "1"])
    sys.exit(0)
