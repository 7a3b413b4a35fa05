#!/usr/bin/env python3
"""IVF recall-vs-probe sweep on a synthetic Gaussian collection."""

import sys
import tempfile
from pathlib import Path

from annkit.harness.cli import main

if __name__ == "__main__":
    with tempfile.TemporaryDirectory() as tmp:
        data = str(Path(tmp) / "data.vecs")
        queries = str(Path(tmp) / "queries.vecs")
        main(["generate", "--dist", "gaussian", "--m", "10000", "--d", "32",
              "--seed", "1", "--out", data])
        main(["generate", "--dist", "gaussian", "--m", "100", "--d", "32",
              "--seed", "2", "--out", queries])
        sys.exit(main(["bench", "ivf", "--data", data, "--queries", queries,
                       "--k", "10", "--sweep-l", "1,2,5,10,25,50,100", "--seed", "3"]))
