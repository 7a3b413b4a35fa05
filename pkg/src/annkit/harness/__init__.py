"""Dataset I/O, synthetic generators, experiment runners, and the CLI."""

from annkit.harness.synth import Distribution, SyntheticSpec, generate, generate_sparse
from annkit.harness.io import load_vecs, save_vecs
from annkit.harness.container import load_index, save_index

__all__ = [
    "Distribution",
    "SyntheticSpec",
    "generate",
    "generate_sparse",
    "load_vecs",
    "save_vecs",
    "load_index",
    "save_index",
]
