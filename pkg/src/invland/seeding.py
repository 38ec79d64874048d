"""Named random streams derived from a single master seed.

Every source of randomness in the pipeline (demand, network init,
exploration, direction sampling, batch subsampling) pulls from its own
labeled stream, so each component is reproducible in isolation.
"""

import hashlib

import numpy as np


def stream_seed(master: int, label: str) -> np.random.SeedSequence:
    """Derive a SeedSequence for `label` by hashing it with the master seed."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 20, 4)]
    return np.random.SeedSequence(words)


def stream(master: int, label: str) -> np.random.Generator:
    """A fresh Generator for the named stream."""
    return np.random.default_rng(stream_seed(master, label))
