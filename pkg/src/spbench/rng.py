"""Seeded randomness.

Every random draw in the package goes through :func:`make_rng`, which wraps
numpy's counter-based Philox bit generator. Philox streams are specified
bit-for-bit, so a seed gives the same draws on every platform.

Sub-seeds (one per model fit, per shift, ...) are derived from a master seed
with :func:`derive_seed`: the labels are hashed with SHA-256 and fed to
``numpy.random.SeedSequence`` as a spawn key.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & SEED_MASK))


def derive_seed(master: int, *labels) -> int:
    """Derive an independent 64-bit seed from ``master`` and a label path.

    >>> derive_seed(42, "bprmf", "M1") == derive_seed(42, "bprmf", "M1")
    True
    >>> derive_seed(42, "bprmf", "M1") == derive_seed(42, "bprmf", "M2")
    False
    """
    text = "/".join(str(label) for label in labels).encode("utf-8")
    digest = hashlib.sha256(text).digest()
    key = tuple(int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4))
    seq = np.random.SeedSequence(int(master) & SEED_MASK, spawn_key=key)
    return int(seq.generate_state(1, dtype=np.uint64)[0])
