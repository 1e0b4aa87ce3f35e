"""Seed derivation.

Every random draw in an experiment comes from a PCG64 generator whose seed is
derived from ``(master_seed, trial_index, role)`` with BLAKE2b::

    seed = int.from_bytes(blake2b(f"{master}:{index}:{role}", digest_size=8), "little")

Trials are therefore independent of each other and of the total trial count:
adding trials never reshuffles earlier ones.
"""

import hashlib

import numpy as np

SEED_BITS = 64


def derive_seed(master: int, index: int, role: str) -> int:
    token = f"{int(master)}:{int(index)}:{role}".encode()
    return int.from_bytes(hashlib.blake2b(token, digest_size=8).digest(), "little")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) % (1 << SEED_BITS)))
