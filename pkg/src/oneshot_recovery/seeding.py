"""Counter-based seeding.

Every random stream in the package comes from a numpy ``Generator`` backed
by the Philox-4x64 counter-based bit generator, keyed by a 64-bit integer.
Normal variates use numpy's ziggurat sampler (``Generator.standard_normal``);
that transform is fixed for all sampling in this package.

Per-trial keys are derived with :func:`derive_seed`, which packs up to four
16-bit indices into one 64-bit word, xors it with the mixed base seed and
applies the SplitMix64 finalizer. Both steps are bijections on 64-bit words,
so for a fixed base seed and arity, distinct index tuples give distinct keys.
Index value ``RESERVED`` (0xFFFF) is kept for streams that are not tied to
a grid cell, such as ground-truth signals.
"""

import numpy as np

MASK64 = (1 << 64) - 1
INDEX_LIMIT = 1 << 16
RESERVED = INDEX_LIMIT - 1


def mix64(value: int) -> int:
    """SplitMix64 finalizer (a bijection on 64-bit words)."""
    z = (value + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, *indices: int) -> int:
    if not 1 <= len(indices) <= 4:
        raise ValueError("derive_seed takes between 1 and 4 indices")
    packed = 0
    for position, index in enumerate(indices):
        if not 0 <= index < INDEX_LIMIT:
            raise ValueError(f"index {index} outside [0, {INDEX_LIMIT})")
        packed |= index << (16 * position)
    return mix64(mix64(base_seed & MASK64) ^ packed)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed & MASK64))
