"""Deterministic seed derivation for nested random streams.

Every sampling operation in the package takes an explicit integer seed.
Experiments derive one independent stream per (size, repetition, role)
by mixing the root seed with the stream indices through a 64-bit
avalanche mix (the splitmix64 finalizer), so that results are
bit-reproducible and independent of worker scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One round of the splitmix64 avalanche finalizer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(root_seed: int, *stream: int) -> int:
    """Mix a root seed with stream indices into a new 64-bit seed.

    The rule is: h = mix(root); then for each index i in order,
    h = mix(h XOR mix(i)).  Distinct index tuples yield independent
    streams with overwhelming probability.
    """
    h = splitmix64(root_seed & _MASK64)
    for idx in stream:
        h = splitmix64(h ^ splitmix64(idx & _MASK64))
    return h


def derive_rng(root_seed: int, *stream: int) -> np.random.Generator:
    """Generator for the derived stream (root_seed, *stream)."""
    return np.random.default_rng(derive_seed(root_seed, *stream))
