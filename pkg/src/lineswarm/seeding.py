"""Deterministic RNG stream derivation.

All randomness in the package flows from a single 64-bit master seed.
Child streams are derived by mixing ``(seed, purpose, index)`` through
``numpy.random.SeedSequence``: the purpose string is tagged with its
CRC-32 so distinct purposes can never collide with distinct indices.
The bit generator is PCG64, whose output stream is fixed and platform
independent; identical inputs therefore reproduce identical draws on
any machine.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def sub_seed(seed: int, purpose: str, index: int = 0) -> np.random.SeedSequence:
    """Derive the child ``SeedSequence`` for ``(seed, purpose, index)``."""
    tag = zlib.crc32(purpose.encode("utf-8"))
    return np.random.SeedSequence([seed & _MASK64, tag, index & _MASK64])


def spawn_rng(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """PCG64 generator for the derived child stream."""
    return np.random.Generator(np.random.PCG64(sub_seed(seed, purpose, index)))


def child_seed(seed: int, purpose: str, index: int = 0) -> int:
    """Collapse the derived stream to a single 64-bit integer seed."""
    return int(sub_seed(seed, purpose, index).generate_state(1, np.uint64)[0])
