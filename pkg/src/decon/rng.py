"""Seed derivation.

Streams come from Philox (counter based) keyed by a ``SeedSequence`` built
from the base seed plus any number of tags, so a stream depends only on
``(seed, tags)`` and never on call order or worker scheduling.
"""
from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _tag_word(tag) -> int:
    if isinstance(tag, (int, np.integer)) and not isinstance(tag, bool):
        return int(tag) & _MASK64
    digest = hashlib.blake2b(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & _MASK64, *(_tag_word(t) for t in tags)])


def derive_seed(seed: int, *tags) -> int:
    """Collapse ``(seed, *tags)`` into a fresh 64-bit seed."""
    state = seed_sequence(seed, *tags).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def generator(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *tags)))
