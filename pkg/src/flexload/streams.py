"""Deterministic random-stream derivation.

Every random draw in a scenario comes from a generator derived from
(master_seed, purpose tag, optional sub-id). Streams are independent of
each other and of the order in which other streams are consumed, so
per-load noise is reproducible regardless of scheduling.
"""

import zlib

import numpy as np

_TAG_SALT = 0x5F3C


def _tag_code(tag: str) -> int:
    return zlib.crc32(tag.encode("ascii")) ^ _TAG_SALT


def derive_rng(master_seed: int, tag: str, sub_id: int = 0) -> np.random.Generator:
    """Generator for (master_seed, tag, sub_id); stable across runs and platforms."""
    seq = np.random.SeedSequence(entropy=(int(master_seed), _tag_code(tag), int(sub_id)))
    return np.random.default_rng(seq)
