"""Deterministic seed derivation.

Every random quantity in the package flows from one root seed.  Sub-streams
are derived as ``SeedSequence([root, crc32(tag_0), crc32(tag_1), ...])`` so
that a (root, tags) pair always maps to the same generator, independent of
call order.  String tags are hashed with crc32 (stable across processes,
unlike the builtin ``hash``); integer tags are used as-is.
"""

import zlib

import numpy as np


def _tag_value(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    if isinstance(tag, str):
        return zlib.crc32(tag.encode("utf-8"))
    raise TypeError(f"seed tags must be int or str, got {type(tag).__name__}")


def derive_seed(root: int, *tags) -> int:
    """A 63-bit seed for the sub-stream identified by (root, tags)."""
    seq = np.random.SeedSequence([int(root)] + [_tag_value(t) for t in tags])
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> 1)


def derive_rng(root: int, *tags) -> np.random.Generator:
    """Generator for the sub-stream identified by (root, tags)."""
    return np.random.default_rng(derive_seed(root, *tags))
