"""Named, reproducible random substreams.

Every source of randomness in the pipeline derives from a single top-level
seed through `substream(seed, *keys)`.  Keys are hashed with sha256 (stable
across processes, unlike builtin hash()), so a given (seed, keys) pair
always yields the same generator regardless of creation order or thread
scheduling.
"""

import hashlib

import numpy as np


def _key_entropy(key) -> int:
    digest = hashlib.sha256(repr(key).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, *keys) -> np.random.Generator:
    """Return an independent Generator for the given seed and key path.

    Example: substream(7, "augment", subject, video_idx, pair_idx)
    """
    entropy = [int(seed)] + [_key_entropy(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
