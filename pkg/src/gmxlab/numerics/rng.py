"""Deterministic random streams with label-derived substreams.

Every stochastic component in the repo draws from its own substream keyed by
(seed, labels...). Substreams are independent of each other, so skipping a
consumer (e.g. the augmentation branch at lambda=0) never perturbs the draws
seen by the others.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _label_words(label):
    """Hash a str/int label into four 32-bit words, stable across runs."""
    if isinstance(label, (int, np.integer)):
        raw = b"i" + int(label).to_bytes(16, "little", signed=True)
    elif isinstance(label, str):
        raw = b"s" + label.encode("utf-8")
    else:
        raise TypeError(f"substream labels must be str or int, got {type(label)!r}")
    digest = hashlib.blake2b(raw, digest_size=16).digest()
    return [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def seeded_rng(seed):
    """Generator fully determined by a 64-bit seed."""
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _MASK64))


def substream(seed, *labels):
    """Generator for the given (seed, labels...) key.

    Identical keys give identical streams; any change in seed or labels gives
    an unrelated stream.
    """
    entropy = [int(seed) & _MASK64]
    for label in labels:
        entropy.extend(_label_words(label))
    return np.random.default_rng(np.random.SeedSequence(entropy))


def substream_seed(seed, *labels):
    """A 64-bit integer derived from (seed, labels...), for APIs taking seeds."""
    return int(substream(seed, *labels).integers(0, _MASK64, dtype=np.uint64))
