"""Seed derivation shared by the modules that need reproducible randomness."""

import numpy as np

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def child_rng(seed, *keys):
    """Generator for a sub-stream identified by ``(seed, *keys)``.

    Children with different keys are statistically independent, and a child
    does not depend on the order in which siblings are created.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def child_seed(seed, *keys):
    return int(np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, dtype=np.uint64)[0])


def _splitmix64(z):
    z = (z + np.uint64(0x9E3779B97F4A7C15)) & _MASK64
    z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
    z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
    return z ^ (z >> np.uint64(31))


def stream_key(seed, *keys) -> np.uint64:
    """64-bit key naming one hashed stream."""
    with np.errstate(over="ignore"):
        return _splitmix64(np.uint64(child_seed(seed, *keys)))


def hash_uniform(key, index):
    """Uniform [0, 1) values that are a pure function of ``(key, index)``.

    ``index`` may be an integer array; the result has its shape.
    """
    idx = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix64(np.uint64(key) ^ _splitmix64(idx))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
