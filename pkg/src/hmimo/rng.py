"""Counter-based random streams.

Every random draw in the package comes from a generator keyed by
``(base_seed, purpose, *counters)``: the purpose string is hashed with
SHA-256 (stable across processes, unlike ``hash``) and used together with
the counters as the ``spawn_key`` of a :class:`numpy.random.SeedSequence`.
Trial ``t`` therefore sees the same numbers no matter how trials are
scheduled across workers.
"""

import hashlib

import numpy as np


def purpose_id(purpose: str) -> int:
    return int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:8], "little")


def stream(base_seed: int, purpose: str, *counters: int) -> np.random.Generator:
    key = (purpose_id(purpose),) + tuple(int(c) for c in counters)
    ss = np.random.SeedSequence(int(base_seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def as_generator(rng) -> np.random.Generator:
    """Accept a Generator, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def complex_normal(rng: np.random.Generator, size, variance=1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))
