"""Keyed random substreams.

Every stochastic step draws from a generator derived from a master seed and
an integer key path through ``numpy.random.SeedSequence``; the sequence's
hash of ``(seed, spawn_key)`` is the mixing function. Serial and parallel
runs therefore consume identical streams.
"""
import numpy as np

# key slots inside one Monte Carlo replication
ERRORS = 0
MISSINGNESS = 1
BOOTSTRAP = 2

_SEED_MASK = (1 << 64) - 1


def _sequence(seed: int, key: tuple[int, ...]) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & _SEED_MASK, spawn_key=tuple(int(k) for k in key))


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for the key path under ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, key)))


def derive_seed(seed: int, *key: int) -> int:
    return int(_sequence(seed, key).generate_state(1, dtype=np.uint64)[0])
