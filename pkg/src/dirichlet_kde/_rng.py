"""Seed handling.

Every random operation accepts ``seed`` as an int, a
:class:`numpy.random.SeedSequence` or a ready :class:`numpy.random.Generator`.
Work units derive independent substreams from ``(seed, *key)`` so results
never depend on scheduling order.
"""

import numpy as np


def seed_sequence(seed, *key):
    """Child :class:`~numpy.random.SeedSequence` for ``key`` under ``seed``."""
    key = tuple(int(k) for k in key)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(
            seed.entropy, spawn_key=tuple(seed.spawn_key) + key
        )
    if seed is None:
        seed = np.random.SeedSequence().entropy
    return np.random.SeedSequence(int(seed), spawn_key=key)


def make_rng(seed, *key):
    """Generator for the substream ``key`` of ``seed``.

    A Generator passed as ``seed`` is returned unchanged (keys are ignored),
    which lets callers thread one stream through several operations.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *key)))
