"""Seed handling.

Library entry points accept ``None``, an integer seed, a
:class:`numpy.random.SeedSequence` or a :class:`numpy.random.Generator`.
Generators are numpy's PCG64. Replicate ``r`` of a run with master seed
``S`` always draws from ``SeedSequence([S, r])`` so results do not depend
on how replicates are scheduled across threads.

Compiled simulation kernels use numba's per-thread Mersenne Twister
(MT19937), seeded with a 32-bit word taken from the same seed sequence.
"""

from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence | np.random.Generator | None"


def as_generator(rng=None) -> np.random.Generator:
    """Return a numpy Generator for any accepted seed-like value."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng))
    return np.random.default_rng(rng)


def replicate_seed(master_seed: int, r: int) -> np.random.SeedSequence:
    """Seed sequence for replicate ``r`` of a run seeded with ``master_seed``."""
    return np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(r)])


def replicate_generator(master_seed: int, r: int) -> np.random.Generator:
    return as_generator(replicate_seed(master_seed, r))


def kernel_seed(ss: np.random.SeedSequence) -> int:
    """32-bit seed for the compiled kernels, derived from ``ss``."""
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def draw_master_seed(rng) -> int:
    """Draw a 63-bit master seed from a generator (used to fan out replicates)."""
    return int(as_generator(rng).integers(0, 2**63 - 1))
