"""Seed handling: counter-based generators and deterministic seed splitting.

Every random draw in the package comes from a Philox generator keyed by a
64-bit seed.  Replicate seeds are derived with :func:`split_seed`, which
feeds ``(base_seed, *keys)`` through :class:`numpy.random.SeedSequence`
(``base_seed`` as entropy, ``keys`` as spawn key) and reads one 64-bit word.
The derivation depends only on its arguments, so any worker in any order
reproduces the same stream for a given replicate.
"""

from __future__ import annotations

import numpy as np

from .errors import ValidationError

__all__ = ["make_rng", "split_seed", "check_seed", "MAX_SEED"]

MAX_SEED = 2**64 - 1


def check_seed(seed) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ValidationError(f"seed must be an integer, got {seed!r}")
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")
    return seed


def make_rng(seed: int) -> np.random.Generator:
    """Philox-backed generator for a 64-bit seed."""
    return np.random.Generator(np.random.Philox(check_seed(seed)))


def split_seed(base_seed: int, *keys: int) -> int:
    """Derive a child seed from ``base_seed`` and nonnegative integer keys."""
    base = check_seed(base_seed)
    for k in keys:
        if int(k) < 0:
            raise ValidationError("seed keys must be nonnegative")
    ss = np.random.SeedSequence(entropy=base, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
