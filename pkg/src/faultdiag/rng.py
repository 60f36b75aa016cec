"""Deterministic, stream-keyed random number generation.

Every stochastic routine in the package draws from a counter-based
generator (Philox) keyed on an explicit integer tuple. Two calls with
the same key produce the same stream regardless of call order, thread
scheduling, or how many other streams were consumed in between, which
is what makes permutation p-values and pipeline reports reproducible
bit for bit.
"""
from __future__ import annotations

from collections.abc import Iterator

import numpy as np


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Return a fresh generator keyed on ``(seed, *stream)``.

    The key tuple is fed through ``SeedSequence`` into a Philox
    counter-based bit generator, so distinct tuples give independent
    streams and equal tuples give identical ones.
    """
    entropy = (int(seed),) + tuple(int(s) for s in stream)
    if any(e < 0 for e in entropy):
        raise ValueError("rng keys must be non-negative integers")
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=entropy)))


def derive_seed(seed: int, *stream: int) -> int:
    """Derive a child integer seed from a parent seed and stream tag."""
    return int(rng_for(seed, *stream).integers(0, 2**63 - 1))


def permutation_stream(seed: int, n: int, n_permutations: int,
                       stream: tuple[int, ...] = ()) -> Iterator[np.ndarray]:
    """Yield ``n_permutations`` permutations of ``0..n-1``.

    Permutation ``b`` is produced by Fisher-Yates shuffling driven by
    the generator keyed on ``(seed, *stream, b)``. The sequence is
    identical for identical ``(seed, n, n_permutations)`` no matter in
    which order, or on which worker, the individual permutations are
    materialized.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    for b in range(n_permutations):
        yield permutation_at(seed, n, b, stream)


def permutation_at(seed: int, n: int, index: int,
                   stream: tuple[int, ...] = ()) -> np.ndarray:
    """Return permutation ``index`` of the stream without iterating to it."""
    return rng_for(seed, *stream, index).permutation(n)
