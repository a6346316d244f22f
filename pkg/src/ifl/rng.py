"""Deterministic random-number streams.

All randomness in the package derives from a 64-bit master seed through
named Philox streams.  A stream is addressed by a path of small integers,
``stream(master, domain, *indices)``; the path is passed to
``numpy.random.SeedSequence`` as its ``spawn_key``, so any stream can be
reconstructed in isolation without replaying the others.  Philox is
counter-based, which keeps the draw sequence independent of thread or
process scheduling.

Stream domains used by the experiment harness:

* ``DOMAIN_DISORDER, draw``          - disorder field for replica ``draw``
* ``DOMAIN_CHAIN, draw, chain``      - MCMC chain ``chain`` of replica ``draw``
"""

from __future__ import annotations

import numpy as np

DOMAIN_DISORDER = 1
DOMAIN_CHAIN = 2

_U64 = np.uint64


def child_seed(master_seed: int, *path: int) -> int:
    """Derive the 64-bit seed for the stream addressed by ``path``."""
    if master_seed < 0:
        raise ValueError("master seed must be a non-negative integer")
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, _U64)[0])


def stream(master_seed: int, *path: int) -> np.random.Generator:
    """Philox generator for the stream addressed by ``path``."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def generator_from_seed(seed: int) -> np.random.Generator:
    """Philox generator seeded directly (used for a single chain's seed)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
