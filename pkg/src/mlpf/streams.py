"""Counter-based random streams for schedule-independent simulation.

Every random draw in a filter run is produced by a Philox generator whose
key is derived from ``(seed, purpose, level, unit_interval)`` via numpy's
SeedSequence.  The mapping from (particle, step) to a Gaussian variate is a
pure function of those integers, so results do not depend on execution
order, worker count, or how many other levels are being run.
"""

from __future__ import annotations

import numpy as np

# spawn-key purpose tags; keep stable, they define the reproducible stream layout
TAG_NOISE = 0
TAG_RESAMPLE = 1
TAG_OBS = 2
TAG_LATENT = 3
TAG_LEVEL = 4
TAG_REPLICATE = 5
TAG_TRUTH = 6


def generator(seed: int, *key: int) -> np.random.Generator:
    """Philox generator keyed by ``seed`` and an integer spawn key."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def noise_block(seed: int, level: int, interval: int, n: int, d_x: int) -> np.ndarray:
    """Standard-normal block of shape (n, 2**level, d_x) for one unit interval.

    Particle ``i`` owns row ``i``; step ``k`` of particle ``i`` is column
    ``k``.  Callers scale by sqrt(step size) to obtain Brownian increments.
    """
    g = generator(seed, TAG_NOISE, level, interval)
    return g.standard_normal((n, 2 ** level, d_x))


def resample_rng(seed: int, level: int, interval: int) -> np.random.Generator:
    """Generator for the resampling draws at the end of one unit interval."""
    return generator(seed, TAG_RESAMPLE, level, interval)


def level_seed(master_seed: int, level: int) -> int:
    """Derive an independent per-level seed for multilevel runs."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(TAG_LEVEL, int(level)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replicate_seed(master_seed: int, index: int) -> int:
    """Derive an independent seed for replicate ``index`` of a benchmark run."""
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(TAG_REPLICATE, int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
