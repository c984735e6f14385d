"""Seed derivation and random streams.

Each chain draws from its own Philox (counter-based) generator.  Chain seeds
are derived from a master seed by spawning a `SeedSequence` child keyed on
the chain index, so any chain can be reproduced on its own.
"""

from __future__ import annotations

import numpy as np


def derive_seed(master: int, index: int) -> int:
    """64-bit seed for stream `index` under `master`."""
    ss = np.random.SeedSequence(int(master), spawn_key=(int(index),))
    lo, hi = ss.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def uniform_in_ball(rng: np.random.Generator, d: int, radius: float = 1.0, size=None) -> np.ndarray:
    """Uniform samples from the open ball B_radius(0) in R^d."""
    shape = (d,) if size is None else (size, d)
    v = rng.standard_normal(shape)
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True))
    u = rng.random(() if size is None else (size, 1))
    return radius * v / norm * u ** (1.0 / d)
