"""Seeded, splittable random streams.

Every stream is a counter-based Philox generator keyed by a
``SeedSequence``; work item ``i`` of a run with root seed ``s`` always
draws from ``SeedSequence(s, spawn_key=(i,))`` regardless of scheduling.
"""

from __future__ import annotations

import os

import numpy as np

GENERATOR_NAME = "numpy.random.Philox(4x64-10)"
DEFAULT_SEED = 20240521


def default_seed() -> int:
    return int(os.environ.get("IDBOUNDS_SEED", DEFAULT_SEED))


def stream(seed: int, index: int | None = None) -> np.random.Generator:
    """Generator for work item ``index`` of root ``seed`` (root stream if None)."""
    ss = np.random.SeedSequence(seed) if index is None else np.random.SeedSequence(seed, spawn_key=(index,))
    return np.random.Generator(np.random.Philox(ss))


def provenance(seed: int, **extra) -> dict:
    return {"seed": int(seed), "generator": GENERATOR_NAME, **extra}
