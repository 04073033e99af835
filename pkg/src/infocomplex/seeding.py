"""Labeled seed splitting so every random stream derives from one integer seed."""
from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, *labels) -> int:
    key = repr((int(seed),) + tuple(str(l) for l in labels)).encode()
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "little")


def derive_rng(seed: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *labels))
