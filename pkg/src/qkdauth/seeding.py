"""Label-based derivation of independent random streams from one master seed."""

from __future__ import annotations

import hashlib

import numpy as np

SEED_MASK = (1 << 64) - 1


def _words(master_seed: int, label: str) -> list[int]:
    seed = int(master_seed) & SEED_MASK
    digest = hashlib.sha256(label.encode()).digest()
    return [seed & 0xFFFFFFFF, seed >> 32] + [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]


def derive_rng(master_seed: int, label: str) -> np.random.Generator:
    """Generator for one party/channel/stage, e.g. ``"alice/bits"``."""
    return np.random.default_rng(np.random.SeedSequence(_words(master_seed, label)))


def derive_seed(master_seed: int, label: str) -> int:
    """A 64-bit child seed, used for per-trial master seeds."""
    state = np.random.SeedSequence(_words(master_seed, label)).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)
