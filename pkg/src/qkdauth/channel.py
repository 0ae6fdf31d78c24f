"""Single-photon prepare/transmit/measure model with two conjugate bases.

Scalar functions work on one :class:`QuantumSymbol`; the ``*_train`` variants
do the same thing over whole numpy arrays and are what sessions use.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

import numpy as np


class Basis(IntEnum):
    GAMMA0 = 0
    GAMMA1 = 1


@dataclass(frozen=True)
class QuantumSymbol:
    """One prepared photon: bit ``bit`` encoded in basis ``basis``."""

    basis: Basis
    bit: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "basis", Basis(int(self.basis)))
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")


def _check_probability(name: str, value: float) -> None:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")


@dataclass(frozen=True)
class ChannelParams:
    p_loss: float = 0.0
    p_noise: float = 0.0

    def __post_init__(self) -> None:
        _check_probability("p_loss", self.p_loss)
        _check_probability("p_noise", self.p_noise)


NOISELESS = ChannelParams()


@dataclass
class PulseTrain:
    """Photons for slots ``0..len-1``; parallel uint8 arrays."""

    basis: np.ndarray
    bit: np.ndarray

    def __len__(self) -> int:
        return int(self.basis.size)

    def symbol(self, t: int) -> QuantumSymbol:
        return QuantumSymbol(Basis(int(self.basis[t])), int(self.bit[t]))


def transmit(symbol: QuantumSymbol, params: ChannelParams, rng: np.random.Generator) -> QuantumSymbol | None:
    """Deliver the symbol unchanged, or lose it with probability ``p_loss``."""
    if rng.random() < params.p_loss:
        return None
    return symbol


def measure(symbol: QuantumSymbol, measurement_basis: Basis | int, p_noise: float, rng: np.random.Generator) -> int:
    """Measure a delivered photon.

    Matching basis returns the encoded bit, flipped with probability
    ``p_noise``; the conjugate basis returns a uniform random bit.
    """
    flip = rng.random() < p_noise
    coin = int(rng.integers(0, 2))
    if int(measurement_basis) == int(symbol.basis):
        return symbol.bit ^ int(flip)
    return coin


def transmit_train(train: PulseTrain, params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    """Boolean delivery mask, one independent loss draw per pulse."""
    return rng.random(len(train)) >= params.p_loss


def measure_train(
    train: PulseTrain,
    measurement_basis: np.ndarray,
    p_noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """Measurement outcome for every slot.

    Draws are made for all slots, delivered or not, so the random stream
    does not depend on the loss pattern or the bases; callers mask out
    undelivered slots.
    """
    n = len(train)
    flips = (rng.random(n) < p_noise).astype(np.uint8)
    coins = rng.integers(0, 2, size=n, dtype=np.uint8)
    matched = measurement_basis == train.basis
    return np.where(matched, train.bit ^ flips, coins).astype(np.uint8)
