"""Single-photon polarization model for the four-state protocol.

Photons are prepared in one of two conjugate bases (linear H/V or circular
L/R).  Measuring in the preparation basis returns the encoded bit; measuring
in the other basis returns a fair coin.  The channel may lose a photon or
flip its bit inside the preparation basis.

Scalar functions (``prepare``, ``transmit``, ``measure``) operate on one
photon.  The ``*_many`` variants do the same on whole numpy arrays and are
what the pipeline uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional

import numpy as np


class Basis(IntEnum):
    LINEAR = 0
    CIRCULAR = 1

    @property
    def conjugate(self) -> "Basis":
        return Basis(1 - self.value)


@dataclass(frozen=True)
class PhotonState:
    basis: Basis
    bit: int

    def __post_init__(self):
        if self.bit not in (0, 1):
            raise ValueError(f"bit must be 0 or 1, got {self.bit!r}")
        object.__setattr__(self, "basis", Basis(self.basis))


@dataclass(frozen=True)
class ChannelParams:
    flip_prob: float = 0.0
    loss_prob: float = 0.0

    def __post_init__(self):
        for name in ("flip_prob", "loss_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class Detection:
    """Bob's record for one time slot; ``outcome is None`` means the photon was lost."""

    outcome: Optional[int]
    basis_used: Basis

    @property
    def lost(self) -> bool:
        return self.outcome is None


def prepare(bit: int, basis: Basis) -> PhotonState:
    return PhotonState(Basis(basis), int(bit))


def transmit(state: PhotonState, ch: ChannelParams, rng: np.random.Generator) -> Optional[PhotonState]:
    # Two draws per photon regardless of outcome keeps stream consumption fixed.
    lost = rng.random() < ch.loss_prob
    flipped = rng.random() < ch.flip_prob
    if lost:
        return None
    if flipped:
        return PhotonState(state.basis, 1 - state.bit)
    return state


def measure(state: PhotonState, basis: Basis, rng: np.random.Generator) -> int:
    coin = int(rng.integers(0, 2))
    if Basis(basis) == state.basis:
        return state.bit
    return coin


def detect(state: Optional[PhotonState], basis: Basis, rng: np.random.Generator) -> Detection:
    if state is None:
        return Detection(None, Basis(basis))
    return Detection(measure(state, basis, rng), Basis(basis))


# -- vectorized forms -------------------------------------------------------

LOST = -1


def transmit_many(bases: np.ndarray, bits: np.ndarray, ch: ChannelParams,
                  rng: np.random.Generator):
    """Send a batch of photons through the channel.

    Returns ``(bases, bits, present)``.  Bases pass through untouched.
    """
    n = len(bits)
    present = rng.random(n) >= ch.loss_prob
    flips = (rng.random(n) < ch.flip_prob).astype(np.uint8)
    return bases, bits ^ flips, present


def measure_many(state_bases: np.ndarray, state_bits: np.ndarray, bases: np.ndarray,
                 rng: np.random.Generator) -> np.ndarray:
    coins = rng.integers(0, 2, size=len(state_bits), dtype=np.uint8)
    return np.where(state_bases == bases, state_bits, coins).astype(np.uint8)


def detect_many(state_bases, state_bits, present, bases, rng) -> np.ndarray:
    """Bob's outcomes as int8, with ``LOST`` (-1) where no photon arrived."""
    outcomes = measure_many(state_bases, state_bits, bases, rng).astype(np.int8)
    outcomes[~present] = LOST
    return outcomes
