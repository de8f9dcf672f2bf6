"""Privacy amplification by Toeplitz hashing over GF(2).

A reconciled key of ``n`` bits, of which ``t`` were disclosed, is compressed
to ``r = n - t - s`` bits.  The hash is drawn from the binary Toeplitz
family, seeded by ``n + r - 1`` public random bits.  Row ``i`` of the matrix
is the seed window ``seed[i : i + n]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import fftconvolve

from .bits import as_bits, random_bits
from .errors import DimensionMismatch, SafetyViolation

DIRECT_LIMIT = 1 << 22


def output_length(n: int, t: int, s: int) -> int:
    if s < 1:
        raise SafetyViolation(f"safety parameter must be >= 1, got s={s}")
    if s >= n - t:
        raise SafetyViolation(f"s={s} >= n - t = {n - t}: no secure key is distillable")
    return n - t - s


@dataclass(frozen=True)
class CompressionSpec:
    n: int
    t: int
    s: int

    @property
    def r(self) -> int:
        return output_length(self.n, self.t, self.s)

    @property
    def seed_length(self) -> int:
        return self.n + self.r - 1


@dataclass(frozen=True, eq=False)
class ToeplitzSeed:
    bits: np.ndarray

    @classmethod
    def random(cls, n: int, r: int, rng: np.random.Generator) -> "ToeplitzSeed":
        return cls(random_bits(rng, n + r - 1))

    def __len__(self):
        return len(self.bits)

    def __eq__(self, other):
        return isinstance(other, ToeplitzSeed) and np.array_equal(self.bits, other.bits)

    def matrix(self, n: int, r: int) -> np.ndarray:
        """Dense ``r x n`` view of the hash matrix (no copy)."""
        if len(self.bits) != n + r - 1:
            raise DimensionMismatch(f"seed has {len(self.bits)} bits, need n + r - 1 = {n + r - 1}")
        return np.lib.stride_tricks.sliding_window_view(self.bits, n)[:r]


def compress(w, seed: ToeplitzSeed | np.ndarray, r: int) -> np.ndarray:
    w = as_bits(w)
    seed_bits = seed.bits if isinstance(seed, ToeplitzSeed) else as_bits(seed)
    n = len(w)
    if r < 0 or len(seed_bits) != n + r - 1:
        raise DimensionMismatch(
            f"seed has {len(seed_bits)} bits, need n + r - 1 = {n + r - 1} for n={n}, r={r}")
    if r == 0:
        return np.zeros(0, dtype=np.uint8)
    if n * r <= DIRECT_LIMIT:
        # correlate(seed, w, 'valid')[i] == sum_j seed[i + j] * w[j]
        acc = np.correlate(seed_bits.astype(np.int64), w.astype(np.int64), mode="valid")
    else:
        # Sums are integers <= n, far inside float64's exact range.
        acc = np.rint(fftconvolve(seed_bits.astype(np.float64), w[::-1].astype(np.float64),
                                  mode="valid")).astype(np.int64)
    return (acc & 1).astype(np.uint8)


def eve_information_bound(s: int) -> float:
    """Upper bound, in bits, on Eve's expected information about the final key."""
    return 2.0 ** -s / math.log(2)
