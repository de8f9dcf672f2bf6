"""Small helpers for bit strings stored as ``uint8`` numpy arrays."""

from __future__ import annotations

import numpy as np


def as_bits(value) -> np.ndarray:
    """Coerce ``"1011"``, a sequence of ints, or an array into a uint8 bit array."""
    if isinstance(value, str):
        if value and set(value) - {"0", "1"}:
            raise ValueError(f"not a bit string: {value!r}")
        return np.frombuffer(value.encode("ascii"), dtype=np.uint8) - ord("0")
    if isinstance(value, np.ndarray) and value.dtype == np.uint8 and value.ndim == 1:
        return value
    arr = np.asarray(value, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("bit sequences must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError("bit values must be 0 or 1")
    return arr


def to_str(bits) -> str:
    return "".join("1" if b else "0" for b in np.asarray(bits).tolist())


def pack(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack(data: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8), count=count)


def hamming(a, b) -> int:
    return int(np.count_nonzero(np.asarray(a) != np.asarray(b)))


def random_bits(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(0, 2, size=n, dtype=np.uint8)
