"""Interactive parity/bisection error correction.

Each round both parties apply the same public random permutation, cut the
permuted key into equal blocks and compare block parities.  Every block
whose parities differ holds an odd number of errors; halving it while
comparing the parity of the left half walks down to one erroneous bit,
which Bob flips.  Alice's key is the reference and is never changed.

Reconciliation stops after ``agree_rounds_needed`` consecutive rounds in
which every block parity matched.  Each compared parity is one leaked bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .bits import hamming
from .channel import (MessageKind, PublicChannel, decode_parity, decode_seed,
                      encode_parity, encode_seed)
from .errors import (InsufficientKey, LengthMismatch, NotConverged, OutOfRange,
                     ParityAgrees)

AUTO = None


@dataclass(frozen=True)
class ReconParams:
    initial_block_size: Optional[int] = AUTO
    agree_rounds_needed: int = 3
    max_rounds: int = 32

    def __post_init__(self):
        if self.initial_block_size is not None and self.initial_block_size < 2:
            raise ValueError("initial_block_size must be >= 2 (or AUTO)")
        if self.agree_rounds_needed < 1:
            raise ValueError("agree_rounds_needed must be >= 1")
        if self.max_rounds < self.agree_rounds_needed:
            raise ValueError("max_rounds must be >= agree_rounds_needed")


@dataclass
class ReconOutcome:
    corrected_alice: np.ndarray
    corrected_bob: np.ndarray
    parity_comparisons: int
    rounds_run: int
    converged: bool
    block_size: int  # block size of the last round
    # Simulator-side diagnostics; neither party could compute these.
    hamming_trace: List[int] = field(default_factory=list)
    mismatch_trace: List[int] = field(default_factory=list)


def auto_block_size(qber_est: float, length: int) -> int:
    rate = max(qber_est, 1.0 / length)
    k = math.ceil(0.73 / rate)
    return int(min(max(k, 2), max(length // 2, 2)))


def block_parity(key, start: int, stop: int) -> int:
    n = len(key)
    if not 0 <= start < stop <= n:
        raise OutOfRange(f"range [{start}, {stop}) outside key of length {n}")
    return int(np.count_nonzero(key[start:stop]) & 1)


def bisect_fix(alice_key, bob_key, start: int, stop: int, channel: Optional[PublicChannel] = None,
               alice: str = "alice", bob: str = "bob") -> int:
    """Locate and flip one erroneous bit of ``bob_key`` inside ``[start, stop)``.

    ``bob_key`` is modified in place.  Returns the flipped index.
    """
    if block_parity(alice_key, start, stop) == block_parity(bob_key, start, stop):
        raise ParityAgrees(f"block [{start}, {stop}) parities already agree")
    channel = channel if channel is not None else PublicChannel()
    lo, hi = start, stop
    while hi - lo > 1:
        mid = lo + (hi - lo) // 2
        msg = channel.post(alice, bob, MessageKind.PARITY,
                           encode_parity(lo, mid, block_parity(alice_key, lo, mid)))
        _, _, announced = decode_parity(msg.payload)
        mine = block_parity(bob_key, lo, mid)
        channel.post(bob, alice, MessageKind.PARITY_REPLY, encode_parity(lo, mid, mine))
        if announced != mine:
            hi = mid
        else:
            lo = mid
    bob_key[lo] ^= 1
    return lo


def _run_round(a_perm, b_perm, block: int, channel, alice, bob) -> int:
    n = len(a_perm)
    starts = np.arange(0, n, block)
    a_par = (np.add.reduceat(a_perm, starts) & 1).tolist()
    b_par = (np.add.reduceat(b_perm, starts) & 1).tolist()
    bad = []
    for lo, pa, pb in zip(starts.tolist(), a_par, b_par):
        hi = min(lo + block, n)
        msg = channel.post(alice, bob, MessageKind.PARITY, encode_parity(lo, hi, pa))
        channel.post(bob, alice, MessageKind.PARITY_REPLY, encode_parity(lo, hi, pb))
        if decode_parity(msg.payload)[2] != pb:
            bad.append((lo, hi))
    for lo, hi in bad:
        bisect_fix(a_perm, b_perm, lo, hi, channel, alice, bob)
    return len(bad)


def reconcile(alice_key, bob_key, qber_est: float, params: ReconParams = ReconParams(),
              channel: Optional[PublicChannel] = None, rng: Optional[np.random.Generator] = None,
              alice: str = "alice", bob: str = "bob") -> ReconOutcome:
    alice_key = np.asarray(alice_key, dtype=np.uint8)
    bob_key = np.array(bob_key, dtype=np.uint8)
    n = len(alice_key)
    if len(bob_key) != n:
        raise LengthMismatch(f"alice has {n} bits, bob has {len(bob_key)}")
    block = params.initial_block_size
    adaptive = block is None
    if adaptive:
        if n < 4:
            raise InsufficientKey(f"{n} bits is too short to reconcile")
        block = auto_block_size(qber_est, n)
    if n < 2 * block:
        raise InsufficientKey(f"key of {n} bits is shorter than two blocks of {block}")
    channel = channel if channel is not None else PublicChannel()
    rng = rng if rng is not None else np.random.default_rng()

    start_seq = len(channel.transcript)
    outcome = ReconOutcome(alice_key, bob_key, 0, 0, False, block)
    clean = fixed = 0
    while outcome.rounds_run < params.max_rounds:
        seed = int(rng.integers(0, 2**63))
        msg = channel.post(alice, bob, MessageKind.PERMUTATION_SEED, encode_seed(seed))
        perm = np.random.default_rng(decode_seed(msg.payload)).permutation(n)
        a_perm = alice_key[perm]
        b_perm = bob_key[perm]
        mismatched = _run_round(a_perm, b_perm, block, channel, alice, bob)
        bob_key[perm] = b_perm
        outcome.rounds_run += 1
        outcome.mismatch_trace.append(mismatched)
        outcome.hamming_trace.append(hamming(alice_key, bob_key))
        clean = clean + 1 if mismatched == 0 else 0
        fixed += mismatched
        if adaptive and mismatched:
            # Errors already found bound the error rate from below; an
            # estimate from a small sample can be far too optimistic.
            block = auto_block_size(max(qber_est, fixed / n), n)
            outcome.block_size = block
        if clean >= params.agree_rounds_needed:
            outcome.converged = True
            break

    outcome.parity_comparisons = sum(
        1 for e in channel.transcript.entries[start_seq:] if e.delivered.kind is MessageKind.PARITY)
    if not outcome.converged:
        err = NotConverged(f"no {params.agree_rounds_needed} clean rounds in a row "
                           f"within {params.max_rounds} rounds")
        err.outcome = outcome
        raise err
    return outcome
