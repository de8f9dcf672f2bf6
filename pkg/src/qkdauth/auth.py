"""Identity verification keyed by part of the distilled key.

The shared key is split into an authentication part ``k_a`` and a message
part ``k_m``.  The parties then run a mutual nonce challenge-response whose
tags are one-time Toeplitz hashes keyed by ``k_a``; ``k_m`` is released as
the final key only if both sides accept.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .bits import as_bits, pack, random_bits, unpack
from .channel import MessageKind, PublicChannel
from .errors import KeyReuse, KeyTooShort
from .privacy import ToeplitzSeed, compress

ROLE_A = 0x41
ROLE_B = 0x42
ROLE_BITS = 8


class SplitRule(str, Enum):
    ODD_POSITION = "odd-position"
    HASH_DERIVED = "hash-derived"


class AuthVerdict(str, Enum):
    ACCEPT = "ACCEPT"
    ABORT = "ABORT"
    NOT_RUN = "NOT_RUN"


@dataclass(frozen=True)
class AuthParams:
    rule: SplitRule = SplitRule.ODD_POSITION
    ka_len: int = 64
    tag_len: int = 16
    nonce_len: int = 16
    # tag_len < 8 is only useful to demonstrate forging odds.
    insecure_ok: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rule", SplitRule(self.rule))
        if self.tag_len < (1 if self.insecure_ok else 8):
            raise ValueError(f"tag_len must be >= 8, got {self.tag_len}")
        if self.nonce_len < 16:
            raise ValueError(f"nonce_len must be >= 16, got {self.nonce_len}")
        if self.rule is SplitRule.HASH_DERIVED and self.ka_len < self.required_ka_len:
            raise ValueError(f"ka_len must be >= {self.required_ka_len} for "
                             f"tag_len={self.tag_len}, nonce_len={self.nonce_len}")

    @property
    def message_len(self) -> int:
        return self.nonce_len + ROLE_BITS

    @property
    def required_ka_len(self) -> int:
        return self.message_len + self.tag_len - 1


def odd_even_split(k) -> Tuple[np.ndarray, np.ndarray]:
    k = as_bits(k)
    # 1-indexed odd positions are 0-indexed even ones.
    return k[0::2].copy(), k[1::2].copy()


def interleave(k_a, k_m) -> np.ndarray:
    k_a, k_m = as_bits(k_a), as_bits(k_m)
    if len(k_a) - len(k_m) not in (0, 1):
        raise ValueError("odd-position part must be as long as, or one longer than, the even part")
    out = np.empty(len(k_a) + len(k_m), dtype=np.uint8)
    out[0::2] = k_a
    out[1::2] = k_m
    return out


def split_key(k, params: AuthParams, seed: Optional[ToeplitzSeed] = None,
              rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(k_a, k_m)``.

    HASH_DERIVED needs a public seed of ``len(k) + ka_len - 1`` bits; pass it
    in, or pass ``rng`` to draw one.
    """
    k = as_bits(k)
    if params.rule is SplitRule.ODD_POSITION:
        if len(k) < 2:
            raise KeyTooShort(f"need at least 2 bits to split, got {len(k)}")
        return odd_even_split(k)
    if len(k) < params.ka_len + 1:
        raise KeyTooShort(f"need at least {params.ka_len + 1} bits to derive k_a, got {len(k)}")
    if seed is None:
        if rng is None:
            raise ValueError("HASH_DERIVED split needs a seed or an rng")
        seed = ToeplitzSeed.random(len(k), params.ka_len, rng)
    return compress(k, seed, params.ka_len), k.copy()


def mac(k_a, message, tag_len: int) -> np.ndarray:
    k_a, message = as_bits(k_a), as_bits(message)
    need = len(message) + tag_len - 1
    if len(k_a) < need:
        raise KeyTooShort(f"k_a has {len(k_a)} bits, tagging {len(message)} bits "
                          f"to {tag_len} needs {need}")
    return compress(message, k_a[:need], tag_len)


def _role(byte: int) -> np.ndarray:
    return np.unpackbits(np.array([byte], dtype=np.uint8))


class KeyedAuthenticator:
    """A legitimate party's side of the challenge-response, holding ``k_a``.

    The key is single use: a second verification raises :class:`KeyReuse`.
    """

    def __init__(self, k_a, params: AuthParams, rng: np.random.Generator):
        self.k_a = as_bits(k_a)
        self.params = params
        self.rng = rng
        self.used = False
        if len(self.k_a) < params.required_ka_len:
            raise KeyTooShort(f"k_a has {len(self.k_a)} bits, need {params.required_ka_len}")

    def begin(self):
        if self.used:
            raise KeyReuse("authentication key already consumed")
        self.used = True

    def nonce(self) -> np.ndarray:
        return random_bits(self.rng, self.params.nonce_len)

    def tag(self, message) -> np.ndarray:
        return mac(self.k_a, message, self.params.tag_len)

    def check(self, message, tag) -> bool:
        return bool(np.array_equal(self.tag(message), tag))


@dataclass(frozen=True)
class AuthOutcome:
    alice: AuthVerdict
    bob: AuthVerdict

    @property
    def verdict(self) -> AuthVerdict:
        if self.alice is AuthVerdict.ACCEPT and self.bob is AuthVerdict.ACCEPT:
            return AuthVerdict.ACCEPT
        return AuthVerdict.ABORT


def verify_identity(alice, bob, channel: PublicChannel, params: AuthParams,
                    rng: Optional[np.random.Generator] = None,
                    names: Tuple[str, str] = ("alice", "bob")) -> AuthOutcome:
    """Mutual challenge-response between ``alice`` and ``bob``.

    Either side may be a raw ``k_a`` bit array (wrapped in a
    :class:`KeyedAuthenticator` drawing nonces from ``rng``) or any object
    with ``begin``, ``nonce``, ``tag`` and ``check``.  A failed check sends
    an ABORT verdict and closes the channel.
    """
    if not hasattr(alice, "tag"):
        alice = KeyedAuthenticator(alice, params, rng if rng is not None else np.random.default_rng())
    if not hasattr(bob, "tag"):
        bob = KeyedAuthenticator(bob, params, rng if rng is not None else np.random.default_rng())
    a_name, b_name = names
    alice.begin()
    bob.begin()
    tag_bytes = (params.tag_len + 7) // 8

    n_a = alice.nonce()
    msg = channel.post(a_name, b_name, MessageKind.AUTH_CHALLENGE, pack(n_a))
    n_a_seen = unpack(msg.payload, params.nonce_len)

    n_b = bob.nonce()
    tag_b = bob.tag(np.concatenate([n_a_seen, _role(ROLE_B)]))
    msg = channel.post(b_name, a_name, MessageKind.AUTH_RESPONSE, pack(tag_b) + pack(n_b))
    tag_b_seen = unpack(msg.payload[:tag_bytes], params.tag_len)
    n_b_seen = unpack(msg.payload[tag_bytes:], params.nonce_len)

    if not alice.check(np.concatenate([n_a, _role(ROLE_B)]), tag_b_seen):
        channel.post(a_name, b_name, MessageKind.VERDICT, AuthVerdict.ABORT.value.encode())
        channel.close()
        return AuthOutcome(AuthVerdict.ABORT, AuthVerdict.ABORT)

    tag_a = alice.tag(np.concatenate([n_b_seen, _role(ROLE_A)]))
    msg = channel.post(a_name, b_name, MessageKind.AUTH_RESPONSE, pack(tag_a))
    tag_a_seen = unpack(msg.payload, params.tag_len)

    bob_ok = bob.check(np.concatenate([n_b, _role(ROLE_A)]), tag_a_seen)
    bob_says = AuthVerdict.ACCEPT if bob_ok else AuthVerdict.ABORT
    msg = channel.post(b_name, a_name, MessageKind.VERDICT, bob_says.value.encode())
    alice_says = AuthVerdict(msg.payload.decode())
    if bob_says is AuthVerdict.ABORT or alice_says is AuthVerdict.ABORT:
        channel.close()
    return AuthOutcome(alice_says, bob_says)
