"""Eve: passive listening, intercept-resend, and full impersonation.

Under ``IMPERSONATE`` Eve cuts the line and runs two complete protocol
instances, playing Bob toward Alice and Alice toward Bob.  She follows both
protocols honestly except that she never reads an authentication key: every
tag she has to produce is a uniform guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from .auth import AuthParams
from .bits import random_bits
from .photonics import Basis, PhotonState, measure


class AdversaryKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND = "intercept"
    IMPERSONATE = "impersonate"


@dataclass(frozen=True)
class AdversaryStrategy:
    kind: AdversaryKind = AdversaryKind.NONE
    intercept_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AdversaryKind(self.kind))
        if not 0.0 <= self.intercept_fraction <= 1.0:
            raise ValueError(f"intercept_fraction must lie in [0, 1], got {self.intercept_fraction}")

    @classmethod
    def parse(cls, text: str) -> "AdversaryStrategy":
        """Parse the CLI form: ``none``, ``impersonate`` or ``intercept:F``."""
        name, _, frac = text.strip().partition(":")
        kind = AdversaryKind(name.lower())
        if kind is AdversaryKind.INTERCEPT_RESEND:
            return cls(kind, float(frac) if frac else 1.0)
        if frac:
            raise ValueError(f"adversary {name!r} takes no parameter")
        return cls(kind)

    @property
    def label(self) -> str:
        if self.kind is AdversaryKind.INTERCEPT_RESEND:
            return f"intercept:{self.intercept_fraction:g}"
        return self.kind.value


@dataclass
class EveState:
    observed_bases: List[np.ndarray] = field(default_factory=list)
    observed_bits: List[np.ndarray] = field(default_factory=list)
    session_ab: Optional[object] = None  # KeyLedger of Eve-as-Bob facing Alice
    session_eb: Optional[object] = None  # KeyLedger of Eve-as-Alice facing Bob

    def record(self, bases, bits):
        self.observed_bases.append(np.asarray(bases, dtype=np.uint8))
        self.observed_bits.append(np.asarray(bits, dtype=np.uint8))


def intercept_resend(photon: PhotonState, rng: np.random.Generator,
                     state: Optional[EveState] = None) -> PhotonState:
    basis = Basis(int(rng.integers(0, 2)))
    bit = measure(photon, basis, rng)
    if state is not None:
        state.record([basis], [bit])
    return PhotonState(basis, bit)


def intercept_many(bases: np.ndarray, bits: np.ndarray, fraction: float,
                   rng: np.random.Generator, state: Optional[EveState] = None):
    """Measure-and-resend a random ``fraction`` of the photons.

    Returns the ``(bases, bits)`` arriving at the channel after Eve.
    """
    n = len(bits)
    hit = rng.random(n) < fraction
    eve_bases = rng.integers(0, 2, size=n, dtype=np.uint8)
    coins = rng.integers(0, 2, size=n, dtype=np.uint8)
    eve_bits = np.where(eve_bases == bases, bits, coins).astype(np.uint8)
    if state is not None:
        state.record(eve_bases[hit], eve_bits[hit])
    return np.where(hit, eve_bases, bases).astype(np.uint8), np.where(hit, eve_bits, bits).astype(np.uint8)


class ForgingAuthenticator:
    """Eve's stand-in for a party's authenticator: she has no ``k_a``.

    Tags are uniform guesses and incoming tags are accepted unchecked.
    """

    def __init__(self, params: AuthParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.used = False
        self.guesses = 0

    def begin(self):
        self.used = True

    def nonce(self) -> np.ndarray:
        return random_bits(self.rng, self.params.nonce_len)

    def tag(self, message) -> np.ndarray:
        self.guesses += 1
        return random_bits(self.rng, self.params.tag_len)

    def check(self, message, tag) -> bool:
        return True


def impersonate(cfg):
    """Run both halves of a man-in-the-middle attack.

    Returns ``(EveState, alice_side_report, bob_side_report)``.  Each side is
    a complete protocol instance between one honest party and Eve.
    """
    from .pipeline import run_leg, leg_seeds

    if cfg.adversary.kind is not AdversaryKind.IMPERSONATE:
        raise ValueError("impersonate() needs an IMPERSONATE adversary")
    seed_ab, seed_eb = leg_seeds(cfg.seed)
    eve = EveState()
    alice_side = run_leg(cfg, seed_ab, forger="bob")
    bob_side = run_leg(cfg, seed_eb, forger="alice")
    eve.session_ab = alice_side.ledgers["bob"]
    eve.session_eb = bob_side.ledgers["alice"]
    return eve, alice_side, bob_side
