"""Session orchestration: transmission, sifting, estimation, correction,
identity verification and privacy amplification in the configured order.

Three orderings are supported:

* ``BASELINE``        transmission -> sifting -> correction -> PA
* ``AUTH_LAST``       ... -> PA -> identity verification
* ``AUTH_BEFORE_PA``  ... -> correction -> identity verification -> PA

All randomness comes from a :class:`numpy.random.SeedSequence` rooted at
``SessionConfig.seed``; each role gets its own child stream so that, for
instance, installing a do-nothing adversary never shifts Alice's draws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np

from . import auth as auth_mod
from .adversary import AdversaryKind, AdversaryStrategy, ForgingAuthenticator, intercept_many
from .auth import AuthParams, AuthVerdict, KeyedAuthenticator, SplitRule
from .bits import hamming, pack, random_bits, unpack
from .channel import (MessageKind, PublicChannel, Transcript, decode_sample_reply,
                      decode_sample_request, encode_sample_reply, encode_sample_request)
from .errors import ConfigInvalid, EmptyKey, InsufficientKey, LengthMismatch, SafetyViolation
from .photonics import LOST, ChannelParams, detect_many, transmit_many
from .privacy import ToeplitzSeed, compress, output_length
from .reconciliation import ReconParams, reconcile

ALICE, BOB = "alice", "bob"


class Variant(str, Enum):
    BASELINE = "baseline"
    AUTH_LAST = "auth-last"
    AUTH_BEFORE_PA = "auth-before-pa"


@dataclass(frozen=True)
class SessionConfig:
    n_photons: int = 4096
    channel: ChannelParams = ChannelParams(flip_prob=0.02)
    adversary: AdversaryStrategy = AdversaryStrategy()
    variant: Variant = Variant.AUTH_BEFORE_PA
    safety_s: int = 32
    sample_fraction: float = 0.1
    auth: AuthParams = AuthParams()
    recon: ReconParams = ReconParams()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        problems = {}
        if self.n_photons < 64:
            problems["n_photons"] = f"must be >= 64, got {self.n_photons}"
        if not 0.0 < self.sample_fraction < 1.0:
            problems["sample_fraction"] = f"must lie in (0, 1), got {self.sample_fraction}"
        if self.safety_s < 1:
            problems["safety_s"] = f"must be >= 1, got {self.safety_s}"
        if not 0 <= self.seed < 2**64:
            problems["seed"] = "must be a 64-bit unsigned integer"
        if problems:
            raise ConfigInvalid(problems)


@dataclass
class KeyLedger:
    raw_bits: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    raw_bases: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    detections: Optional[np.ndarray] = None
    sifted: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    qber_est: float = float("nan")
    corrected: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    leak_t: int = 0
    k_a: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    k_m: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    final: np.ndarray = field(default_factory=lambda: np.zeros(0, np.uint8))
    ka_uses: int = 0


@dataclass
class SessionReport:
    variant: str
    adversary: str
    n_photons: int
    seed: int
    sifted_fraction: float
    qber_true: float
    qber_est: float
    leak_t: int
    r_final: int
    keys_match: bool
    auth_verdict: AuthVerdict
    eve_key_match: bool
    transcript_path: Optional[str] = None
    sifted_len: int = 0
    disclosed: int = 0
    corrected_len: int = 0
    rounds: int = 0
    pa_status: str = "ok"
    ka_reused: bool = False
    # (alice side, bob side) reports under impersonation, else None
    sub_reports: Optional[Tuple["SessionReport", "SessionReport"]] = None
    transcripts: Dict[str, Transcript] = field(default_factory=dict, repr=False, compare=False)
    ledgers: Dict[str, KeyLedger] = field(default_factory=dict, repr=False, compare=False)

    @property
    def aborted(self) -> bool:
        return self.auth_verdict is AuthVerdict.ABORT

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            if f.name in ("transcripts", "ledgers"):
                continue
            value = getattr(self, f.name)
            if f.name == "sub_reports":
                value = None if value is None else [r.to_dict() for r in value]
            elif isinstance(value, Enum):
                value = value.value
            out[f.name] = value
        return out


# -- randomness -------------------------------------------------------------

class Streams:
    """Per-role random generators, created on first use."""

    ROLES = ("alice", "bob", "channel", "eve", "public")

    def __init__(self, seed):
        self.root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)

    def __getattr__(self, role):
        # Only reached on first use; the generator is then cached as an attribute.
        if role not in Streams.ROLES:
            raise AttributeError(role)
        # Same child as root.spawn(5)[i], without spawning the unused ones.
        child = np.random.SeedSequence(self.root.entropy,
                                       spawn_key=self.root.spawn_key + (Streams.ROLES.index(role),))
        gen = np.random.Generator(np.random.PCG64(child))
        setattr(self, role, gen)
        return gen

    @classmethod
    def from_seed(cls, seed) -> "Streams":
        return cls(seed)


def leg_seeds(seed: int) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Independent roots for the two halves of an impersonation run."""
    ab, eb = np.random.SeedSequence(seed).spawn(2)
    return ab, eb


# -- protocol steps ---------------------------------------------------------

def quantum_phase(cfg: SessionConfig, streams: Streams, eve_state=None):
    """Alice prepares, Eve optionally intercepts, the channel acts, Bob measures.

    Returns ``(alice_bits, alice_bases, bob_bases, detections)`` where
    ``detections`` is int8 with ``LOST`` for missing photons.
    """
    n = cfg.n_photons
    alice_bits = random_bits(streams.alice, n)
    alice_bases = random_bits(streams.alice, n)
    bases, bits = alice_bases, alice_bits
    adv = cfg.adversary
    if adv.kind is AdversaryKind.INTERCEPT_RESEND:
        bases, bits = intercept_many(bases, bits, adv.intercept_fraction, streams.eve, eve_state)
    bases, bits, present = transmit_many(bases, bits, cfg.channel, streams.channel)
    bob_bases = random_bits(streams.bob, n)
    detections = detect_many(bases, bits, present, bob_bases, streams.bob)
    return alice_bits, alice_bases, bob_bases, detections


def sift(alice_bases, bob_bases, detections) -> np.ndarray:
    alice_bases = np.asarray(alice_bases)
    bob_bases = np.asarray(bob_bases)
    detections = np.asarray(detections)
    if not len(alice_bases) == len(bob_bases) == len(detections):
        raise LengthMismatch(f"lengths differ: {len(alice_bases)}, {len(bob_bases)}, {len(detections)}")
    return np.flatnonzero((detections != LOST) & (alice_bases == bob_bases))


def sample_size(length: int, sample_fraction: float) -> int:
    return math.ceil(sample_fraction * length)


def estimate_qber(alice_sifted, bob_sifted, sample_fraction: float, rng: np.random.Generator,
                  channel: Optional[PublicChannel] = None):
    """Publicly compare a random sample and drop it from both keys.

    Returns ``(qber_est, alice_rest, bob_rest, disclosed)``.
    """
    alice_sifted = np.asarray(alice_sifted, dtype=np.uint8)
    bob_sifted = np.asarray(bob_sifted, dtype=np.uint8)
    n = len(alice_sifted)
    if len(bob_sifted) != n:
        raise LengthMismatch(f"alice has {n} sifted bits, bob has {len(bob_sifted)}")
    if n == 0:
        raise EmptyKey("nothing survived sifting")
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError("sample_fraction must lie in (0, 1)")
    k = sample_size(n, sample_fraction)
    channel = channel if channel is not None else PublicChannel()
    idx = np.sort(rng.choice(n, size=k, replace=False))
    msg = channel.post(ALICE, BOB, MessageKind.QBER_SAMPLE, encode_sample_request(idx, alice_sifted[idx]))
    seen_idx, alice_sample = decode_sample_request(msg.payload)
    bob_sample = bob_sifted[seen_idx]
    reply = channel.post(BOB, ALICE, MessageKind.QBER_SAMPLE, encode_sample_reply(bob_sample))
    qber = hamming(alice_sample, decode_sample_reply(reply.payload)) / k
    keep = np.ones(n, dtype=bool)
    keep[seen_idx] = False
    return qber, alice_sifted[keep], bob_sifted[keep], k


def planning_rate(qber_est: float, disclosed: int) -> float:
    """Error rate handed to reconciliation for block sizing.

    A sample of ``k`` positions cannot resolve rates much below ``1/k``, so
    a sample with no mismatches is read as ``1/k`` rather than zero.
    """
    return max(qber_est, 1.0 / disclosed) if disclosed else qber_est


def _privacy_amplify(w_alice, w_bob, t, s, rng, channel):
    r = output_length(len(w_alice), t, s)
    seed = ToeplitzSeed.random(len(w_alice), r, rng)
    msg = channel.post(ALICE, BOB, MessageKind.PA_SEED, pack(seed.bits))
    bob_seed = unpack(msg.payload, len(seed))
    return compress(w_alice, seed, r), compress(w_bob, bob_seed, r)


def _split(k_alice, k_bob, params: AuthParams, rng, channel):
    if params.rule is SplitRule.HASH_DERIVED:
        if len(k_alice) < params.ka_len + 1:
            raise InsufficientKey(f"{len(k_alice)} bits cannot yield a {params.ka_len}-bit k_a")
        seed = ToeplitzSeed.random(len(k_alice), params.ka_len, rng)
        msg = channel.post(ALICE, BOB, MessageKind.KA_SEED, pack(seed.bits))
        bob_seed = ToeplitzSeed(unpack(msg.payload, len(seed)))
        return auth_mod.split_key(k_alice, params, seed), auth_mod.split_key(k_bob, params, bob_seed)
    if len(k_alice) < 2:
        raise InsufficientKey("key too short to split")
    return auth_mod.split_key(k_alice, params), auth_mod.split_key(k_bob, params)


def _authenticator(k_a, params, rng, forged: bool):
    if forged:
        return ForgingAuthenticator(params, rng)
    if len(k_a) < params.required_ka_len:
        raise InsufficientKey(f"k_a has {len(k_a)} bits, verification needs {params.required_ka_len}")
    return KeyedAuthenticator(k_a, params, rng)


def run_leg(cfg: SessionConfig, seed, forger: Optional[str] = None) -> SessionReport:
    """One protocol instance between an Alice-role and a Bob-role endpoint.

    ``forger`` names the role played by an impersonating Eve (``"alice"`` or
    ``"bob"``); that endpoint guesses authentication tags instead of
    computing them.  With ``forger=None`` both endpoints are honest.
    """
    streams = Streams.from_seed(seed)
    channel = PublicChannel()
    a, b = KeyLedger(), KeyLedger()
    # Under impersonation each leg is an honest link with Eve at one end.
    link_cfg = cfg if forger is None else replace(cfg, adversary=AdversaryStrategy())

    a.raw_bits, a.raw_bases, b.raw_bases, b.detections = quantum_phase(link_cfg, streams)
    detected = b.detections != LOST
    msg = channel.post(BOB, ALICE, MessageKind.BASES, pack(detected) + pack(b.raw_bases))
    nbytes = (cfg.n_photons + 7) // 8
    seen_detected = unpack(msg.payload[:nbytes], cfg.n_photons).astype(bool)
    seen_bases = unpack(msg.payload[nbytes:], cfg.n_photons)
    keep = sift(a.raw_bases, seen_bases, np.where(seen_detected, 0, LOST))
    keep_mask = np.zeros(cfg.n_photons, dtype=np.uint8)
    keep_mask[keep] = 1
    msg = channel.post(ALICE, BOB, MessageKind.SIFT_INDICES, pack(keep_mask))
    bob_keep = np.flatnonzero(unpack(msg.payload, cfg.n_photons))
    a.sifted = a.raw_bits[keep]
    b.raw_bits = b.detections.astype(np.uint8)
    b.sifted = b.raw_bits[bob_keep]
    sifted_len = len(a.sifted)
    qber_true = hamming(a.sifted, b.sifted) / sifted_len if sifted_len else 0.0

    qber_est, a_rest, b_rest, disclosed = estimate_qber(a.sifted, b.sifted, cfg.sample_fraction,
                                                        streams.public, channel)
    a.qber_est = b.qber_est = qber_est
    rec = reconcile(a_rest, b_rest, planning_rate(qber_est, disclosed), cfg.recon, channel, streams.public)
    a.corrected, b.corrected = rec.corrected_alice, rec.corrected_bob
    t = rec.parity_comparisons
    a.leak_t = b.leak_t = t

    verdict = AuthVerdict.NOT_RUN
    pa_status = "ok"
    final_a = final_b = np.zeros(0, np.uint8)

    def authenticate(k_alice, k_bob):
        (a.k_a, a.k_m), (b.k_a, b.k_m) = _split(k_alice, k_bob, cfg.auth, streams.public, channel)
        auth_a = _authenticator(a.k_a, cfg.auth, streams.eve if forger == ALICE else streams.alice,
                                forger == ALICE)
        auth_b = _authenticator(b.k_a, cfg.auth, streams.eve if forger == BOB else streams.bob,
                                forger == BOB)
        outcome = auth_mod.verify_identity(auth_a, auth_b, channel, cfg.auth)
        a.ka_uses += 1
        b.ka_uses += 1
        # Each endpoint acts on its own verdict; Eve's endpoint never refuses.
        return outcome.bob if forger == ALICE else outcome.alice

    def amplify(w_a, w_b):
        nonlocal pa_status
        try:
            return _privacy_amplify(w_a, w_b, t, cfg.safety_s, streams.public, channel)
        except SafetyViolation:
            pa_status = "no-secure-key"
            return np.zeros(0, np.uint8), np.zeros(0, np.uint8)

    if cfg.variant is Variant.BASELINE:
        final_a, final_b = amplify(a.corrected, b.corrected)
    elif cfg.variant is Variant.AUTH_BEFORE_PA:
        verdict = authenticate(a.corrected, b.corrected)
        if verdict is AuthVerdict.ACCEPT:
            final_a, final_b = amplify(a.k_m, b.k_m)
        else:
            pa_status = "skipped"
    else:
        pa_a, pa_b = amplify(a.corrected, b.corrected)
        if pa_status == "ok":
            verdict = authenticate(pa_a, pa_b)
            if verdict is AuthVerdict.ACCEPT:
                final_a, final_b = a.k_m, b.k_m
    a.final, b.final = final_a, final_b

    return SessionReport(
        variant=cfg.variant.value,
        adversary=cfg.adversary.label,
        n_photons=cfg.n_photons,
        seed=cfg.seed,
        sifted_fraction=sifted_len / cfg.n_photons,
        qber_true=qber_true,
        qber_est=qber_est,
        leak_t=t,
        r_final=len(final_a),
        keys_match=bool(np.array_equal(a.corrected, b.corrected) and np.array_equal(final_a, final_b)),
        auth_verdict=verdict,
        eve_key_match=False,
        sifted_len=sifted_len,
        disclosed=disclosed,
        corrected_len=len(a.corrected),
        rounds=rec.rounds_run,
        pa_status=pa_status,
        ka_reused=max(a.ka_uses, b.ka_uses) > 1,
        transcripts={"session": channel.transcript},
        ledgers={ALICE: a, BOB: b},
    )


def _holds(eve_key: np.ndarray, party_key: np.ndarray) -> bool:
    return len(party_key) > 0 and np.array_equal(eve_key, party_key)


def run_session(cfg: SessionConfig) -> SessionReport:
    """Run one session and report it from Alice's point of view.

    Under impersonation Alice's view is her half of the attack; the bob-side
    half is attached in ``sub_reports`` and ``eve_key_match`` is ground truth
    over both halves.
    """
    if cfg.adversary.kind is not AdversaryKind.IMPERSONATE:
        return run_leg(cfg, cfg.seed)

    from .adversary import impersonate

    eve, alice_side, bob_side = impersonate(cfg)
    alice_final = alice_side.ledgers[ALICE].final
    bob_final = bob_side.ledgers[BOB].final
    eve_match = _holds(eve.session_ab.final, alice_final) or _holds(eve.session_eb.final, bob_final)
    report = replace(alice_side, eve_key_match=eve_match, sub_reports=(alice_side, bob_side),
                     transcripts={"session": alice_side.transcripts["session"],
                                  "eve-bob": bob_side.transcripts["session"]},
                     ledgers={ALICE: alice_side.ledgers[ALICE], BOB: bob_side.ledgers[BOB],
                              "eve-as-bob": eve.session_ab, "eve-as-alice": eve.session_eb})
    return report
