import itertools
from dataclasses import replace

import numpy as np
import pytest

from qkdauth.adversary import (AdversaryKind, AdversaryStrategy, EveState, impersonate, intercept_many,
                               intercept_resend)
from qkdauth.auth import AuthParams, AuthVerdict
from qkdauth.photonics import Basis, ChannelParams, PhotonState
from qkdauth.pipeline import SessionConfig, Streams, Variant, leg_seeds, quantum_phase, run_leg, run_session, sift


def sifted_qber(cfg):
    a_bits, a_bases, b_bases, det = quantum_phase(cfg, Streams(cfg.seed))
    keep = sift(a_bases, b_bases, det)
    return np.mean(a_bits[keep] != det[keep])


def enumeration_qber(fraction):
    """Average over the 8 equiprobable (alice basis, eve basis, eve coin) cases, Bob matching Alice."""
    errors = 0.0
    for alice_basis, eve_basis, _coin in itertools.product((0, 1), repeat=3):
        if eve_basis == alice_basis:
            p_err = 0.0  # Eve reads and resends Alice's bit unchanged
        else:
            # Eve resends her coin in the conjugate basis; Bob's result is a fair coin.
            p_err = 0.5
        errors += p_err / 8
    return fraction * errors


def test_enumeration_oracle_values():
    assert enumeration_qber(1.0) == pytest.approx(0.25)
    assert enumeration_qber(0.4) == pytest.approx(0.10)


def test_matched_basis_is_transparent(rng):
    for basis, bit in itertools.product(Basis, (0, 1)):
        photon = PhotonState(basis, bit)
        for _ in range(40):
            out = intercept_resend(photon, rng)
            if out.basis is basis:
                assert out == photon


def test_intercept_records(rng):
    state = EveState()
    bases = rng.integers(0, 2, 1000, dtype=np.uint8)
    bits = rng.integers(0, 2, 1000, dtype=np.uint8)
    out_bases, out_bits = intercept_many(bases, bits, 0.5, rng, state)
    hit = out_bases != bases
    assert len(state.observed_bits[0]) > hit.sum()
    same = out_bases == bases
    assert np.array_equal(out_bits[same], bits[same])


@pytest.mark.parametrize("fraction", [1.0, 0.4])
def test_intercept_qber(fraction):
    cfg = SessionConfig(n_photons=100_000, channel=ChannelParams(0.0),
                        adversary=AdversaryStrategy(AdversaryKind.INTERCEPT_RESEND, fraction), seed=3)
    assert abs(sifted_qber(cfg) - enumeration_qber(fraction)) <= 0.01


def test_zero_fraction_matches_none():
    base = SessionConfig(n_photons=5000, channel=ChannelParams(0.05, 0.1), seed=9)
    quiet = replace(base, adversary=AdversaryStrategy(AdversaryKind.INTERCEPT_RESEND, 0.0))
    for x, y in zip(quantum_phase(base, Streams(9)), quantum_phase(quiet, Streams(9))):
        assert np.array_equal(x, y)


def test_parse_strategy():
    assert AdversaryStrategy.parse("none").kind is AdversaryKind.NONE
    s = AdversaryStrategy.parse("intercept:0.25")
    assert s.kind is AdversaryKind.INTERCEPT_RESEND and s.intercept_fraction == 0.25
    assert AdversaryStrategy.parse("impersonate").label == "impersonate"
    with pytest.raises(ValueError):
        AdversaryStrategy.parse("impersonate:1")
    with pytest.raises(ValueError):
        AdversaryStrategy(AdversaryKind.INTERCEPT_RESEND, 1.5)


def test_impersonate_requires_kind():
    with pytest.raises(ValueError):
        impersonate(SessionConfig())


def mitm(variant, **kw):
    return SessionConfig(n_photons=kw.pop("n_photons", 1024), channel=ChannelParams(kw.pop("flip", 0.02)),
                         adversary=AdversaryStrategy(AdversaryKind.IMPERSONATE), variant=variant, **kw)


@pytest.mark.parametrize("seed", range(5))
def test_baseline_impersonation_replays(seed):
    cfg = replace(mitm(Variant.BASELINE), seed=seed)
    eve, alice_side, bob_side = impersonate(cfg)
    assert alice_side.keys_match and bob_side.keys_match
    # Oracle: each half is an honest session between the same endpoints.
    honest = replace(cfg, adversary=AdversaryStrategy())
    seed_ab, seed_eb = leg_seeds(seed)
    replay_ab, replay_eb = run_leg(honest, seed_ab), run_leg(honest, seed_eb)
    assert np.array_equal(replay_ab.ledgers["bob"].final, eve.session_ab.final)
    assert np.array_equal(replay_eb.ledgers["alice"].final, eve.session_eb.final)
    assert np.array_equal(replay_ab.ledgers["alice"].final, alice_side.ledgers["alice"].final)
    report = run_session(cfg)
    assert report.eve_key_match and report.r_final > 0


def test_auth_before_pa_long_tags_always_abort():
    cfg = mitm(Variant.AUTH_BEFORE_PA, n_photons=512, flip=0.0, safety_s=16,
               auth=AuthParams(ka_len=64, tag_len=32))
    for seed in range(1000):
        report = run_session(replace(cfg, seed=seed))
        assert report.auth_verdict is AuthVerdict.ABORT
        assert report.r_final == 0 and not report.eve_key_match


def test_auth_last_forging_bound():
    cfg = mitm(Variant.AUTH_LAST, flip=0.0, safety_s=16)
    trials = 3000
    accepted = sum(run_session(replace(cfg, seed=s)).auth_verdict is AuthVerdict.ACCEPT for s in range(trials))
    # Expected 2^-16 * 3000 < 0.05, so any acceptance would be a strong signal.
    assert accepted / trials <= 2 * 2.0 ** -16


def test_ka_never_reused():
    cfg = mitm(Variant.AUTH_BEFORE_PA, n_photons=256, flip=0.0, safety_s=16)
    for seed in range(20):
        report = run_session(replace(cfg, seed=seed))
        assert not report.ka_reused
        assert not any(s.ka_reused for s in report.sub_reports)
