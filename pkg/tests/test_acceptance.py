"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts, so a failure is both reported and fatal.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record_criterion
from qkdauth.adversary import AdversaryKind, AdversaryStrategy
from qkdauth.auth import AuthParams, AuthVerdict, interleave, split_key
from qkdauth.bits import to_str
from qkdauth.channel import MessageKind
from qkdauth.errors import SafetyViolation
from qkdauth.harness import BatchSpec, cmd_montecarlo
from qkdauth.photonics import ChannelParams
from qkdauth.pipeline import SessionConfig, Streams, Variant, quantum_phase, run_session, sift
from qkdauth.privacy import ToeplitzSeed, compress, output_length
from qkdauth.reconciliation import ReconParams, reconcile

NOISELESS = ChannelParams(flip_prob=0.0)


def dense_product(w, seed_bits, r):
    """Independent oracle: explicit r x n Toeplitz matrix times w over GF(2)."""
    n = len(w)
    matrix = [[int(seed_bits[i + j]) for j in range(n)] for i in range(r)]
    return [sum(row[j] * int(w[j]) for j in range(n)) % 2 for row in matrix]


def intercept_oracle(fraction):
    """Enumerate the 8 equiprobable (alice basis, eve basis, eve coin) cases with Bob in Alice's basis."""
    cases = [(a, e, c) for a in (0, 1) for e in (0, 1) for c in (0, 1)]
    p_err = sum(0.0 if a == e else 0.5 for a, e, _ in cases) / len(cases)
    return fraction * p_err


def sifted_qber(cfg):
    a_bits, a_bases, b_bases, det = quantum_phase(cfg, Streams(cfg.seed))
    keep = sift(a_bases, b_bases, det)
    return float(np.mean(a_bits[keep] != det[keep]))


def test_criterion_01_sifting_rate():
    cfg = SessionConfig(n_photons=100_000, channel=NOISELESS, variant=Variant.BASELINE, seed=1)
    start = time.perf_counter()
    report = run_session(cfg)
    elapsed = time.perf_counter() - start
    ok = abs(report.sifted_fraction - 0.5) <= 0.01 and elapsed < 5.0
    record_criterion(1, "sifting rate", ok, f"sifted_fraction={report.sifted_fraction:.4f}, {elapsed:.2f}s")
    assert ok


def test_criterion_02_noiseless_honest_run():
    cfg = SessionConfig(channel=NOISELESS, variant=Variant.BASELINE, seed=2)
    report = run_session(cfg)
    transcript = report.transcripts["session"]
    # Oracle: a zero-error sample of k positions plans for rate 1/k; blocks are
    # ceil(0.73 / rate) clamped to [2, len/2]; each clean round compares one
    # parity per block.
    length = report.corrected_len
    rate = max(1.0 / report.disclosed, 1.0 / length)
    block = min(max(math.ceil(0.73 / rate), 2), length // 2)
    per_round = math.ceil(length / block)
    expected = cfg.recon.agree_rounds_needed * per_round
    first = transcript.of_kind(MessageKind.PARITY)[0]
    announced = int.from_bytes(first.payload[4:8], "big") - int.from_bytes(first.payload[:4], "big")
    rounds = len(transcript.of_kind(MessageKind.PERMUTATION_SEED))
    ok = (report.qber_true == 0 and report.keys_match and report.leak_t == expected
          and rounds == cfg.recon.agree_rounds_needed and announced == block)
    record_criterion(2, "noiseless honest run", ok, f"leak_t={report.leak_t}, expected={expected}")
    assert ok


def test_criterion_03_intercept_resend_signature():
    results = {}
    for fraction in (1.0, 0.25, 0.5):
        cfg = SessionConfig(n_photons=100_000, channel=NOISELESS,
                            adversary=AdversaryStrategy(AdversaryKind.INTERCEPT_RESEND, fraction), seed=3)
        results[fraction] = sifted_qber(cfg)
    assert intercept_oracle(1.0) == 0.25
    ok = all(abs(q - intercept_oracle(f)) <= 0.01 for f, q in results.items())
    detail = ", ".join(f"f={f:g}: {q:.4f}" for f, q in results.items())
    record_criterion(3, "intercept-resend signature", ok, detail)
    assert ok


def test_criterion_04_reconciliation_convergence():
    n, qber = 4096, 0.05
    equal, monotone = 0, True
    for trial in range(200):
        rng = np.random.default_rng([4, trial])
        alice = rng.integers(0, 2, n, dtype=np.uint8)
        errors = np.zeros(n, dtype=np.uint8)
        errors[rng.choice(n, int(qber * n), replace=False)] = 1
        outcome = reconcile(alice, alice ^ errors, qber, ReconParams(), rng=rng)
        equal += np.array_equal(outcome.corrected_alice, outcome.corrected_bob)
        trace = [int(errors.sum())] + outcome.hamming_trace
        monotone &= all(b <= a for a, b in zip(trace, trace[1:]))
    ok = equal >= 198 and monotone
    record_criterion(4, "reconciliation convergence", ok, f"{equal}/200 equal, monotone={monotone}")
    assert ok


def test_criterion_05_pa_length_rule():
    rng = np.random.default_rng(5)
    exact = output_length(1000, 200, 100) == 700
    with pytest.raises(SafetyViolation):
        output_length(1000, 200, 800)
    with pytest.raises(SafetyViolation):
        output_length(100, 50, 60)
    matches = 0
    for _ in range(100):
        w = rng.integers(0, 2, 32, dtype=np.uint8)
        seed = ToeplitzSeed.random(32, 8, rng)
        matches += compress(w, seed, 8).tolist() == dense_product(w, seed.bits, 8)
    ok = exact and matches == 100
    record_criterion(5, "privacy amplification length rule", ok, f"oracle matches {matches}/100")
    assert ok


def test_criterion_06_universality():
    rng = np.random.default_rng(6)
    x = rng.integers(0, 2, 32, dtype=np.uint8)
    y = x.copy()
    y[[3, 17]] ^= 1
    trials = 100_000
    seeds = rng.integers(0, 2, (trials, 32 + 8 - 1), dtype=np.uint8)
    # All hashes at once: row i of seed s is s[i:i+32].
    windows = np.lib.stride_tricks.sliding_window_view(seeds, 32, axis=1)
    diff = (x ^ y).astype(np.uint8)
    collisions = int(np.all((windows @ diff) % 2 == 0, axis=1).sum())
    # Spot-check the batched product against the library on a few seeds.
    for s, rows in zip(seeds[:20], windows[:20]):
        assert np.array_equal(compress(x, s, 8) ^ compress(y, s, 8), (rows @ diff) % 2)
    bound = 2.0 ** -8 + 4 * math.sqrt(2.0 ** -8 / trials)
    rate = collisions / trials
    ok = rate <= bound
    record_criterion(6, "universality", ok, f"collision rate {rate:.5f} <= {bound:.5f}")
    assert ok


def test_criterion_07_split_correctness():
    rng = np.random.default_rng(7)
    params = AuthParams()
    rebuilt = 0
    for i in range(1000):
        length = int(rng.integers(2, 300)) | 1 if i % 2 else int(rng.integers(1, 150)) * 2
        k = rng.integers(0, 2, length, dtype=np.uint8)
        k_a, k_m = split_key(k, params)
        rebuilt += np.array_equal(interleave(k_a, k_m), k)
    k_a, k_m = split_key("10110100", params)
    example = (to_str(k_a), to_str(k_m)) == ("1100", "0110")
    ok = rebuilt == 1000 and example
    record_criterion(7, "split correctness", ok, f"{rebuilt}/1000 rebuilt, example={example}")
    assert ok


def test_criterion_08_vulnerability_demonstration():
    cfg = SessionConfig(adversary=AdversaryStrategy(AdversaryKind.IMPERSONATE), variant=Variant.BASELINE)
    compromised = unnoticed = 0
    for seed in range(100):
        report = run_session(replace(cfg, seed=seed))
        alice_side, bob_side = report.sub_reports
        compromised += report.eve_key_match
        unnoticed += alice_side.keys_match and bob_side.keys_match
    ok = compromised == 100 and unnoticed == 100
    record_criterion(8, "vulnerability demonstration", ok,
                     f"eve_key_match {compromised}/100, honest keys_match {unnoticed}/100")
    assert ok


def test_criterion_09_improvement_demonstration():
    trials = 10_000
    base = SessionConfig(n_photons=256, channel=NOISELESS, safety_s=16, variant=Variant.AUTH_BEFORE_PA,
                         adversary=AdversaryStrategy(AdversaryKind.IMPERSONATE))
    start = time.perf_counter()
    rates = {}
    for tag_len in (16, 8):
        cfg = replace(base, auth=AuthParams(tag_len=tag_len))
        accepted = sum(run_session(replace(cfg, seed=s)).auth_verdict is AuthVerdict.ACCEPT
                       for s in range(trials))
        rates[tag_len] = accepted / trials
    elapsed = time.perf_counter() - start
    p8 = 2.0 ** -8
    ok16 = rates[16] <= 2 * 2.0 ** -16
    ok8 = abs(rates[8] - p8) <= 3 * math.sqrt(p8 / trials)
    ok = ok16 and ok8 and elapsed < 60.0
    record_criterion(9, "improvement demonstration", ok,
                     f"accept tag16={rates[16]:.5f}, tag8={rates[8]:.5f}, {elapsed:.1f}s")
    assert ok


def test_criterion_10_determinism(tmp_path):
    spec = BatchSpec(SessionConfig(n_photons=1024, channel=ChannelParams(0.03)), 25, seed_base=10)
    cmd_montecarlo(spec, tmp_path, "first")
    cmd_montecarlo(spec, tmp_path, "second")
    first = (tmp_path / "first" / "trials.csv").read_bytes()
    second = (tmp_path / "second" / "trials.csv").read_bytes()
    ok = first == second and len(first) > 0
    record_criterion(10, "determinism", ok, f"{len(first)} bytes, identical={first == second}")
    assert ok
