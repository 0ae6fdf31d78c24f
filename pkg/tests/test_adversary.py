from fractions import Fraction

import numpy as np
import pytest

import oracles
from qkdauth.adversary import (
    AttackKind,
    AttackStrategy,
    GuessPolicy,
    NoPrediction,
    Timing,
    eve_intercept_resend,
    new_eve_state,
    predict_attack_qber,
)
from qkdauth.analysis import aggregate, run_sessions
from qkdauth.channel import Basis, QuantumSymbol
from qkdauth.protocol import ConfigError, Scheme, Verdict
from qkdauth.session import baseline_config, run_session

DELTAS = [0.0, 0.1, 0.25, 0.5]

# frozen from tests/oracles.py (exact enumeration, large-key limit)
ORACLE_P1A = {0.0: Fraction(1, 2), 0.1: Fraction(9, 20), 0.25: Fraction(3, 8), 0.5: Fraction(1, 4)}
ORACLE_P1B = {0.0: Fraction(1, 2), 0.1: Fraction(2, 5), 0.25: Fraction(1, 4), 0.5: Fraction(0)}
ORACLE_P2 = {0.0: Fraction(1, 4), 0.1: Fraction(9, 40), 0.25: Fraction(3, 16), 0.5: Fraction(3, 16)}
ORACLE_P2_BAYES = {0.0: Fraction(1, 4), 0.1: Fraction(1, 5), 0.25: Fraction(1, 8), 0.5: Fraction(1, 8)}


@pytest.mark.parametrize("delta", DELTAS)
def test_frozen_values_match_oracle(delta):
    assert oracles.mitm_p1a_qber(delta) == ORACLE_P1A[delta]
    assert oracles.mitm_p1b_qber(delta) == ORACLE_P1B[delta]
    assert oracles.mitm_p2_qber(delta)[0] == ORACLE_P2[delta]
    assert oracles.mitm_p2_qber(delta, bayesian=True)[0] == ORACLE_P2_BAYES[delta]
    assert oracles.intercept_resend_qber() == Fraction(1, 4)


@pytest.mark.parametrize("delta", DELTAS)
def test_closed_forms_agree_with_oracle(delta):
    assert predict_attack_qber("mitm_p1a", delta).expected_qber == pytest.approx(float(ORACLE_P1A[delta]))
    assert predict_attack_qber("mitm_p1b", delta).expected_qber == pytest.approx(float(ORACLE_P1B[delta]))
    assert predict_attack_qber("mitm_p2a", delta).expected_qber == pytest.approx(float(ORACLE_P2[delta]))


def test_prediction_examples():
    assert predict_attack_qber("mitm_p1a", 0.25).expected_qber == 0.375
    assert predict_attack_qber("mitm_p1b", 0.5).expected_qber == 0
    assert predict_attack_qber("mitm_p2a", 0.0).expected_qber == 0.25
    p = predict_attack_qber("mitm_p2b", 0.25)
    assert (p.alpha, p.gamma, p.expected_qber) == (0.25, 0.375, 0.1875)


@pytest.mark.parametrize(
    "kind,policy",
    [("mitm_p2a", "bayesian"), ("mitm_p2b", "bayesian"), ("none", "paper_naive"), ("suppression_p1a", "paper_naive")],
)
def test_unsupported_prediction(kind, policy):
    with pytest.raises(NoPrediction):
        predict_attack_qber(kind, 0.25, policy)


def test_intercept_matching_basis_reads_alice_bit():
    strategy = AttackStrategy(AttackKind.INTERCEPT_RESEND_PLAIN)
    rng = np.random.default_rng(0)
    state = new_eve_state(200, strategy, rng)
    for t in range(200):
        sym = QuantumSymbol(Basis(t % 2), (t // 2) % 2)
        out = eve_intercept_resend(sym, t, state, rng, strategy)
        if state.mu[t] == sym.basis:
            assert state.chi[t] == sym.bit
        assert (out.basis, out.bit) == (state.nu[t], state.xi[t]) == (state.mu[t], state.chi[t])


def test_suppressed_slot_sends_nothing():
    strategy = AttackStrategy(AttackKind.SUPPRESSION_P1A, timing=Timing.SEQUENTIAL)
    rng = np.random.default_rng(1)
    state = new_eve_state(4, strategy, rng)
    state.ks_known[:] = [True, False, True, False]
    sent = [eve_intercept_resend(QuantumSymbol(Basis.GAMMA0, 1), t, state, rng, strategy) for t in range(4)]
    assert [s is not None for s in sent] == [True, False, True, False]


def test_p2a_tau_limits_forwarding():
    strategy = AttackStrategy(AttackKind.MITM_P2A, tau=(0, 2))
    rng = np.random.default_rng(2)
    state = new_eve_state(4, strategy, rng)
    sent = [eve_intercept_resend(QuantumSymbol(Basis.GAMMA0, 1), t, state, rng, strategy) for t in range(4)]
    assert [s is not None for s in sent] == [True, False, True, False]


def test_plain_intercept_resend_on_bb84():
    out = run_session(baseline_config(Scheme.BB84, 200_000, seed=3), AttackStrategy("intercept_resend_plain"))
    assert out.sifted_count >= 99_000
    assert abs(out.qber - 0.25) <= 0.01


def _mitm(scheme, kind, delta, seed, pulses=100_000, **strategy):
    return run_session(baseline_config(scheme, pulses, seed=seed, delta=delta), AttackStrategy(kind, **strategy))


def test_eve_p1a_keystream_after_ec():
    full = _mitm(Scheme.P1A, "mitm_p1a", 0.5, 4).attack
    assert full.sifted_ks_error <= 0.005
    quarter = _mitm(Scheme.P1A, "mitm_p1a", 0.25, 5).attack
    assert abs(quarter.sifted_ks_error - 0.25) <= 0.02
    assert abs(quarter.full_ks_error - 0.375) <= 0.02


def test_eve_p2a_keystream_over_tau():
    report = _mitm(Scheme.P2A, "mitm_p2a", 0.25, 6).attack
    assert abs(report.sifted_ks_error - float(oracles.mitm_p2_qber(0.25)[1])) <= 0.02


def test_known_indices_are_exact():
    for scheme, kind in [(Scheme.P1A, "mitm_p1a"), (Scheme.P1B, "mitm_p1b"), (Scheme.P2A, "mitm_p2a"), (Scheme.P2B, "mitm_p2b")]:
        for delta in (0.1, 0.5):
            report = _mitm(scheme, kind, delta, 7, pulses=20_000).attack
            assert report.known_fraction > 0
            assert report.known_ks_error == 0


@pytest.mark.parametrize(
    "scheme,kind,oracle",
    [
        (Scheme.P1A, "mitm_p1a", ORACLE_P1A),
        (Scheme.P1B, "mitm_p1b", ORACLE_P1B),
        (Scheme.P2A, "mitm_p2a", ORACLE_P2),
        (Scheme.P2B, "mitm_p2b", ORACLE_P2),
    ],
)
@pytest.mark.parametrize("delta", DELTAS)
def test_simulated_attack_matches_oracle(scheme, kind, oracle, delta):
    out = _mitm(scheme, kind, delta, seed=int(delta * 100) + 20)
    assert out.sifted_count >= 50_000 * 0.95
    assert abs(out.qber - float(oracle[delta])) <= 0.01


@pytest.mark.parametrize("timing", list(Timing))
def test_timing_does_not_change_plain_mitm(timing):
    out = _mitm(Scheme.P1A, "mitm_p1a", 0.25, 30, timing=timing)
    assert abs(out.qber - 0.375) <= 0.01


def test_transcript_order_depends_on_timing():
    inter = _mitm(Scheme.P1A, "mitm_p1a", 0.25, 31, pulses=5000).transcript
    seq = _mitm(Scheme.P1A, "mitm_p1a", 0.25, 31, pulses=5000, timing="sequential").transcript
    assert inter.kinds() == seq.kinds()
    assert [r.sender for r in inter.records][:3] == ["alice", "eve", "alice"]


def test_sifting_overlap_half():
    report = _mitm(Scheme.P1A, "mitm_p1a", 0.25, 32).attack
    assert abs(report.overlap_of_ae - 0.5) <= 0.02
    assert abs(report.overlap_of_eb - 0.5) <= 0.02


@pytest.mark.parametrize("scheme,kind", [(Scheme.P1A, "suppression_p1a"), (Scheme.P2A, "suppression_p2a")])
def test_suppression_defeats_sequential_sessions(scheme, kind):
    cfg = baseline_config(scheme, 100_000, seed=33, delta=0.5, p_noise=0.02)
    out = run_session(cfg, AttackStrategy(kind, timing="sequential"))
    assert out.qber <= 0.02 + 0.01
    assert out.verdict is Verdict.ACCEPT
    assert abs(out.detection_fraction - out.attack.known_fraction) <= 0.01


def test_suppression_requires_sequential_timing():
    with pytest.raises(ConfigError) as info:
        AttackStrategy("suppression_p2a", timing="interleaved")
    assert info.value.field == "timing"


def test_attack_must_match_variant():
    with pytest.raises(ConfigError):
        run_session(baseline_config(Scheme.P1B, 1000, seed=0), AttackStrategy("mitm_p1a"))
    with pytest.raises(ConfigError):
        run_session(baseline_config(Scheme.P2B, 1000, seed=0, direction="bob_authenticated"), AttackStrategy("mitm_p2b"))


def test_p2b_mitm_detected():
    out = _mitm(Scheme.P2B, "mitm_p2b", 0.25, 34)
    assert 0.17 <= out.qber <= 0.26
    assert out.verdict is Verdict.REJECT


def test_bayesian_never_worse_than_naive():
    for scheme, kind in [(Scheme.P2A, "mitm_p2a"), (Scheme.P1A, "mitm_p1a")]:
        cfg = baseline_config(scheme, 20_000, seed=35, delta=0.25)
        naive = aggregate(run_sessions(cfg, AttackStrategy(kind), 20, 36)).attack_means["sifted_ks_error"]
        bayes = aggregate(run_sessions(cfg, AttackStrategy(kind, guess_policy="bayesian"), 20, 36)).attack_means["sifted_ks_error"]
        assert bayes <= naive


def test_bayesian_p2a_matches_oracle():
    out = _mitm(Scheme.P2A, "mitm_p2a", 0.25, 37, guess_policy=GuessPolicy.BAYESIAN)
    assert abs(out.qber - float(ORACLE_P2_BAYES[0.25])) <= 0.01


def test_partial_tau_fraction():
    out = _mitm(Scheme.P2A, "mitm_p2a", 0.25, 38, tau_fraction=0.5)
    assert abs(out.detection_fraction - 0.5) <= 0.01
    assert abs(out.qber - 0.1875) <= 0.01


def test_bad_tau_rejected():
    with pytest.raises(ConfigError):
        _mitm(Scheme.P2A, "mitm_p2a", 0.25, 39, pulses=100, tau=(5, 500))
