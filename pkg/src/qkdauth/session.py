"""One complete QKD session, honest or under attack.

Stages: photon phase, sifting, (P1B post-sift mask), forward EC, QBER
verdict, privacy amplification (recorded but a no-op) and key refresh.
Every random draw comes from a stream derived from ``master_seed`` and a
fixed label, so a config reproduces its outcome and transcript exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adversary import (
    AttackReport,
    AttackStrategy,
    EveState,
    Timing,
    build_report,
    eve_measure_train,
    eve_resend_train,
    eve_run_alice_session,
    eve_run_bob_session,
    new_eve_state,
)
from .channel import ChannelParams, PulseTrain, measure_train, transmit_train
from .keystream import InsufficientKeyMaterial, Keystream, SharedSecret, refresh_secret
from .protocol import (
    AliceLog,
    BobLog,
    EcResult,
    MessageKind,
    Scheme,
    SessionConfig,
    Transcript,
    Variant,
    Verdict,
    apply_post_sift_keystream,
    error_correct,
    estimate_qber,
    measurement_bases_train,
    prepare_train,
    record_train,
    sift,
    verdict,
)
from .seeding import derive_rng


@dataclass
class SessionOutcome:
    variant: Variant
    verdict: Verdict
    qber: float | None
    sifted_count: int
    detected_count: int
    num_pulses: int
    final_key: np.ndarray
    transcript: Transcript
    delta: float
    theta_detect: float
    seed: int
    residual_error_count: int = 0
    refreshed_secret: SharedSecret | None = None
    consumed_bits: int = 0
    attack: AttackReport | None = None

    @property
    def detection_fraction(self) -> float:
        return self.detected_count / self.num_pulses

    @property
    def retention_fraction(self) -> float:
        return self.sifted_count / self.detected_count if self.detected_count else 0.0

    def to_dict(self) -> dict:
        out = {
            "variant": self.variant.label,
            "verdict": self.verdict.value,
            "qber": self.qber,
            "sifted_count": self.sifted_count,
            "detected_count": self.detected_count,
            "num_pulses": self.num_pulses,
            "delta": self.delta,
            "theta_detect": self.theta_detect,
            "seed": self.seed,
            "residual_error_count": self.residual_error_count,
            "final_key_bits": int(self.final_key.size),
            "refreshed_secret": self.refreshed_secret.to_hex() if self.refreshed_secret else None,
        }
        if self.attack is not None:
            out["attack"] = self.attack.to_dict()
        return out


class _Streams:
    def __init__(self, seed: int) -> None:
        self.seed = seed

    def __call__(self, label: str) -> np.random.Generator:
        return derive_rng(self.seed, label)


def _photon_choices(config: SessionConfig, rng: _Streams) -> tuple[AliceLog, np.ndarray]:
    n = config.num_pulses
    x = rng("alice/bits").integers(0, 2, size=n, dtype=np.uint8)
    y = rng("alice/bases").integers(0, 2, size=n, dtype=np.uint8)
    z = rng("bob/bases").integers(0, 2, size=n, dtype=np.uint8)
    return AliceLog(x, y), z


def _bob_receives(
    config: SessionConfig,
    train: PulseTrain,
    sent: np.ndarray,
    z: np.ndarray,
    ks: Keystream,
    rng: _Streams,
) -> BobLog:
    scheme = config.variant.scheme
    delivered = transmit_train(train, config.channel, rng("channel/bob/loss")) & sent
    bases = measurement_bases_train(scheme, z, ks)
    measured = measure_train(train, bases, config.channel.p_noise, rng("channel/bob/noise"))
    return BobLog(z, delivered, record_train(scheme, measured, delivered, ks))


def _distill(
    config: SessionConfig,
    reference: np.ndarray,
    noisy: np.ndarray,
    ref_party: str,
    checker: str,
    ec_rng: np.random.Generator,
    transcript: Transcript,
) -> tuple[float | None, Verdict, EcResult | None]:
    """Measure QBER, run forward EC and decide; EC reference is ``ref_party``."""
    length = reference.size
    if length < config.min_sifted:
        qber = estimate_qber(reference, noisy) if length else None
        return qber, Verdict.INCONCLUSIVE, None
    # ground-truth mismatch fraction before EC
    qber = estimate_qber(reference, noisy)
    ec = error_correct(reference, noisy, config.delta, ec_rng)
    bitmap = np.zeros(length, dtype=np.uint8)
    bitmap[ec.revealed_error_positions] = 1
    transcript.post(ref_party, MessageKind.EC_CORRECTION, bitmap, (0, length))
    decision = verdict(qber, config.theta_detect)
    transcript.post(checker, MessageKind.VERDICT, np.array([decision is Verdict.ACCEPT], dtype=np.uint8), (0, 1))
    if decision is Verdict.ACCEPT:
        transcript.post(ref_party, MessageKind.PRIVACY_AMPLIFICATION, np.zeros(0, dtype=np.uint8), (0, length))
    return qber, decision, ec


def _outcome(
    config: SessionConfig,
    transcript: Transcript,
    detected: int,
    sifted: int,
    qber: float | None,
    decision: Verdict,
    ec: EcResult | None,
) -> SessionOutcome:
    out = SessionOutcome(
        variant=config.variant,
        verdict=decision,
        qber=qber,
        sifted_count=sifted,
        detected_count=detected,
        num_pulses=config.num_pulses,
        final_key=np.zeros(0, dtype=np.uint8),
        transcript=transcript,
        delta=config.delta,
        theta_detect=config.theta_detect,
        seed=config.master_seed,
        residual_error_count=ec.residual_error_count if ec is not None else 0,
    )
    if decision is Verdict.ACCEPT and ec is not None:
        # privacy amplification is a pass-through
        distilled = ec.corrected_key
        try:
            out.refreshed_secret, out.consumed_bits = refresh_secret(distilled, config.secret.n)
        except (InsufficientKeyMaterial, ValueError):
            out.refreshed_secret, out.consumed_bits = None, 0
        out.final_key = distilled[out.consumed_bits :].copy()
    return out


def run_session(config: SessionConfig, adversary: AttackStrategy | None = None) -> SessionOutcome:
    """Run one session; ``adversary=None`` means nobody is on the line."""
    adversary = adversary or AttackStrategy()
    adversary.check_variant(config.variant)
    if adversary.kind.target is not None:
        return _run_mitm(config, adversary)

    rng = _Streams(config.master_seed)
    variant = config.variant
    scheme = variant.scheme
    ks = Keystream(config.secret, config.generator_id)
    transcript = Transcript()
    alice, z = _photon_choices(config, rng)
    train = prepare_train(scheme, alice.x, alice.y, ks)
    sent = np.ones(config.num_pulses, dtype=bool)
    report = None
    if adversary.active:
        eve = new_eve_state(config.num_pulses, adversary, rng("eve/setup"))
        eve_measure_train(train, eve, rng("eve/measure"))
        train, sent = eve_resend_train(eve, adversary)
        report = build_report(adversary, eve, ks, sent, None)
    bob = _bob_receives(config, train, sent, z, ks, rng)

    retained = sift(variant, alice, bob, ks, transcript).retained
    alice_key = alice.x[retained]
    bob_key = bob.recorded[retained].astype(np.uint8)
    if scheme is Scheme.P1B and retained.size:
        alice_key = apply_post_sift_keystream(alice_key, ks)
        bob_key = apply_post_sift_keystream(bob_key, ks)
    if variant.reversed:
        reference, noisy, ref_party, checker = bob_key, alice_key, "bob", "alice"
    else:
        reference, noisy, ref_party, checker = alice_key, bob_key, "alice", "bob"

    qber, decision, ec = _distill(config, reference, noisy, ref_party, checker, rng("ec/alice-bob"), transcript)
    out = _outcome(config, transcript, int(bob.detected.sum()), int(retained.size), qber, decision, ec)
    out.attack = report
    return out


def _run_mitm(config: SessionConfig, strategy: AttackStrategy) -> SessionOutcome:
    rng = _Streams(config.master_seed)
    variant = config.variant
    scheme = variant.scheme
    ks = Keystream(config.secret, config.generator_id)
    transcript = Transcript()
    alice, z = _photon_choices(config, rng)
    alice_train = prepare_train(scheme, alice.x, alice.y, ks)

    eve: EveState = new_eve_state(config.num_pulses, strategy, rng("eve/setup"))
    eve_measure_train(alice_train, eve, rng("eve/measure"))

    def alice_eve() -> None:
        eve_run_alice_session(
            variant, eve, config.delta, strategy, alice, ks, rng("ec/alice-eve"), transcript
        )

    if strategy.timing is Timing.SEQUENTIAL:
        # the whole Alice-Eve session, EC included, completes before Bob sees a photon
        alice_eve()
        eve_train, sent = eve_resend_train(eve, strategy)
        bob = _bob_receives(config, eve_train, sent, z, ks, rng)
    else:
        # photons must be forwarded inside their slot, before any classical exchange
        eve_train, sent = eve_resend_train(eve, strategy)
        bob = _bob_receives(config, eve_train, sent, z, ks, rng)
        alice_eve()

    eb = eve_run_bob_session(variant, eve, bob, ks, transcript)
    qber, decision, ec = _distill(config, eb.eve_key, eb.bob_key, "eve", "bob", rng("ec/eve-bob"), transcript)
    out = _outcome(config, transcript, int(bob.detected.sum()), int(eb.retained.size), qber, decision, ec)
    out.attack = build_report(strategy, eve, ks, sent, eb.retained)
    return out


def baseline_config(
    scheme: Scheme | str = Scheme.P1A,
    num_pulses: int = 100_000,
    *,
    secret: SharedSecret | None = None,
    seed: int = 0,
    **kwargs,
) -> SessionConfig:
    """Convenience constructor used by tests, the CLI and the acceptance suite."""
    direction = kwargs.pop("direction", "alice_authenticated")
    channel = kwargs.pop("channel", None)
    if channel is None:
        channel = ChannelParams(kwargs.pop("p_loss", 0.0), kwargs.pop("p_noise", 0.0))
    if secret is None:
        secret = SharedSecret.random(128, derive_rng(seed, "secret"))
    return SessionConfig(
        variant=Variant(Scheme(scheme), direction),
        num_pulses=num_pulses,
        secret=secret,
        channel=channel,
        master_seed=seed,
        **kwargs,
    )

