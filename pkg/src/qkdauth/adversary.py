"""Eve: intercept-resend, the man-in-the-middle walkthroughs and suppression.

Eve taps the fibre right at Alice's output, so her own measurements see no
loss and no noise; the hop from Eve to Bob uses the configured channel.
Her resend rule is fixed to nu = mu, xi = chi.

Anything Eve computes about F(K) is derived only from her own logs and from
classical messages she legitimately receives (Alice's disclosures and the
positions/values revealed by forward EC). The true keystream is used on the
Alice and Bob sides of each exchange and for post-hoc instrumentation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .channel import Basis, ChannelParams, PulseTrain, QuantumSymbol, measure, measure_train
from .protocol import (
    AliceLog,
    BitSource,
    BobLog,
    ConfigError,
    EcResult,
    MessageKind,
    Scheme,
    SiftExchange,
    SiftMessage,
    Transcript,
    Variant,
    encrypt_bases,
    error_correct,
    estimate_qber,
    match_encrypted,
)


class AttackKind(str, Enum):
    NONE = "none"
    INTERCEPT_RESEND_PLAIN = "intercept_resend_plain"
    MITM_P1A = "mitm_p1a"
    MITM_P1B = "mitm_p1b"
    MITM_P2A = "mitm_p2a"
    MITM_P2B = "mitm_p2b"
    SUPPRESSION_P1A = "suppression_p1a"
    SUPPRESSION_P2A = "suppression_p2a"

    @property
    def target(self) -> Scheme | None:
        """Scheme this attack impersonates Alice in, or None for passive/no attack."""
        return {
            AttackKind.MITM_P1A: Scheme.P1A,
            AttackKind.MITM_P1B: Scheme.P1B,
            AttackKind.MITM_P2A: Scheme.P2A,
            AttackKind.MITM_P2B: Scheme.P2B,
            AttackKind.SUPPRESSION_P1A: Scheme.P1A,
            AttackKind.SUPPRESSION_P2A: Scheme.P2A,
        }.get(self)

    @property
    def suppression(self) -> bool:
        return self in (AttackKind.SUPPRESSION_P1A, AttackKind.SUPPRESSION_P2A)


class Timing(str, Enum):
    INTERLEAVED = "interleaved"
    SEQUENTIAL = "sequential"


class GuessPolicy(str, Enum):
    PAPER_NAIVE = "paper_naive"
    BAYESIAN = "bayesian"


@dataclass(frozen=True)
class AttackStrategy:
    kind: AttackKind = AttackKind.NONE
    timing: Timing = Timing.INTERLEAVED
    guess_policy: GuessPolicy = GuessPolicy.PAPER_NAIVE
    # explicit target slots {tau}; None means a random tau_fraction of all slots
    tau: tuple[int, ...] | None = None
    tau_fraction: float = 1.0

    def __post_init__(self) -> None:
        for name, enum in (("kind", AttackKind), ("timing", Timing), ("guess_policy", GuessPolicy)):
            try:
                object.__setattr__(self, name, enum(getattr(self, name)))
            except ValueError:
                choices = ", ".join(e.value for e in enum)
                raise ConfigError(name, f"unknown value {getattr(self, name)!r}; choose from {choices}") from None
        if self.kind.suppression and self.timing is not Timing.SEQUENTIAL:
            raise ConfigError(
                "timing", f"{self.kind.value} needs sequential timing; interleaved sessions prevent it"
            )
        if not 0.0 < self.tau_fraction <= 1.0:
            raise ConfigError("tau_fraction", f"must be in (0, 1], got {self.tau_fraction}")

    @property
    def active(self) -> bool:
        return self.kind is not AttackKind.NONE

    def check_variant(self, variant: Variant) -> None:
        target = self.kind.target
        if target is None:
            return
        if variant.reversed:
            raise ConfigError("attack", f"{self.kind.value} is not modelled for bob_authenticated sessions")
        if variant.scheme is not target:
            raise ConfigError("attack", f"{self.kind.value} targets {target.value}, session runs {variant.scheme.value}")


@dataclass
class EveState:
    """Eve's per-slot logs and her running estimate of F(K).

    ``ks_estimate``/``ks_known`` are indexed the same way the target
    variant indexes its keystream: by slot for P1A/P2A, by ordinal for
    P1B/P2B. ``ks_known`` marks indices learned from EC-revealed errors;
    every other index holds a guess.
    """

    mu: np.ndarray
    chi: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    tau: np.ndarray
    ks_estimate: np.ndarray
    ks_known: np.ndarray
    guesses: np.ndarray
    ae_retained: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    ae_stream_length: int = 0
    ae_ec: EcResult | None = None
    ae_qber: float | None = None
    posterior_match: float | None = None
    ae_complete: bool = False

    @property
    def num_slots(self) -> int:
        return int(self.mu.size)


def new_eve_state(num_slots: int, strategy: AttackStrategy, rng: np.random.Generator) -> EveState:
    """Fresh state with tau chosen and per-index fallback guesses drawn."""
    if strategy.tau is not None:
        tau = np.unique(np.asarray(strategy.tau, dtype=np.int64))
        if tau.size and (tau[0] < 0 or tau[-1] >= num_slots):
            raise ConfigError("tau", f"slots must lie in [0, {num_slots})")
    elif strategy.tau_fraction < 1.0:
        tau = np.flatnonzero(rng.random(num_slots) < strategy.tau_fraction)
    else:
        tau = np.arange(num_slots, dtype=np.int64)
    guesses = rng.integers(0, 2, size=num_slots, dtype=np.uint8)
    empty = np.zeros(num_slots, dtype=np.uint8)
    return EveState(
        mu=empty.copy(),
        chi=empty.copy(),
        nu=empty.copy(),
        xi=empty.copy(),
        tau=tau,
        ks_estimate=guesses.copy(),
        ks_known=np.zeros(num_slots, dtype=bool),
        guesses=guesses,
    )


# -- photon phase -------------------------------------------------------------


def resend_allowed(t: int | np.ndarray, state: EveState, strategy: AttackStrategy) -> np.ndarray | bool:
    """Whether Eve emits a photon towards Bob at slot(s) ``t``.

    Suppression attacks only emit where the keystream is known; the
    P2A walkthrough only emits inside tau.
    """
    if strategy.kind.suppression:
        return state.ks_known[t]
    if strategy.kind is AttackKind.MITM_P2A:
        return np.isin(t, state.tau)
    return np.ones_like(t, dtype=bool) if isinstance(t, np.ndarray) else True


def eve_intercept_resend(
    symbol: QuantumSymbol,
    t: int,
    state: EveState,
    rng: np.random.Generator,
    strategy: AttackStrategy | None = None,
) -> QuantumSymbol | None:
    """Measure one photon in a random basis, log it and re-prepare it."""
    strategy = strategy or AttackStrategy(AttackKind.INTERCEPT_RESEND_PLAIN)
    mu = Basis(int(rng.integers(0, 2)))
    chi = measure(symbol, mu, 0.0, rng)
    state.mu[t], state.chi[t] = mu, chi
    state.nu[t], state.xi[t] = mu, chi
    if not resend_allowed(t, state, strategy):
        return None
    return QuantumSymbol(Basis(int(state.nu[t])), int(state.xi[t]))


def eve_measure_train(train: PulseTrain, state: EveState, rng: np.random.Generator) -> None:
    """Intercept every photon of a train (Eve's tap is lossless and noiseless)."""
    n = len(train)
    state.mu[:] = rng.integers(0, 2, size=n, dtype=np.uint8)
    state.chi[:] = measure_train(train, state.mu, 0.0, rng)
    state.nu[:] = state.mu
    state.xi[:] = state.chi


def eve_resend_train(state: EveState, strategy: AttackStrategy) -> tuple[PulseTrain, np.ndarray]:
    """Eve's photons towards Bob and the mask of slots where she sends one."""
    sent = np.asarray(resend_allowed(np.arange(state.num_slots), state, strategy), dtype=bool)
    return PulseTrain(state.nu.copy(), state.xi.copy()), sent


# -- Alice <-> Eve ------------------------------------------------------------


@dataclass
class EveBobResult:
    """Bob-side view of the Eve -> Bob session."""

    retained: np.ndarray
    eve_key: np.ndarray
    bob_key: np.ndarray


def eve_run_alice_session(
    variant: Variant,
    state: EveState,
    delta: float,
    strategy: AttackStrategy,
    alice_log: AliceLog,
    alice_ks: BitSource,
    ec_rng: np.random.Generator,
    transcript: Transcript | None = None,
) -> EveState:
    """Sift and error-correct with honest Alice while posing as Bob.

    Alice is the EC reference. Revealed error positions are turned into
    known keystream bits; everything else is filled per ``guess_policy``.
    """
    scheme = variant.scheme
    n = state.num_slots
    exchange = SiftExchange(scheme, transcript)

    if scheme in (Scheme.P1A, Scheme.P1B):
        disclosure = exchange.post(SiftMessage("alice", MessageKind.BASIS_DISCLOSURE, alice_log.y, False, (0, n)))
        retained = np.flatnonzero(disclosure.payload == state.mu)
        exchange.post(SiftMessage("eve", MessageKind.VALID_TIMES, retained, False, (0, n)))
        length = retained.size
        if scheme is Scheme.P1A:
            alice_key = alice_log.x[retained]
            guess = state.guesses[retained]
        else:
            alice_key = alice_log.x[retained] ^ alice_ks.bits(0, length) if length else alice_log.x[retained]
            guess = state.guesses[:length]
        eve_key = state.chi[retained] ^ guess
        ec = error_correct(alice_key, eve_key, delta, ec_rng)
        estimate = state.chi[retained] ^ ec.corrected_key
        index = retained if scheme is Scheme.P1A else np.arange(length)
        state.ks_estimate[index] = estimate
        state.ks_known[index[ec.revealed_error_positions]] = True

    elif scheme is Scheme.P2A:
        disclosure = exchange.post(SiftMessage("alice", MessageKind.BASIS_DISCLOSURE, alice_log.y, False, (0, n)))
        # Eve cannot compare bases without F(K); she claims agreement on all of tau
        retained = state.tau
        exchange.post(SiftMessage("eve", MessageKind.VALID_TIMES, retained, False, (0, n)))
        length = retained.size
        alice_key = alice_log.x[retained]
        eve_key = state.chi[retained]
        ec = error_correct(alice_key, eve_key, delta, ec_rng)
        match_hypothesis = disclosure.payload[retained] ^ state.mu[retained]
        _fill_basis_estimate(state, retained, match_hypothesis, ec, length, strategy.guess_policy)

    elif scheme is Scheme.P2B:
        det = exchange.post(SiftMessage("eve", MessageKind.DETECTION_TIMES, state.tau, False, (0, n)))
        slots = det.payload
        length = slots.size
        payload = encrypt_bases(alice_log.y[slots], alice_ks.bits(0, length)) if length else np.zeros(0, np.uint8)
        disclosure = exchange.post(SiftMessage("alice", MessageKind.BASIS_DISCLOSURE, payload, True, (0, length)))
        retained = slots
        exchange.post(SiftMessage("eve", MessageKind.VALID_TIMES, retained, False, (0, n)))
        alice_key = alice_log.x[retained]
        eve_key = state.chi[retained]
        ec = error_correct(alice_key, eve_key, delta, ec_rng)
        match_hypothesis = disclosure.payload ^ state.mu[slots]
        _fill_basis_estimate(state, np.arange(length), match_hypothesis, ec, length, strategy.guess_policy)

    else:
        raise ConfigError("attack", f"no man-in-the-middle walkthrough for {scheme.value}")

    if transcript is not None:
        transcript.post("alice", MessageKind.EC_CORRECTION, _bitmap(ec.revealed_error_positions, length), (0, length))
    state.ae_retained = retained
    state.ae_stream_length = int(length)
    state.ae_ec = ec
    state.ae_qber = estimate_qber(alice_key, eve_key) if length else None
    state.ae_complete = True
    return state


def _bitmap(positions: np.ndarray, length: int) -> np.ndarray:
    bitmap = np.zeros(length, dtype=np.uint8)
    bitmap[positions] = 1
    return bitmap


def _fill_basis_estimate(
    state: EveState,
    index: np.ndarray,
    match_hypothesis: np.ndarray,
    ec: EcResult,
    length: int,
    policy: GuessPolicy,
) -> None:
    """Keystream estimate for the basis-encrypting variants.

    ``match_hypothesis[k]`` is the keystream bit that would make Alice's
    physical basis equal Eve's measurement basis at entry k. A revealed
    error proves the bases differed, so the bit is the complement.
    """
    revealed = ec.revealed_error_positions
    mismatches = ec.revealed_error_positions.size + ec.residual_error_count
    # P(mismatch revealed); mismatched bases give a wrong bit half the time
    q = revealed.size / mismatches if mismatches else 1.0
    state.posterior_match = 1.0 / (2.0 - 0.5 * q)
    if policy is GuessPolicy.BAYESIAN and state.posterior_match >= 0.5:
        state.ks_estimate[index] = match_hypothesis
    else:
        state.ks_estimate[index] = state.guesses[index]
    state.ks_estimate[index[revealed]] = match_hypothesis[revealed] ^ 1
    state.ks_known[index[revealed]] = True


# -- Eve <-> Bob --------------------------------------------------------------


def eve_run_bob_session(
    variant: Variant,
    state: EveState,
    bob_log: BobLog,
    bob_ks: BitSource,
    transcript: Transcript | None = None,
) -> EveBobResult:
    """Sift with Bob while posing as Alice, using the estimate F(K').

    Returns the sifted key pair (Eve's, Bob's) ready for EC and the QBER
    check; Eve is the EC reference.
    """
    scheme = variant.scheme
    n = state.num_slots
    est = state.ks_estimate
    exchange = SiftExchange(scheme, transcript)

    if scheme in (Scheme.P1A, Scheme.P1B):
        disclosure = exchange.post(SiftMessage("eve", MessageKind.BASIS_DISCLOSURE, state.nu, False, (0, n)))
        retained = np.flatnonzero(bob_log.detected & (disclosure.payload == bob_log.z))
        exchange.post(SiftMessage("bob", MessageKind.VALID_TIMES, retained, False, (0, n)))
        bob_key = bob_log.recorded[retained].astype(np.uint8)
        if scheme is Scheme.P1A:
            # Bob un-masks with F; Eve claims the bit he would get if her estimate were right
            eve_key = state.xi[retained] ^ est[retained]
        else:
            length = retained.size
            eve_key = state.xi[retained] ^ est[:length]
            bob_key = bob_key ^ bob_ks.bits(0, length) if length else bob_key

    elif scheme is Scheme.P2A:
        disclosure = exchange.post(SiftMessage("eve", MessageKind.BASIS_DISCLOSURE, state.nu ^ est, False, (0, n)))
        retained = np.flatnonzero(bob_log.detected & (disclosure.payload == bob_log.z))
        exchange.post(SiftMessage("bob", MessageKind.VALID_TIMES, retained, False, (0, n)))
        bob_key = bob_log.recorded[retained].astype(np.uint8)
        eve_key = state.xi[retained]

    elif scheme is Scheme.P2B:
        det = exchange.post(SiftMessage("bob", MessageKind.DETECTION_TIMES, bob_log.detection_slots, False, (0, n)))
        slots = det.payload
        length = slots.size
        payload = encrypt_bases(state.nu[slots], est[:length])
        exchange.post(SiftMessage("eve", MessageKind.BASIS_DISCLOSURE, payload, True, (0, length)))
        ks_bits = bob_ks.bits(0, length) if length else np.zeros(0, np.uint8)
        retained = slots[match_encrypted(payload, bob_log.z[slots], ks_bits)]
        exchange.post(SiftMessage("bob", MessageKind.VALID_TIMES, retained, False, (0, n)))
        bob_key = bob_log.recorded[retained].astype(np.uint8)
        eve_key = state.xi[retained]

    else:
        raise ConfigError("attack", f"no man-in-the-middle walkthrough for {scheme.value}")

    return EveBobResult(retained, eve_key.astype(np.uint8), bob_key)


# -- instrumentation ------------------------------------------------------------


@dataclass
class AttackReport:
    """Ground-truth diagnostics of one attacked session (not visible to parties)."""

    kind: str
    timing: str
    guess_policy: str
    ae_qber: float | None = None
    ae_sifted_count: int = 0
    ae_residual_rate: float | None = None
    sifted_ks_error: float | None = None
    full_ks_error: float | None = None
    known_fraction: float = 0.0
    known_ks_error: float | None = None
    overlap_of_ae: float | None = None
    overlap_of_eb: float | None = None
    forwarded_fraction: float = 1.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def keystream_error(state: EveState, true_bits: np.ndarray, index: np.ndarray) -> float | None:
    if index.size == 0:
        return None
    return float(np.count_nonzero(state.ks_estimate[index] != true_bits[index])) / index.size


def build_report(
    strategy: AttackStrategy,
    state: EveState,
    true_ks: BitSource,
    forwarded: np.ndarray,
    eb_retained: np.ndarray | None,
) -> AttackReport:
    report = AttackReport(strategy.kind.value, strategy.timing.value, strategy.guess_policy.value)
    n = state.num_slots
    report.forwarded_fraction = float(np.count_nonzero(forwarded)) / n if n else 0.0
    if not state.ae_complete:
        return report
    truth = true_ks.bits(0, n)
    ae_index = state.ae_retained if strategy.kind.target in (Scheme.P1A, Scheme.P2A) else np.arange(state.ae_stream_length)
    report.ae_qber = state.ae_qber
    report.ae_sifted_count = int(state.ae_retained.size)
    report.ae_residual_rate = state.ae_ec.residual_rate if state.ae_ec is not None else None
    report.sifted_ks_error = keystream_error(state, truth, ae_index)
    report.full_ks_error = keystream_error(state, truth, np.arange(n))
    known = np.flatnonzero(state.ks_known)
    report.known_fraction = known.size / n if n else 0.0
    report.known_ks_error = keystream_error(state, truth, known)
    if eb_retained is not None and state.ae_retained.size and eb_retained.size:
        common = np.intersect1d(state.ae_retained, eb_retained, assume_unique=True).size
        report.overlap_of_ae = common / state.ae_retained.size
        report.overlap_of_eb = common / eb_retained.size
    return report


# -- closed-form predictions ------------------------------------------------------


class NoPrediction(ValueError):
    """No closed form exists for the requested attack/policy pair."""


@dataclass(frozen=True)
class Prediction:
    alpha: float
    gamma: float
    expected_qber: float


def alpha(delta: float) -> float:
    """Eve's residual keystream error on Alice-Eve sifted slots (bit-encrypting variants)."""
    return max(0.0, 0.5 - delta)


def gamma(delta: float) -> float:
    """Eve's keystream error on her target slots (basis-encrypting variants)."""
    return max(0.75 / 2, (1.0 - delta) / 2)


def predict_attack_qber(
    kind: AttackKind | str,
    delta: float,
    guess_policy: GuessPolicy | str = GuessPolicy.PAPER_NAIVE,
) -> Prediction:
    kind = AttackKind(kind)
    guess_policy = GuessPolicy(guess_policy)
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must be in [0, 1], got {delta}")
    a, g = alpha(delta), gamma(delta)
    if kind is AttackKind.INTERCEPT_RESEND_PLAIN:
        expected = 0.25
    elif kind is AttackKind.MITM_P1A:
        expected = 0.25 + a / 2
    elif kind is AttackKind.MITM_P1B:
        expected = a
    elif kind in (AttackKind.MITM_P2A, AttackKind.MITM_P2B):
        if guess_policy is not GuessPolicy.PAPER_NAIVE:
            raise NoPrediction(f"{kind.value} has no closed form under {guess_policy.value}")
        expected = g / 2
    else:
        raise NoPrediction(f"no closed-form QBER for {kind.value}")
    return Prediction(a, g, expected)
