"""Honest-party building blocks for the four authenticated BB84 variants.

Variant summary (F = F(K), t = time slot, i = ordinal in a disclosed list):

* ``P1A``  photon bit is ``x ^ F[t]``; Bob un-masks his recorded bit.
* ``P1B``  plain photons; both parties XOR ``F[i]`` onto the sifted key.
* ``P2A``  photon basis is ``y ^ F[t]`` at both ends; sifting compares plain y, z.
* ``P2B``  plain photons; sifting compares ``y' ^ F[i]`` with ``z' ^ F[i]`` over
  the list of detection slots.
* ``BB84`` unauthenticated baseline.

The full session driver lives in :mod:`qkdauth.session`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol as _TypingProtocol

import numpy as np

from .channel import Basis, ChannelParams, PulseTrain, QuantumSymbol
from .keystream import DEFAULT_GENERATOR, SharedSecret

DEFAULT_THETA_DETECT = 0.15
DEFAULT_MIN_SIFTED = 1000


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending setting."""

    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field


class ProtocolViolation(RuntimeError):
    """A classical message arrived out of order or with the wrong shape."""


class InsufficientData(ValueError):
    """Not enough bits to compute a statistic."""


class BitSource(_TypingProtocol):
    def bits(self, start: int, stop: int) -> np.ndarray: ...


class Scheme(str, Enum):
    BB84 = "bb84"
    P1A = "p1a"
    P1B = "p1b"
    P2A = "p2a"
    P2B = "p2b"

    @property
    def slot_indexed(self) -> bool:
        """Keystream indexed by absolute time slot (photon-layer variants)."""
        return self in (Scheme.P1A, Scheme.P2A)

    @property
    def ordinal_indexed(self) -> bool:
        return self in (Scheme.P1B, Scheme.P2B)


class Direction(str, Enum):
    ALICE_AUTHENTICATED = "alice_authenticated"
    BOB_AUTHENTICATED = "bob_authenticated"


@dataclass(frozen=True)
class Variant:
    scheme: Scheme = Scheme.P1A
    direction: Direction = Direction.ALICE_AUTHENTICATED

    def __post_init__(self) -> None:
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        object.__setattr__(self, "direction", Direction(self.direction))
        if self.reversed and self.scheme is not Scheme.P2B:
            raise ConfigError("direction", f"bob_authenticated is only defined for p2b, not {self.scheme.value}")

    @property
    def reversed(self) -> bool:
        return self.direction is Direction.BOB_AUTHENTICATED

    @property
    def label(self) -> str:
        return self.scheme.value + ("-rev" if self.reversed else "")


def _probability(name: str, value: float) -> None:
    if not isinstance(value, (int, float)) or math.isnan(value) or not 0.0 <= value <= 1.0:
        raise ConfigError(name, f"must be in [0, 1], got {value!r}")


@dataclass(frozen=True)
class SessionConfig:
    variant: Variant
    num_pulses: int
    secret: SharedSecret
    channel: ChannelParams = field(default_factory=ChannelParams)
    delta: float = 0.25
    theta_detect: float = DEFAULT_THETA_DETECT
    master_seed: int = 0
    min_sifted: int = DEFAULT_MIN_SIFTED
    generator_id: str = DEFAULT_GENERATOR

    def __post_init__(self) -> None:
        if not isinstance(self.num_pulses, int) or self.num_pulses < 1:
            raise ConfigError("num_pulses", f"must be a positive integer, got {self.num_pulses!r}")
        _probability("delta", self.delta)
        _probability("theta_detect", self.theta_detect)
        if self.theta_detect >= 0.25:
            raise ConfigError("theta_detect", "must be below 0.25 to separate honest from attacked sessions")
        if self.min_sifted < 1:
            raise ConfigError("min_sifted", "must be at least 1")
        if not 0 <= self.master_seed < 1 << 64:
            raise ConfigError("master_seed", "must be a 64-bit unsigned integer")

    def replace(self, **changes) -> SessionConfig:
        from dataclasses import replace

        return replace(self, **changes)


@dataclass
class AliceLog:
    """Alice's per-slot bit (x) and basis (y) choices."""

    x: np.ndarray
    y: np.ndarray


@dataclass
class BobLog:
    """Bob's basis choice z, detection flags and recorded bits (-1 = none)."""

    z: np.ndarray
    detected: np.ndarray
    recorded: np.ndarray

    @property
    def detection_slots(self) -> np.ndarray:
        return np.flatnonzero(self.detected)


class MessageKind(str, Enum):
    BASIS_DISCLOSURE = "basis_disclosure"
    DETECTION_TIMES = "detection_times"
    VALID_TIMES = "valid_times"
    EC_CORRECTION = "ec_correction"
    VERDICT = "verdict"
    PRIVACY_AMPLIFICATION = "privacy_amplification"


@dataclass
class SiftMessage:
    sender: str
    kind: MessageKind
    payload: np.ndarray
    encrypted: bool = False
    slot_range: tuple[int, int] = (0, 0)


def bits_to_hex(bits: np.ndarray) -> str:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes().hex()


def positions_to_bitmap(positions: np.ndarray, length: int) -> np.ndarray:
    bitmap = np.zeros(length, dtype=np.uint8)
    bitmap[np.asarray(positions, dtype=np.int64)] = 1
    return bitmap


@dataclass
class TranscriptRecord:
    seq: int
    sender: str
    kind: str
    payload_hex: str
    slot_range: tuple[int, int]

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "sender": self.sender,
            "kind": self.kind,
            "payload_hex": self.payload_hex,
            "slot_range": list(self.slot_range),
        }


class Transcript:
    """Ordered log of classical messages.

    Bit payloads are packed MSB-first into hex. Time or position lists are
    sent as a bitmap over ``slot_range``.
    """

    def __init__(self) -> None:
        self.records: list[TranscriptRecord] = []

    def post(self, sender: str, kind: MessageKind | str, bits: np.ndarray, slot_range: tuple[int, int]) -> None:
        kind = kind.value if isinstance(kind, MessageKind) else str(kind)
        self.records.append(
            TranscriptRecord(len(self.records), sender, kind, bits_to_hex(bits), (int(slot_range[0]), int(slot_range[1])))
        )

    def post_message(self, msg: SiftMessage) -> None:
        payload = msg.payload
        if msg.kind in (MessageKind.DETECTION_TIMES, MessageKind.VALID_TIMES):
            payload = positions_to_bitmap(payload, msg.slot_range[1] - msg.slot_range[0])
        self.post(msg.sender, msg.kind, payload, msg.slot_range)

    def kinds(self) -> list[str]:
        return [r.kind for r in self.records]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r.to_dict(), separators=(",", ":")) + "\n" for r in self.records)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def __len__(self) -> int:
        return len(self.records)


# -- photon phase -----------------------------------------------------------


def _stream(ks: BitSource, n: int) -> np.ndarray:
    return ks.bits(0, n) if n > 0 else np.zeros(0, dtype=np.uint8)


def alice_prepare(variant: Variant | Scheme, t: int, x: int, y: Basis | int, ks: BitSource) -> QuantumSymbol:
    scheme = variant.scheme if isinstance(variant, Variant) else Scheme(variant)
    if scheme is Scheme.P1A:
        return QuantumSymbol(Basis(int(y)), int(x) ^ int(ks.bits(t, t + 1)[0]))
    if scheme is Scheme.P2A:
        return QuantumSymbol(Basis(int(y) ^ int(ks.bits(t, t + 1)[0])), int(x))
    return QuantumSymbol(Basis(int(y)), int(x))


def bob_measurement_basis(variant: Variant | Scheme, t: int, z: Basis | int, ks: BitSource) -> Basis:
    """Basis Bob's detector actually uses at slot ``t``."""
    scheme = variant.scheme if isinstance(variant, Variant) else Scheme(variant)
    if scheme is Scheme.P2A:
        return Basis(int(z) ^ int(ks.bits(t, t + 1)[0]))
    return Basis(int(z))


def bob_record(variant: Variant | Scheme, t: int, measured: int, z: Basis | int, ks: BitSource) -> int:
    scheme = variant.scheme if isinstance(variant, Variant) else Scheme(variant)
    if scheme is Scheme.P1A:
        return int(measured) ^ int(ks.bits(t, t + 1)[0])
    return int(measured)


def prepare_train(scheme: Scheme, x: np.ndarray, y: np.ndarray, ks: BitSource) -> PulseTrain:
    if scheme is Scheme.P1A:
        return PulseTrain(y.copy(), x ^ _stream(ks, x.size))
    if scheme is Scheme.P2A:
        return PulseTrain(y ^ _stream(ks, x.size), x.copy())
    return PulseTrain(y.copy(), x.copy())


def measurement_bases_train(scheme: Scheme, z: np.ndarray, ks: BitSource) -> np.ndarray:
    if scheme is Scheme.P2A:
        return z ^ _stream(ks, z.size)
    return z.copy()


def record_train(scheme: Scheme, measured: np.ndarray, detected: np.ndarray, ks: BitSource) -> np.ndarray:
    bits = measured ^ _stream(ks, measured.size) if scheme is Scheme.P1A else measured
    return np.where(detected, bits, -1).astype(np.int8)


# -- sifting ----------------------------------------------------------------


def encrypt_bases(bases: np.ndarray, ks_bits: np.ndarray) -> np.ndarray:
    """``{b'} xor F`` as used by P2B sifting; also its own inverse."""
    return (np.asarray(bases, dtype=np.uint8) ^ np.asarray(ks_bits, dtype=np.uint8)[: len(bases)]).astype(np.uint8)


def match_encrypted(payload: np.ndarray, own_bases: np.ndarray, ks_bits: np.ndarray) -> np.ndarray:
    """Ordinals where the peer's encrypted list equals our own encrypted list."""
    return np.flatnonzero(np.asarray(payload, dtype=np.uint8) == encrypt_bases(own_bases, ks_bits))


class SiftExchange:
    """Checks that sifting messages arrive in the order the variant requires."""

    PLAIN = (MessageKind.BASIS_DISCLOSURE, MessageKind.VALID_TIMES)
    ENCRYPTED = (MessageKind.DETECTION_TIMES, MessageKind.BASIS_DISCLOSURE, MessageKind.VALID_TIMES)

    def __init__(self, scheme: Scheme, transcript: Transcript | None = None) -> None:
        self.scheme = scheme
        self.expected = self.ENCRYPTED if scheme is Scheme.P2B else self.PLAIN
        self.received: list[SiftMessage] = []
        self.transcript = transcript

    @property
    def complete(self) -> bool:
        return len(self.received) == len(self.expected)

    def post(self, msg: SiftMessage) -> SiftMessage:
        if self.complete:
            raise ProtocolViolation(f"unexpected {msg.kind.value} after sifting finished")
        want = self.expected[len(self.received)]
        if msg.kind is not want:
            raise ProtocolViolation(f"expected {want.value}, got {msg.kind.value}")
        should_encrypt = self.scheme is Scheme.P2B and msg.kind is MessageKind.BASIS_DISCLOSURE
        if msg.encrypted != should_encrypt:
            raise ProtocolViolation(f"{msg.kind.value} must {'' if should_encrypt else 'not '}be encrypted")
        self.received.append(msg)
        if self.transcript is not None:
            self.transcript.post_message(msg)
        return msg


@dataclass
class SiftResult:
    retained: np.ndarray
    messages: list[SiftMessage]


def sift(
    variant: Variant,
    alice_log: AliceLog,
    bob_log: BobLog,
    ks: BitSource,
    transcript: Transcript | None = None,
) -> SiftResult:
    """Honest sifting; returns retained slots in increasing order."""
    scheme = variant.scheme
    n = alice_log.y.size
    exchange = SiftExchange(scheme, transcript)
    if scheme is not Scheme.P2B:
        disclosure = exchange.post(SiftMessage("alice", MessageKind.BASIS_DISCLOSURE, alice_log.y, False, (0, n)))
        retained = np.flatnonzero(bob_log.detected & (disclosure.payload == bob_log.z))
        exchange.post(SiftMessage("bob", MessageKind.VALID_TIMES, retained, False, (0, n)))
        return SiftResult(retained, exchange.received)

    det = exchange.post(SiftMessage("bob", MessageKind.DETECTION_TIMES, bob_log.detection_slots, False, (0, n)))
    slots = det.payload
    ks_bits = _stream(ks, slots.size)
    y_restricted = alice_log.y[slots]
    z_restricted = bob_log.z[slots]
    if variant.reversed:
        sender, receiver, disclosed, kept = "bob", "alice", z_restricted, y_restricted
    else:
        sender, receiver, disclosed, kept = "alice", "bob", y_restricted, z_restricted
    disclosure = exchange.post(
        SiftMessage(sender, MessageKind.BASIS_DISCLOSURE, encrypt_bases(disclosed, ks_bits), True, (0, slots.size))
    )
    ordinals = match_encrypted(disclosure.payload, kept, ks_bits)
    retained = slots[ordinals]
    exchange.post(SiftMessage(receiver, MessageKind.VALID_TIMES, retained, False, (0, n)))
    return SiftResult(retained, exchange.received)


def apply_post_sift_keystream(bits: np.ndarray, ks: BitSource) -> np.ndarray:
    """XOR ``F[0..len)`` onto a sifted key (P1B); applying twice is the identity."""
    bits = np.asarray(bits, dtype=np.uint8)
    return bits ^ _stream(ks, bits.size)


# -- error correction, QBER, verdict ----------------------------------------


@dataclass
class EcResult:
    corrected_key: np.ndarray
    revealed_error_positions: np.ndarray
    residual_error_count: int

    @property
    def residual_rate(self) -> float:
        n = self.corrected_key.size
        return self.residual_error_count / n if n else 0.0


def correction_capacity(delta: float, length: int) -> int:
    """floor(delta * length), tolerant of float round-off just below an integer."""
    return int(math.floor(delta * length + 1e-9))


def error_correct(
    reference: np.ndarray,
    noisy: np.ndarray,
    delta: float,
    rng: np.random.Generator,
) -> EcResult:
    """Forward EC with correction capacity ``delta``.

    A uniformly random subset of the mismatches, of size
    ``min(#mismatches, floor(delta * len))``, is corrected and revealed;
    the rest stay as residual errors.
    """
    reference = np.asarray(reference, dtype=np.uint8)
    noisy = np.asarray(noisy, dtype=np.uint8)
    if reference.shape != noisy.shape:
        raise ValueError(f"length mismatch: reference {reference.size} vs noisy {noisy.size}")
    mismatches = np.flatnonzero(reference != noisy)
    k = min(mismatches.size, correction_capacity(delta, reference.size))
    corrected = np.sort(rng.choice(mismatches, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    key = noisy.copy()
    key[corrected] = reference[corrected]
    return EcResult(key, corrected, int(mismatches.size - k))


def estimate_qber(reference: np.ndarray, noisy: np.ndarray) -> float:
    reference = np.asarray(reference)
    noisy = np.asarray(noisy)
    if reference.shape != noisy.shape:
        raise ValueError(f"length mismatch: reference {reference.size} vs noisy {noisy.size}")
    if reference.size == 0:
        raise InsufficientData("cannot estimate QBER from zero bits")
    return float(np.count_nonzero(reference != noisy)) / reference.size


class Verdict(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    INCONCLUSIVE = "inconclusive"


def verdict(qber: float, theta_detect: float) -> Verdict:
    return Verdict.ACCEPT if qber <= theta_detect else Verdict.REJECT
