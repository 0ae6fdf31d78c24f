"""Shared secret K and its deterministic expansion F(K).

The expansion is a hash function run in counter mode: block ``j`` of the
stream is ``H(domain || generator || n || K || j)`` unpacked MSB-first into
bits. Any index can be evaluated independently, so ``bits(i, i + 1)`` always
agrees with ``bits(0, m)`` at position ``i``.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MIN_SECRET_BITS = 16
MAX_STREAM_BITS = 1 << 32
DEFAULT_GENERATOR = "blake2b-ctr"

_DOMAIN = b"qkdauth/F/v1"


def _blake2b(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=64).digest()


def _sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


# generator id -> (hash function, block size in bits)
GENERATORS = {
    "blake2b-ctr": (_blake2b, 512),
    "sha256-ctr": (_sha256, 256),
}


class KeystreamBoundsError(ValueError):
    """Requested index range is empty, negative or past the stream limit."""


class InsufficientKeyMaterial(ValueError):
    """Distilled key is too short to build the next shared secret."""


def _as_bits(bits: Iterable[int]) -> np.ndarray:
    arr = np.asarray(list(bits) if not isinstance(bits, np.ndarray) else bits)
    arr = arr.astype(np.uint8, copy=True).ravel()
    if arr.size and arr.max() > 1:
        raise ValueError("bit sequences may only contain 0 and 1")
    return arr


@dataclass(frozen=True)
class SharedSecret:
    """The n-bit secret K shared by Alice and Bob before the session."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("secret bits must be 0 or 1")
        if len(self.bits) < MIN_SECRET_BITS:
            raise ValueError(f"secret must have at least {MIN_SECRET_BITS} bits, got {len(self.bits)}")

    @property
    def n(self) -> int:
        return len(self.bits)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> SharedSecret:
        return cls(tuple(int(b) for b in _as_bits(bits)))

    @classmethod
    def from_hex(cls, text: str, n: int | None = None) -> SharedSecret:
        """Parse a hex string; ``n`` truncates to the leading n bits."""
        text = text.strip().lower().removeprefix("0x")
        try:
            raw = bytes.fromhex(text)
        except ValueError as exc:
            raise ValueError(f"secret is not valid hexadecimal: {exc}") from None
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8))
        if n is not None:
            if n > bits.size:
                raise ValueError(f"secret hex holds {bits.size} bits, fewer than n={n}")
            bits = bits[:n]
        return cls.from_bits(bits)

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> SharedSecret:
        return cls.from_bits(rng.integers(0, 2, size=n, dtype=np.uint8))

    def to_hex(self) -> str:
        return np.packbits(np.array(self.bits, dtype=np.uint8)).tobytes().hex()

    def to_bytes(self) -> bytes:
        return np.packbits(np.array(self.bits, dtype=np.uint8)).tobytes()

    def fingerprint(self) -> str:
        return hashlib.sha256(self.n.to_bytes(4, "big") + self.to_bytes()).hexdigest()[:16]


class Keystream:
    """Random-access view of F(K) for one secret and generator.

    Blocks are cached as a growing prefix; the cache never changes the value
    at any index, so instances can be shared between threads.
    """

    def __init__(
        self,
        secret: SharedSecret,
        generator_id: str = DEFAULT_GENERATOR,
        max_bits: int = MAX_STREAM_BITS,
    ) -> None:
        if generator_id not in GENERATORS:
            raise ValueError(f"unknown generator {generator_id!r}; choose from {sorted(GENERATORS)}")
        self.secret = secret
        self.generator_id = generator_id
        self.max_bits = max_bits
        self._hash, self._block_bits = GENERATORS[generator_id]
        self._prefix_key = (
            _DOMAIN + generator_id.encode() + b"\x00" + secret.n.to_bytes(4, "big") + secret.to_bytes()
        )
        self._cache = np.zeros(0, dtype=np.uint8)
        self._lock = threading.Lock()

    @property
    def secret_fingerprint(self) -> str:
        return self.secret.fingerprint()

    def _blocks(self, first: int, last: int) -> np.ndarray:
        digests = b"".join(self._hash(self._prefix_key + j.to_bytes(8, "big")) for j in range(first, last))
        return np.unpackbits(np.frombuffer(digests, dtype=np.uint8))

    def bits(self, start: int, stop: int) -> np.ndarray:
        """Return F(K)^i for ``start <= i < stop`` as a uint8 array."""
        if start < 0 or stop <= start:
            raise KeystreamBoundsError(f"index range [{start}, {stop}) is empty or negative")
        if stop > self.max_bits:
            raise KeystreamBoundsError(f"index {stop - 1} exceeds maximum stream length {self.max_bits}")
        cache = self._cache
        if stop <= cache.size:
            return cache[start:stop].copy()
        # small out-of-prefix windows are computed directly instead of growing the cache
        if start >= cache.size + (1 << 20):
            first = start // self._block_bits
            block = self._blocks(first, -(-stop // self._block_bits))
            offset = start - first * self._block_bits
            return block[offset : offset + stop - start]
        with self._lock:
            cache = self._cache
            if stop > cache.size:
                have = cache.size // self._block_bits
                need = -(-stop // self._block_bits)
                cache = np.concatenate([cache, self._blocks(have, need)])
                self._cache = cache
        return cache[start:stop].copy()

    def bit(self, index: int) -> int:
        return int(self.bits(index, index + 1)[0])

    def __repr__(self) -> str:
        return f"Keystream(secret={self.secret_fingerprint}, generator={self.generator_id!r})"


def expand(
    secret: SharedSecret,
    start: int,
    stop: int,
    generator_id: str = DEFAULT_GENERATOR,
    max_bits: int = MAX_STREAM_BITS,
) -> np.ndarray:
    """Bits ``[start, stop)`` of F(K)."""
    return Keystream(secret, generator_id, max_bits).bits(start, stop)


def refresh_secret(distilled_key: Sequence[int] | np.ndarray, n: int) -> tuple[SharedSecret, int]:
    """Take the first ``n`` bits of a distilled key as the next secret.

    Returns the new secret and the number of key bits consumed; the caller
    must drop those bits from the key it hands out.
    """
    key = _as_bits(distilled_key)
    if n <= 0:
        raise InsufficientKeyMaterial(f"secret length must be positive, got n={n}")
    if key.size < n:
        raise InsufficientKeyMaterial(f"distilled key has {key.size} bits, need {n}")
    return SharedSecret.from_bits(key[:n]), n
