"""Experiment configuration: JSON file + command-line overrides."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .adversary import AttackKind, AttackStrategy, GuessPolicy, Timing
from .channel import ChannelParams
from .keystream import GENERATORS, SharedSecret
from .protocol import ConfigError, Direction, Scheme, SessionConfig, Variant
from .seeding import derive_rng

SEED_ENV = "QKDAUTH_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw, 0)
    except ValueError:
        raise ConfigError("seed", f"{SEED_ENV}={raw!r} is not an integer") from None


@dataclass
class ExperimentConfig:
    variant: str = "p1a"
    direction: str = "alice_authenticated"
    pulses: int = 200_000
    p_loss: float = 0.1
    p_noise: float = 0.02
    delta: float = 0.25
    theta: float = 0.15
    secret: str | None = None
    secret_bits: int = 128
    seed: int | None = None
    generator: str = "blake2b-ctr"
    min_sifted: int = 1000
    attack: str = "none"
    timing: str = "interleaved"
    policy: str = "paper_naive"
    tau: list[int] | None = None
    tau_fraction: float = 1.0
    trials: int = 8
    workers: int = 1
    tolerance: float = 0.01
    # None: the command picks (run -> json, sweep -> csv)
    format: str | None = None
    transcript: str | None = None

    def __post_init__(self) -> None:
        if self.seed is None:
            self.seed = default_seed()
        self.validate()

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> ExperimentConfig:
        unknown = sorted(set(data) - set(cls.field_names()))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        return cls(**dict(data))

    @classmethod
    def load(cls, path: str | Path | None, overrides: Mapping[str, Any] | None = None) -> ExperimentConfig:
        """File values first, then every non-None override on top."""
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(Path(path).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError("config", f"{path} is not valid JSON: {exc.msg}") from None
            if not isinstance(data, dict):
                raise ConfigError("config", "top level must be a JSON object")
        data.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(data)

    def validate(self) -> None:
        for name in ("p_loss", "p_noise", "delta", "theta", "tau_fraction", "tolerance"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)) or math.isnan(value) or not 0 <= value <= 1:
                raise ConfigError(name, f"must be a number in [0, 1], got {value!r}")
        if self.theta >= 0.25:
            raise ConfigError("theta", "must be below 0.25 to separate honest from attacked sessions")
        for name, low in (("pulses", 1), ("trials", 1), ("workers", 1), ("min_sifted", 1), ("secret_bits", 16)):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < low:
                raise ConfigError(name, f"must be an integer >= {low}, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed", f"must be an unsigned 64-bit integer, got {self.seed!r}")
        for name, enum in (
            ("variant", Scheme),
            ("direction", Direction),
            ("attack", AttackKind),
            ("timing", Timing),
            ("policy", GuessPolicy),
        ):
            try:
                enum(getattr(self, name))
            except ValueError:
                choices = ", ".join(e.value for e in enum)
                raise ConfigError(name, f"unknown value {getattr(self, name)!r}; choose from {choices}") from None
        if self.generator not in GENERATORS:
            raise ConfigError("generator", f"unknown generator {self.generator!r}")
        if self.format not in (None, "json", "csv"):
            raise ConfigError("format", f"must be json or csv, got {self.format!r}")
        if self.secret is not None:
            try:
                SharedSecret.from_hex(self.secret)
            except ValueError as exc:
                raise ConfigError("secret", str(exc)) from None
        # cross-field rules live in the domain types; surface them with our field names
        Variant(Scheme(self.variant), Direction(self.direction))
        self.strategy().check_variant(Variant(Scheme(self.variant), Direction(self.direction)))

    def shared_secret(self) -> SharedSecret:
        if self.secret is not None:
            return SharedSecret.from_hex(self.secret)
        return SharedSecret.random(self.secret_bits, derive_rng(self.seed, "secret"))

    def session_config(self) -> SessionConfig:
        return SessionConfig(
            variant=Variant(Scheme(self.variant), Direction(self.direction)),
            num_pulses=self.pulses,
            secret=self.shared_secret(),
            channel=ChannelParams(self.p_loss, self.p_noise),
            delta=float(self.delta),
            theta_detect=float(self.theta),
            master_seed=self.seed,
            min_sifted=self.min_sifted,
            generator_id=self.generator,
        )

    def strategy(self) -> AttackStrategy:
        return AttackStrategy(
            kind=AttackKind(self.attack),
            timing=Timing(self.timing),
            guess_policy=GuessPolicy(self.policy),
            tau=tuple(self.tau) if self.tau is not None else None,
            tau_fraction=float(self.tau_fraction),
        )

    def to_dict(self) -> dict[str, Any]:
        out = asdict(self)
        out["secret"] = self.shared_secret().to_hex()
        return out
