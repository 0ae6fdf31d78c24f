"""Monte Carlo aggregation of sessions and comparison with closed forms."""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .adversary import AttackStrategy, Prediction
from .protocol import SessionConfig, Verdict
from .seeding import derive_seed
from .session import SessionOutcome, run_session

REPORT_COLUMNS = [
    "variant",
    "attack",
    "delta",
    "policy",
    "trials",
    "mean_qber",
    "std",
    "ci_lo",
    "ci_hi",
    "detection_rate",
    "expected_qber",
    "pass",
]


def binomial_ci(successes: int, n: int, level: float = 0.95) -> tuple[float, float]:
    """Normal-approximation interval for a proportion, clipped to [0, 1]."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, {n}], got {successes}")
    p = successes / n
    z = NormalDist().inv_cdf(0.5 + level / 2)
    half = z * math.sqrt(p * (1 - p) / n)
    return max(0.0, p - half), min(1.0, p + half)


@dataclass
class TrialAggregate:
    trials: int
    conclusive: int
    inconclusive: int
    mean_qber: float | None
    std_qber: float | None
    ci95: tuple[float, float] | None
    detection_rate: float | None
    mean_sifted: float
    qbers: list[float] = field(default_factory=list)
    verdicts: dict[str, int] = field(default_factory=dict)
    attack_means: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "conclusive": self.conclusive,
            "inconclusive": self.inconclusive,
            "mean_qber": self.mean_qber,
            "std_qber": self.std_qber,
            "ci95": list(self.ci95) if self.ci95 else None,
            "detection_rate": self.detection_rate,
            "mean_sifted": self.mean_sifted,
            "verdicts": self.verdicts,
            "attack_means": self.attack_means,
        }


def _attack_means(outcomes: list[SessionOutcome]) -> dict[str, float]:
    values: dict[str, list[float]] = {}
    for o in outcomes:
        if o.attack is None:
            continue
        for key, value in o.attack.to_dict().items():
            if isinstance(value, (int, float)) and not isinstance(value, bool):
                values.setdefault(key, []).append(float(value))
    return {k: float(np.mean(v)) for k, v in values.items()}


def aggregate(outcomes: list[SessionOutcome]) -> TrialAggregate:
    """Fold session outcomes, in trial order, into summary statistics.

    Inconclusive sessions are counted but never enter the QBER mean.
    """
    conclusive = [o for o in outcomes if o.verdict is not Verdict.INCONCLUSIVE]
    qbers = [float(o.qber) for o in conclusive]
    verdicts = {v.value: sum(o.verdict is v for o in outcomes) for v in Verdict}
    sifted = float(np.mean([o.sifted_count for o in outcomes])) if outcomes else 0.0
    if not qbers:
        return TrialAggregate(len(outcomes), 0, len(outcomes), None, None, None, None, sifted, [], verdicts)
    mean = float(np.mean(qbers))
    std = float(np.std(qbers, ddof=1)) if len(qbers) > 1 else 0.0
    if len(qbers) > 1:
        half = NormalDist().inv_cdf(0.975) * std / math.sqrt(len(qbers))
        ci = (max(0.0, mean - half), min(1.0, mean + half))
    else:
        only = conclusive[0]
        lo, hi = binomial_ci(round(mean * only.sifted_count), only.sifted_count)
        ci = (min(lo, mean), max(hi, mean))
    rejected = sum(o.verdict is Verdict.REJECT for o in conclusive)
    return TrialAggregate(
        trials=len(outcomes),
        conclusive=len(conclusive),
        inconclusive=len(outcomes) - len(conclusive),
        mean_qber=mean,
        std_qber=std,
        ci95=ci,
        detection_rate=rejected / len(conclusive),
        mean_sifted=sifted,
        qbers=qbers,
        verdicts=verdicts,
        attack_means=_attack_means(outcomes),
    )


def trial_configs(config: SessionConfig, n_trials: int, seed: int) -> list[SessionConfig]:
    return [config.replace(master_seed=derive_seed(seed, f"trial/{i}")) for i in range(n_trials)]


def _run_one(args: tuple[SessionConfig, AttackStrategy | None]) -> SessionOutcome:
    config, attack = args
    return run_session(config, attack)


def run_sessions(
    config: SessionConfig,
    attack: AttackStrategy | None,
    n_trials: int,
    seed: int,
    workers: int = 1,
) -> list[SessionOutcome]:
    """Independent sessions with per-trial seeds, returned in trial order."""
    if n_trials < 1:
        raise ValueError("n_trials must be at least 1")
    jobs = [(c, attack) for c in trial_configs(config, n_trials, seed)]
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]


def run_trials(
    config: SessionConfig,
    attack: AttackStrategy | None,
    n_trials: int,
    seed: int,
    workers: int = 1,
) -> TrialAggregate:
    return aggregate(run_sessions(config, attack, n_trials, seed, workers))


@dataclass
class Comparison:
    passed: bool
    report: str


def compare_to_prediction(agg: TrialAggregate, prediction: Prediction, tolerance: float) -> Comparison:
    if agg.mean_qber is None:
        return Comparison(False, f"no conclusive trials; expected {prediction.expected_qber:.4f}")
    diff = abs(agg.mean_qber - prediction.expected_qber)
    passed = diff <= tolerance
    report = (
        f"mean_qber={agg.mean_qber:.4f} expected={prediction.expected_qber:.4f} "
        f"|diff|={diff:.4f} tol={tolerance} -> {'pass' if passed else 'fail'}"
    )
    return Comparison(passed, report)


def report_row(
    config: SessionConfig,
    attack: AttackStrategy | None,
    agg: TrialAggregate,
    prediction: Prediction | None,
    tolerance: float = 0.01,
) -> dict:
    attack = attack or AttackStrategy()
    ci = agg.ci95 or (None, None)
    row = {
        "variant": config.variant.label,
        "attack": attack.kind.value,
        "delta": config.delta,
        "policy": attack.guess_policy.value,
        "trials": agg.trials,
        "mean_qber": agg.mean_qber,
        "std": agg.std_qber,
        "ci_lo": ci[0],
        "ci_hi": ci[1],
        "detection_rate": agg.detection_rate,
        "expected_qber": prediction.expected_qber if prediction else None,
        "pass": None,
    }
    if prediction is not None:
        row["pass"] = compare_to_prediction(agg, prediction, tolerance).passed
    return row


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "pass" if value else "fail"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def rows_to_csv(rows: list[dict], columns: list[str] = REPORT_COLUMNS) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()
