"""Command-line front end: ``qkdauth run | sweep | selftest``.

Exit status: 0 success, 1 selftest failure, 2 usage or configuration error.
A rejected session is a result, not a failure, and still exits 0.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Sequence

from . import acceptance
from .adversary import NoPrediction, predict_attack_qber
from .analysis import REPORT_COLUMNS, aggregate, compare_to_prediction, report_row, rows_to_csv, run_sessions
from .config import ExperimentConfig
from .protocol import ConfigError

SWEEP_PARAMS = {"delta": "delta", "p_noise": "p_noise", "theta_detect": "theta"}

# flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    "variant": "variant",
    "direction": "direction",
    "attack": "attack",
    "timing": "timing",
    "policy": "policy",
    "delta": "delta",
    "p_noise": "p_noise",
    "p_loss": "p_loss",
    "pulses": "pulses",
    "trials": "trials",
    "seed": "seed",
    "theta": "theta",
    "format": "format",
    "transcript": "transcript",
    "workers": "workers",
    "secret": "secret",
    "tau_fraction": "tau_fraction",
}


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; flags override its values")
    p.add_argument("--variant", help="p1a, p1b, p2a, p2b or bb84")
    p.add_argument("--direction", help="alice_authenticated (default) or bob_authenticated (p2b only)")
    p.add_argument("--attack", help="none, intercept_resend_plain, mitm_p1a, ..., suppression_p2a")
    p.add_argument("--timing", help="interleaved or sequential")
    p.add_argument("--policy", help="paper_naive or bayesian")
    p.add_argument("--delta", type=float, help="EC correction capacity")
    p.add_argument("--p-noise", dest="p_noise", type=float)
    p.add_argument("--p-loss", dest="p_loss", type=float)
    p.add_argument("--pulses", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=lambda s: int(s, 0))
    p.add_argument("--theta", type=float, help="QBER acceptance threshold")
    p.add_argument("--secret", help="shared secret as hex")
    p.add_argument("--tau-fraction", dest="tau_fraction", type=float)
    p.add_argument("--workers", type=int, help="parallel processes for trials")
    p.add_argument("--format", choices=["json", "csv"])
    p.add_argument("--transcript", help="write the first session's transcript (JSON lines) here")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qkdauth", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one session or an n-trial aggregate")
    _add_experiment_flags(run)

    sweep = sub.add_parser("sweep", help="aggregate over a list of parameter values")
    _add_experiment_flags(sweep)
    sweep.add_argument("--param", required=True, help="delta, p_noise or theta_detect")
    sweep.add_argument("--values", required=True, help="comma-separated values")

    selftest = sub.add_parser("selftest", help="run the acceptance criteria")
    selftest.add_argument("--seed", type=lambda s: int(s, 0), default=0)
    return parser


def _experiment(args: argparse.Namespace) -> ExperimentConfig:
    overrides = {fld: getattr(args, dest) for dest, fld in FLAG_FIELDS.items() if getattr(args, dest, None) is not None}
    return ExperimentConfig.load(args.config, overrides)


def _prediction(exp: ExperimentConfig):
    try:
        return predict_attack_qber(exp.attack, exp.delta, exp.policy)
    except NoPrediction:
        return None


def _execute(exp: ExperimentConfig):
    config = exp.session_config()
    attack = exp.strategy()
    outcomes = run_sessions(config, attack, exp.trials, exp.seed, exp.workers)
    if exp.transcript:
        outcomes[0].transcript.write(exp.transcript)
    return config, attack, outcomes


def cmd_run(args: argparse.Namespace) -> int:
    exp = _experiment(args)
    config, attack, outcomes = _execute(exp)
    agg = aggregate(outcomes)
    prediction = _prediction(exp)
    if (exp.format or "json") == "csv":
        sys.stdout.write("# config: " + json.dumps(exp.to_dict(), sort_keys=True) + "\n")
        sys.stdout.write(rows_to_csv([report_row(config, attack, agg, prediction, exp.tolerance)]))
        return 0
    report = {
        "config": exp.to_dict(),
        "aggregate": agg.to_dict(),
        "prediction": prediction.__dict__ if prediction else None,
        "comparison": compare_to_prediction(agg, prediction, exp.tolerance).__dict__ if prediction else None,
        "outcomes": [o.to_dict() for o in outcomes],
    }
    if exp.trials == 1:
        report["outcome"] = outcomes[0].to_dict()
    json.dump(report, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return 0


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("values", f"not a comma-separated list of numbers: {text!r}") from None


def cmd_sweep(args: argparse.Namespace) -> int:
    if args.param not in SWEEP_PARAMS:
        raise ConfigError("param", f"cannot sweep {args.param!r}; choose from {', '.join(SWEEP_PARAMS)}")
    field_name = SWEEP_PARAMS[args.param]
    base = _experiment(args)
    values = _parse_values(args.values)
    # validate every point before spending time on any of them
    points = [ExperimentConfig.from_mapping({**base.__dict__, field_name: v}) for v in values]
    rows, aggregates = [], []
    for value, exp in zip(values, points):
        exp = replace(exp, transcript=None)
        config, attack, outcomes = _execute(exp)
        agg = aggregate(outcomes)
        row = {"param": args.param, "value": value, **report_row(config, attack, agg, _prediction(exp), exp.tolerance)}
        rows.append(row)
        aggregates.append({"param": args.param, "value": value, **agg.to_dict()})
    if (base.format or "csv") == "json":
        json.dump({"config": base.to_dict(), "rows": rows, "aggregates": aggregates}, sys.stdout, indent=2, sort_keys=True)
        sys.stdout.write("\n")
    else:
        sys.stdout.write("# config: " + json.dumps(base.to_dict(), sort_keys=True) + "\n")
        sys.stdout.write(rows_to_csv(rows, ["param", "value", *REPORT_COLUMNS]))
    return 0


def cmd_selftest(args: argparse.Namespace) -> int:
    results = acceptance.run_all(args.seed, echo=print)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "selftest": cmd_selftest}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"qkdauth: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
