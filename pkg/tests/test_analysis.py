import csv
import io
import math

import numpy as np
import pytest

from qkdauth.adversary import AttackStrategy, Prediction, predict_attack_qber
from qkdauth.analysis import (
    REPORT_COLUMNS,
    TrialAggregate,
    aggregate,
    binomial_ci,
    compare_to_prediction,
    report_row,
    rows_to_csv,
    run_sessions,
    run_trials,
)
from qkdauth.protocol import Scheme, Verdict
from qkdauth.session import baseline_config


def _agg(mean):
    return TrialAggregate(8, 8, 0, mean, 0.0, (mean, mean), 1.0, 50_000.0)


def test_binomial_ci_edges():
    lo, hi = binomial_ci(0, 1000)
    assert lo == 0 and hi == 0
    lo, hi = binomial_ci(1000, 1000)
    assert hi == 1
    lo, hi = binomial_ci(3, 10)
    assert 0 <= lo < 0.3 < hi <= 1


def test_binomial_ci_quarter():
    lo, hi = binomial_ci(25_000, 100_000)
    half = 1.96 * math.sqrt(0.25 * 0.75 / 1e5)
    assert lo == pytest.approx(0.25 - half, abs=1e-5)
    assert hi == pytest.approx(0.25 + half, abs=1e-5)
    assert (hi - lo) / 2 == pytest.approx(0.0027, abs=5e-5)


@pytest.mark.parametrize("args", [(1, 0), (-1, 10), (11, 10)])
def test_binomial_ci_rejects_bad_counts(args):
    with pytest.raises(ValueError):
        binomial_ci(*args)


def test_compare_examples():
    expected = Prediction(0.25, 0.375, 0.375)
    assert compare_to_prediction(_agg(0.372), expected, 0.01).passed
    verdict = compare_to_prediction(_agg(0.30), expected, 0.01)
    assert not verdict.passed
    assert "fail" in verdict.report


def test_honest_noiseless_trials():
    agg = run_trials(baseline_config(Scheme.P1A, 10_000, seed=1), None, 20, seed=1)
    assert agg.trials == agg.conclusive == 20
    assert agg.mean_qber == 0 and agg.detection_rate == 0


def test_p1a_endpoint_trials():
    agg = run_trials(baseline_config(Scheme.P1A, 100_000, seed=2, delta=0.0), AttackStrategy("mitm_p1a"), 20, seed=2)
    assert abs(agg.mean_qber - 0.5) <= 0.005
    assert agg.detection_rate == 1
    assert agg.ci95[0] <= agg.mean_qber <= agg.ci95[1]
    assert compare_to_prediction(agg, predict_attack_qber("mitm_p1a", 0.0), 0.01).passed


def test_intercept_resend_trials():
    agg = run_trials(baseline_config(Scheme.BB84, 100_000, seed=3), AttackStrategy("intercept_resend_plain"), 20, seed=3)
    assert abs(agg.mean_qber - 0.25) <= 0.005


def test_honest_false_alarms_absent():
    agg = run_trials(baseline_config(Scheme.P2B, 50_000, seed=4, p_noise=0.05), None, 20, seed=4)
    assert agg.detection_rate == 0


def test_std_of_mean_shrinks_as_inverse_sqrt():
    cfg = baseline_config(Scheme.P1A, 2000, seed=5, p_noise=0.1, min_sifted=100)
    per_session = run_sessions(cfg, None, 64 * 24, seed=5)
    spreads = {}
    for t in (4, 16, 64):
        means = [aggregate(per_session[i : i + t]).mean_qber for i in range(0, t * 24, t)]
        spreads[t] = float(np.std(means, ddof=1))
    for small, large in ((4, 16), (16, 64)):
        ratio = spreads[small] / spreads[large]
        assert 2 / 1.5 <= ratio <= 2 * 1.5


def test_inconclusive_counted_separately():
    tiny = run_sessions(baseline_config(Scheme.P1A, 500, seed=6), None, 3, seed=6)
    full = run_sessions(baseline_config(Scheme.P1A, 10_000, seed=6, p_noise=0.05), None, 2, seed=6)
    agg = aggregate(tiny + full)
    assert agg.trials == 5 and agg.inconclusive == 3 and agg.conclusive == 2
    assert agg.verdicts["inconclusive"] == 3
    assert agg.mean_qber == pytest.approx(np.mean([o.qber for o in full]))


def test_all_inconclusive_has_no_mean():
    agg = aggregate(run_sessions(baseline_config(Scheme.P1A, 500, seed=7), None, 2, seed=7))
    assert agg.mean_qber is None and agg.ci95 is None
    assert not compare_to_prediction(agg, Prediction(0.25, 0.375, 0.375), 0.01).passed


def test_single_trial_interval_contains_mean():
    agg = aggregate(run_sessions(baseline_config(Scheme.P1A, 20_000, seed=8, p_noise=0.05), None, 1, seed=8))
    assert agg.ci95[0] <= agg.mean_qber <= agg.ci95[1]
    assert agg.ci95[1] - agg.ci95[0] > 0


def test_parallel_matches_serial():
    cfg = baseline_config(Scheme.P2A, 5000, seed=9, p_noise=0.03)
    serial = run_trials(cfg, None, 4, seed=9)
    parallel = run_trials(cfg, None, 4, seed=9, workers=2)
    assert serial.qbers == parallel.qbers


def test_csv_report():
    cfg = baseline_config(Scheme.P1A, 20_000, seed=10, delta=0.25)
    attack = AttackStrategy("mitm_p1a")
    agg = run_trials(cfg, attack, 2, seed=10)
    row = report_row(cfg, attack, agg, predict_attack_qber("mitm_p1a", 0.25))
    rows = list(csv.DictReader(io.StringIO(rows_to_csv([row]))))
    assert list(rows[0]) == REPORT_COLUMNS
    assert rows[0]["variant"] == "p1a" and rows[0]["attack"] == "mitm_p1a"
    assert float(rows[0]["expected_qber"]) == 0.375
    assert rows[0]["pass"] in {"pass", "fail"}


def test_csv_blank_when_no_prediction():
    cfg = baseline_config(Scheme.P1A, 5000, seed=11)
    agg = run_trials(cfg, None, 2, seed=11)
    row = next(csv.DictReader(io.StringIO(rows_to_csv([report_row(cfg, None, agg, None)]))))
    assert row["expected_qber"] == "" and row["pass"] == ""
    assert row["attack"] == "none"


def test_verdict_counts_cover_every_trial():
    agg = run_trials(baseline_config(Scheme.P1A, 20_000, seed=12), AttackStrategy("mitm_p1a"), 4, seed=12)
    assert sum(agg.verdicts.values()) == agg.trials
    assert agg.verdicts[Verdict.REJECT.value] == 4
