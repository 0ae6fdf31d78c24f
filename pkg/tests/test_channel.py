import numpy as np
import pytest

from qkdauth.channel import (
    Basis,
    ChannelParams,
    PulseTrain,
    QuantumSymbol,
    measure,
    measure_train,
    transmit,
    transmit_train,
)

N = 100_000


def rng(seed=0):
    return np.random.default_rng(seed)


def test_lossless_delivers_and_full_loss_drops():
    s = QuantumSymbol(Basis.GAMMA1, 1)
    r = rng()
    assert all(transmit(s, ChannelParams(p_loss=0.0), r) == s for _ in range(100))
    assert all(transmit(s, ChannelParams(p_loss=1.0), r) is None for _ in range(100))


def test_loss_fraction_scalar():
    r = rng(1)
    s = QuantumSymbol(Basis.GAMMA0, 0)
    delivered = sum(transmit(s, ChannelParams(p_loss=0.3), r) is not None for _ in range(N))
    assert abs(delivered / N - 0.7) <= 0.01


def test_loss_fraction_train():
    train = PulseTrain(np.zeros(N, np.uint8), np.zeros(N, np.uint8))
    assert abs(transmit_train(train, ChannelParams(p_loss=0.3), rng(2)).mean() - 0.7) <= 0.01


@pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
def test_channel_params_validated(p):
    with pytest.raises(ValueError):
        ChannelParams(p_loss=p)


def test_matched_basis_noiseless_returns_sent_bit():
    r = rng(3)
    for bit in (0, 1):
        for basis in Basis:
            assert measure(QuantumSymbol(basis, bit), basis, 0.0, r) == bit


def test_mismatched_basis_is_uniform_scalar():
    r = rng(4)
    errors = sum(measure(QuantumSymbol(Basis.GAMMA0, 1), Basis.GAMMA1, 0.0, r) != 1 for _ in range(N))
    assert abs(errors / N - 0.5) <= 0.01


def test_matched_basis_noise_rate_scalar():
    r = rng(5)
    errors = sum(measure(QuantumSymbol(Basis.GAMMA1, 0), Basis.GAMMA1, 0.05, r) for _ in range(N))
    assert abs(errors / N - 0.05) <= 0.005


def test_train_measurement_rates():
    r = rng(6)
    sent = r.integers(0, 2, N, dtype=np.uint8)
    train = PulseTrain(np.zeros(N, np.uint8), sent)
    matched = measure_train(train, np.zeros(N, np.uint8), 0.05, r)
    assert abs(np.mean(matched != sent) - 0.05) <= 0.005
    conjugate = measure_train(train, np.ones(N, np.uint8), 0.0, r)
    assert abs(np.mean(conjugate != sent) - 0.5) <= 0.01


def test_conjugate_outcome_independent_of_sent_bit():
    r = rng(7)
    sent = r.integers(0, 2, N, dtype=np.uint8)
    train = PulseTrain(np.ones(N, np.uint8), sent)
    got = measure_train(train, np.zeros(N, np.uint8), 0.0, r)
    assert abs(np.corrcoef(sent, got)[0, 1]) < 0.01


def test_intercept_resend_chain_gives_quarter_error():
    # Alice -> (measure in random basis, re-prepare) -> Bob, noiseless
    r = rng(8)
    n = 2 * N
    x = r.integers(0, 2, n, dtype=np.uint8)
    y = r.integers(0, 2, n, dtype=np.uint8)
    mu = r.integers(0, 2, n, dtype=np.uint8)
    z = r.integers(0, 2, n, dtype=np.uint8)
    chi = measure_train(PulseTrain(y, x), mu, 0.0, r)
    bob = measure_train(PulseTrain(mu, chi), z, 0.0, r)
    sifted = y == z
    assert sifted.sum() >= N * 0.95
    assert abs(np.mean(bob[sifted] != x[sifted]) - 0.25) <= 0.01
