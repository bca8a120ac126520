import numpy as np
import pytest

from underproduction.survival import effective_sample_size, split_rhat


def ar1(rng, phi, m, n):
    x = np.empty((m, n))
    x[:, 0] = rng.normal(size=m) / np.sqrt(1 - phi**2)
    eps = rng.normal(size=(m, n))
    for t in range(1, n):
        x[:, t] = phi * x[:, t - 1] + eps[:, t]
    return x


def test_iid_chains_mix():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 1000))
    assert abs(split_rhat(x)[0] - 1.0) < 0.01
    assert effective_sample_size(x)[0] == pytest.approx(4000, rel=0.15)


def test_shifted_chains_flagged():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(4, 500))
    x[0] += 3.0
    assert split_rhat(x)[0] > 1.1


def test_trend_within_chain_flagged_by_split():
    # every chain drifts the same way: plain R-hat misses it, split R-hat does not
    rng = np.random.default_rng(2)
    x = rng.normal(size=(4, 500)) + np.linspace(0, 4, 500)
    assert split_rhat(x)[0] > 1.1


def test_ar1_ess_matches_theory():
    rng = np.random.default_rng(3)
    phi = 0.8
    x = ar1(rng, phi, 4, 5000)
    expected = 4 * 5000 * (1 - phi) / (1 + phi)
    assert effective_sample_size(x)[0] == pytest.approx(expected, rel=0.2)


def test_three_dimensional_input_and_constants():
    rng = np.random.default_rng(4)
    x = np.stack([rng.normal(size=(2, 100)), np.full((2, 100), 7.0)], axis=-1)
    assert split_rhat(x).shape == (2,)
    assert split_rhat(x)[1] == 1.0
    assert effective_sample_size(x).shape == (2,)


def test_too_short_rejected():
    with pytest.raises(ValueError):
        split_rhat(np.zeros((2, 3)))
