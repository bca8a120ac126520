import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import central_difference, partial_likelihood_brute, random_survival_rows
from underproduction.survival import CoxParams, DivergentParameters, SurvivalDataset, cox_log_partial_likelihood
from underproduction.survival.cox import RiskSets, linear_predictor


def make(durations, events, severity, pkg, J, coding="dummy"):
    return SurvivalDataset.from_arrays(durations, events, severity, pkg, [f"p{j}" for j in range(J)], coding)


def test_two_events_at_zero_params():
    ds = make([1.0, 2.0], [True, True], [1, 5], [0, 0], 1)
    ll, grad = cox_log_partial_likelihood(CoxParams.zeros(5, 1), ds)
    assert ll == pytest.approx(-math.log(2), abs=1e-15)
    assert grad.shape == (6,)


def test_no_events_is_zero():
    ds = make([1.0, 2.0, 3.0], [False] * 3, [2, 3, 4], [0, 1, 1], 2)
    ll, grad = cox_log_partial_likelihood(CoxParams(np.ones(5), np.array([0.3, -1.0])), ds)
    assert ll == 0.0 and np.all(grad == 0.0)


def test_three_row_hand_dataset():
    ds = make([3.0, 1.0, 2.0], [True, True, False], [1, 2, 3], [0, 0, 0], 1)
    params = CoxParams([0.5, 0, 0, 0, 0], [0.0])
    eta = linear_predictor(params, ds)
    ll, _ = cox_log_partial_likelihood(params, ds)
    assert abs(ll - partial_likelihood_brute(ds.durations, ds.events, eta)) <= 1e-12
    # by hand: the normal row closes at 1 with all three at risk; the minor row is alone at 3
    assert ll == pytest.approx(-math.log(math.exp(0.5) + 2))


def test_risk_set_groups():
    rs = RiskSets.from_durations(np.array([5.0, 3.0, 3.0, 3.0, 1.0]), np.array([False, True, False, True, True]))
    assert rs.end.tolist() == [4, 5]
    assert rs.ptr.tolist() == [0, 2, 3]
    assert rs.event_rows.tolist() == [1, 3, 4]


@pytest.mark.parametrize("ties", ["efron", "breslow"])
@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed, ties):
    rng = np.random.default_rng(seed)
    n, J = int(rng.integers(1, 30)), int(rng.integers(1, 6))
    ds = make(*random_survival_rows(rng, n, J), J)
    params = CoxParams(rng.normal(0, 1, 5), rng.normal(0, 1, J))
    eta = linear_predictor(params, ds)
    ll, _ = cox_log_partial_likelihood(params, ds, ties)
    ref = partial_likelihood_brute(ds.durations.tolist(), ds.events.tolist(), eta.tolist(), ties)
    assert abs(ll - ref) <= 1e-12 * max(1.0, abs(ref))


@pytest.mark.parametrize("ties", ["efron", "breslow"])
@pytest.mark.parametrize("coding", ["dummy", "ordinal"])
@pytest.mark.parametrize("seed", range(10))
def test_gradient_matches_finite_differences(seed, ties, coding):
    rng = np.random.default_rng(100 + seed)
    n, J = int(rng.integers(2, 50)), int(rng.integers(1, 10))
    ds = make(*random_survival_rows(rng, n, J), J, coding)
    v = rng.normal(0, 0.7, ds.p + J)

    def f(x):
        return cox_log_partial_likelihood(CoxParams(x[:ds.p], x[ds.p:]), ds, ties)[0]

    _, grad = cox_log_partial_likelihood(CoxParams(v[:ds.p], v[ds.p:]), ds, ties)
    fd = central_difference(f, v)
    assert np.max(np.abs(grad - fd)) <= 1e-4 * max(1.0, np.max(np.abs(fd)))


def test_efron_equals_breslow_without_ties():
    rng = np.random.default_rng(3)
    n = 25
    ds = make(rng.permutation(n) + 1.0, rng.random(n) < 0.6, rng.integers(1, 7, n), rng.integers(0, 3, n), 3)
    params = CoxParams(rng.normal(size=5), rng.normal(size=3))
    a = cox_log_partial_likelihood(params, ds, "efron")
    b = cox_log_partial_likelihood(params, ds, "breslow")
    assert a[0] == pytest.approx(b[0], rel=1e-13)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-14)


def test_shift_of_all_q_is_invisible():
    rng = np.random.default_rng(5)
    ds = make(*random_survival_rows(rng, 30, 4), 4)
    params = CoxParams(rng.normal(size=5), rng.normal(size=4))
    shifted = CoxParams(params.beta, params.q + 3.7)
    assert cox_log_partial_likelihood(params, ds)[0] == pytest.approx(cox_log_partial_likelihood(shifted, ds)[0])
    # and the q-gradient sums to zero accordingly
    assert cox_log_partial_likelihood(params, ds)[1][5:].sum() == pytest.approx(0.0, abs=1e-10)


def test_late_censored_rows_only_enter_risk_sets():
    ds = make([1.0, 2.0, 3.0], [True, True, False], [2, 2, 2], [0, 0, 0], 1)
    ll0, _ = cox_log_partial_likelihood(CoxParams.zeros(5, 1), ds)
    assert ll0 == pytest.approx(-math.log(3) - math.log(2))
    # censored row removed: each risk set loses one member
    ll1, _ = cox_log_partial_likelihood(CoxParams.zeros(5, 1), ds.subset(ds.events))
    assert ll1 == pytest.approx(-math.log(2))


def test_unknown_ties_rejected():
    ds = make([1.0], [True], [2], [0], 1)
    with pytest.raises(ValueError):
        cox_log_partial_likelihood(CoxParams.zeros(5, 1), ds, "exact")


def test_divergent_parameters():
    ds = make([1.0, 2.0], [True, True], [1, 2], [0, 0], 1)
    with pytest.raises(DivergentParameters):
        cox_log_partial_likelihood(CoxParams([np.inf, 0, 0, 0, 0], [0.0]), ds)


def test_large_linear_predictor_is_stable():
    ds = make([1.0, 2.0, 3.0], [True, True, True], [2, 2, 2], [0, 1, 2], 3)
    ll, grad = cox_log_partial_likelihood(CoxParams(np.zeros(5), np.array([800.0, 0.0, -800.0])), ds)
    assert np.isfinite(ll) and np.all(np.isfinite(grad))
    assert ll <= 0


def test_params_vector_round_trip():
    p = CoxParams([1.0, 2.0], [3.0, 4.0, 5.0], 0.25)
    back = CoxParams.from_vector(p.to_vector(), 2)
    assert back.beta.tolist() == [1.0, 2.0] and back.q.tolist() == [3.0, 4.0, 5.0] and back.sigma == 0.25
    with pytest.raises(ValueError):
        CoxParams([0.0], [0.0], 0.0)


@given(st.integers(0, 2**32 - 1))
def test_loglik_is_nonpositive(seed):
    rng = np.random.default_rng(seed)
    ds = make(*random_survival_rows(rng, 15, 3), 3)
    ll, _ = cox_log_partial_likelihood(CoxParams(rng.normal(size=5), rng.normal(size=3)), ds)
    assert ll <= 1e-12
