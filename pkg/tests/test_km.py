import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import km_brute
from underproduction.corpus import SeverityLevel
from underproduction.survival import SurvivalDataset, kaplan_meier
from underproduction.survival.km import product_limit


def dataset(durations, events, severity=None):
    n = len(durations)
    severity = [2] * n if severity is None else severity
    return SurvivalDataset.from_arrays(durations, events, severity, [0] * n, ["p"])


def test_all_censored_is_flat():
    (curve,) = kaplan_meier(dataset([1.0, 2.0, 3.0], [False] * 3))
    assert np.all(curve.survival_at([0.5, 2.0, 100.0]) == 1.0)


def test_single_event():
    (curve,) = kaplan_meier(dataset([5.0], [True]))
    assert curve.survival_at([0.0, 4.999]).tolist() == [1.0, 1.0]
    assert curve.survival_at([5.0, 50.0]).tolist() == [0.0, 0.0]


def test_hand_product_limit():
    (curve,) = kaplan_meier(dataset([1.0, 2.0, 3.0], [True, False, True]))
    assert curve.steps == [(1.0, pytest.approx(2 / 3)), (3.0, 0.0)]
    assert curve.survival_at(2.5) == pytest.approx(2 / 3)
    assert curve.n_risk.tolist() == [3, 1]


def test_tied_deaths_and_censoring_at_same_time():
    # a censored row at an event time is still at risk for that event
    (curve,) = kaplan_meier(dataset([2.0, 2.0, 2.0, 4.0], [True, True, False, True]))
    assert curve.survival.tolist() == pytest.approx([0.5, 0.0])
    assert curve.n_event.tolist() == [2, 1]


def test_stratified_has_one_curve_per_level():
    curves = kaplan_meier(dataset([1.0, 2.0, 3.0], [True, True, True], [1, 4, 4]), stratify_by_severity=True)
    assert [c.stratum for c in curves] == [lvl.label for lvl in SeverityLevel]
    by = {c.stratum: c for c in curves}
    assert by["minor"].survival.tolist() == [0.0]
    assert by["serious"].survival.tolist() == [0.5, 0.0]
    assert len(by["critical"].times) == 0 and by["critical"].survival_at(10.0) == 1.0


@given(st.lists(st.tuples(st.integers(1, 8), st.booleans()), min_size=1, max_size=20))
def test_matches_brute_force(rows):
    d = [float(a) for a, _ in rows]
    e = [b for _, b in rows]
    curve = product_limit(d, e)
    for t in np.arange(0.0, 9.5, 0.5):
        assert abs(curve.survival_at(t) - km_brute(d, e, t)) <= 1e-12


@given(st.lists(st.tuples(st.integers(1, 8), st.booleans()), min_size=1, max_size=20))
def test_monotone_and_bounded(rows):
    curve = product_limit([a for a, _ in rows], [b for _, b in rows])
    s = curve.survival
    assert np.all((s >= 0) & (s <= 1))
    assert np.all(np.diff(s) <= 0)
