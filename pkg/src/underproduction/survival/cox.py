"""Cox log partial likelihood with Efron or Breslow ties, plus its gradient.

Rows are assumed sorted by descending duration, so the risk set of any
event time is a prefix of the rows. The baseline hazard never appears.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dataset import SurvivalDataset

TIES = ("efron", "breslow")


class DivergentParameters(FloatingPointError):
    """The linear predictor overflowed; parameters have run off to infinity."""


@dataclass(frozen=True)
class CoxParams:
    beta: np.ndarray
    q: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float))
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def zeros(cls, p: int, J: int, sigma: float = 1.0) -> "CoxParams":
        return cls(np.zeros(p), np.zeros(J), sigma)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.beta, self.q, [self.sigma]])

    @classmethod
    def from_vector(cls, v, p: int) -> "CoxParams":
        v = np.asarray(v, dtype=float)
        return cls(v[:p], v[p:-1], float(v[-1]))


@dataclass(frozen=True, eq=False)
class RiskSets:
    """Event-time tie groups for a sorted dataset.

    Group ``g`` has risk set ``rows[:end[g]]`` and event rows
    ``event_rows[ptr[g]:ptr[g+1]]``. Groups run from the latest event time
    to the earliest, so ``end`` is increasing.
    """

    end: np.ndarray
    ptr: np.ndarray
    event_rows: np.ndarray

    @classmethod
    def from_durations(cls, durations: np.ndarray, events: np.ndarray) -> "RiskSets":
        n = len(durations)
        ends, ptr, rows = [], [0], []
        i = 0
        while i < n:
            j = i
            while j + 1 < n and durations[j + 1] == durations[i]:
                j += 1
            tied_events = [k for k in range(i, j + 1) if events[k]]
            if tied_events:
                ends.append(j + 1)
                rows.extend(tied_events)
                ptr.append(len(rows))
            i = j + 1
        return cls(np.asarray(ends, dtype=np.int64), np.asarray(ptr, dtype=np.int64),
                   np.asarray(rows, dtype=np.int64))

    @property
    def n_groups(self) -> int:
        return len(self.end)


_risk_cache: dict[int, tuple[SurvivalDataset, RiskSets]] = {}


def risk_sets(dataset: SurvivalDataset) -> RiskSets:
    hit = _risk_cache.get(id(dataset))
    if hit is not None and hit[0] is dataset:
        return hit[1]
    rs = RiskSets.from_durations(dataset.durations, dataset.events)
    if len(_risk_cache) > 64:
        _risk_cache.clear()
    _risk_cache[id(dataset)] = (dataset, rs)
    return rs


@numba.njit(cache=True, nogil=True)
def _loglik(eta, end, ptr, event_rows, efron):
    # Risk sets are prefixes; csum is kept relative to the running max m of
    # the prefix so no risk set underflows however spread out eta is.
    ll = 0.0
    csum = 0.0
    m = -np.inf
    row = 0
    for g in range(end.shape[0]):
        while row < end[g]:
            if eta[row] > m:
                csum *= np.exp(m - eta[row])
                m = eta[row]
            csum += np.exp(eta[row] - m)
            row += 1
        d = ptr[g + 1] - ptr[g]
        sd = 0.0
        for k in range(ptr[g], ptr[g + 1]):
            r = event_rows[k]
            ll += eta[r] - m
            sd += np.exp(eta[r] - m)
        if efron and d > 1:
            for l in range(d):
                ll -= np.log(csum - (l / d) * sd)
        else:
            ll -= d * np.log(csum)
    return ll


@numba.njit(cache=True, nogil=True)
def _loglik_grad(eta, end, ptr, event_rows, efron):
    n = eta.shape[0]
    grad = np.zeros(n)
    G = end.shape[0]
    if G == 0:
        return 0.0, grad
    a = np.zeros(G)
    mg = np.empty(G)
    ll = 0.0
    csum = 0.0
    m = -np.inf
    row = 0
    for g in range(G):
        while row < end[g]:
            if eta[row] > m:
                csum *= np.exp(m - eta[row])
                m = eta[row]
            csum += np.exp(eta[row] - m)
            row += 1
        mg[g] = m
        d = ptr[g + 1] - ptr[g]
        sd = 0.0
        for k in range(ptr[g], ptr[g + 1]):
            r = event_rows[k]
            ll += eta[r] - m
            sd += np.exp(eta[r] - m)
            grad[r] += 1.0
        if efron and d > 1:
            b = 0.0
            for l in range(d):
                den = csum - (l / d) * sd
                ll -= np.log(den)
                a[g] += 1.0 / den
                b += (l / d) / den
            for k in range(ptr[g], ptr[g + 1]):
                r = event_rows[k]
                grad[r] += np.exp(eta[r] - m) * b
        else:
            ll -= d * np.log(csum)
            a[g] = d / csum
    # A row belongs to the risk set of every group whose prefix reaches past
    # it. acc holds sum_g a_g exp(ref - m_g) with ref the smallest m_g so far.
    acc = 0.0
    ref = mg[G - 1]
    g = G - 1
    for r in range(end[G - 1] - 1, -1, -1):
        while g >= 0 and end[g] > r:
            acc = acc * np.exp(mg[g] - ref) + a[g]
            ref = mg[g]
            g -= 1
        grad[r] -= np.exp(eta[r] - ref) * acc
    return ll, grad


def _check_ties(ties: str) -> bool:
    if ties not in TIES:
        raise ValueError(f"ties must be one of {TIES}, got {ties!r}")
    return ties == "efron"


def linear_predictor(params: CoxParams, dataset: SurvivalDataset) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        eta = dataset.X @ params.beta + params.q[dataset.package_index]
    if not np.all(np.isfinite(eta)):
        raise DivergentParameters("non-finite linear predictor")
    return eta


def loglik_eta(eta: np.ndarray, dataset: SurvivalDataset, ties: str = "efron") -> float:
    rs = risk_sets(dataset)
    return float(_loglik(np.ascontiguousarray(eta, dtype=float), rs.end, rs.ptr, rs.event_rows, _check_ties(ties)))


def cox_log_partial_likelihood(params: CoxParams, dataset: SurvivalDataset, ties: str = "efron"):
    """Log partial likelihood and its gradient with respect to ``(beta, q)``.

    Returns ``(value, gradient)`` with the gradient laid out as
    ``concatenate([d/d beta, d/d q])``.
    """
    efron = _check_ties(ties)
    eta = linear_predictor(params, dataset)
    rs = risk_sets(dataset)
    ll, g_eta = _loglik_grad(np.ascontiguousarray(eta), rs.end, rs.ptr, rs.event_rows, efron)
    g_beta = dataset.X.T @ g_eta
    g_q = np.bincount(dataset.package_index, weights=g_eta, minlength=dataset.J)
    return float(ll), np.concatenate([g_beta, g_q])
