"""Importance and quality ranks, the underproduction factor, and alignment classes.

Rank 1 is the lowest install count or the worst quality. The factor for
package ``j`` in draw ``d`` is ``log(ri_j / rq_jd)``: positive when a package
is more important than it is good.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .corpus import Corpus


class Alignment(enum.Enum):
    ALIGNED = "aligned"
    UNDERPRODUCED = "underproduced"
    OVERPRODUCED = "overproduced"


def average_ranks(values) -> np.ndarray:
    """Ascending ranks; tied values share the mean of their positions."""
    return rankdata(np.asarray(values), method="average")


def ordinal_ranks(q) -> np.ndarray:
    """Per-row ascending ranks 1..N of a ``(D, N)`` matrix.

    Ties go to the lower column index first, which is lexicographic
    ``package_id`` order when columns follow the corpus.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    order = np.argsort(q, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(q.shape[0])[:, None]
    ranks[rows, order] = np.arange(1, q.shape[1] + 1)
    return ranks


def rank_importance(corpus_or_installs) -> np.ndarray:
    if isinstance(corpus_or_installs, Corpus):
        installs = [p.installs for p in corpus_or_installs.packages]
    else:
        installs = corpus_or_installs
    if len(installs) == 0:
        raise ValueError("cannot rank an empty corpus")
    return average_ranks(installs)


def rank_quality_per_draw(posterior_or_q) -> np.ndarray:
    """``D x N`` integer rank matrix, each row a permutation of ``1..N``."""
    q = getattr(posterior_or_q, "q", posterior_or_q)
    return ordinal_ranks(q)


@dataclass(frozen=True)
class UnderproductionResult:
    package_ids: tuple[str, ...]
    ri: np.ndarray
    rq_mean: np.ndarray
    U_mean: np.ndarray
    U_median: np.ndarray
    U_lo: np.ndarray
    U_hi: np.ndarray
    U_q25: np.ndarray
    U_q75: np.ndarray
    classes: tuple[Alignment, ...]

    @property
    def N(self) -> int:
        return len(self.package_ids)

    def classify(self, package_id: str) -> Alignment:
        return self.classes[self.package_ids.index(package_id)]


def classify(lo: float, hi: float) -> Alignment:
    if lo > 0:
        return Alignment.UNDERPRODUCED
    if hi < 0:
        return Alignment.OVERPRODUCED
    return Alignment.ALIGNED


def underproduction_draws(ri, rq_draws) -> np.ndarray:
    ri = np.asarray(ri, dtype=float)
    rq = np.atleast_2d(np.asarray(rq_draws, dtype=float))
    return np.log(ri[None, :]) - np.log(rq)


def underproduction_factor(ri, rq_draws, package_ids=None, level: float = 0.95) -> UnderproductionResult:
    """Summaries of ``log(ri / rq)`` across draws with percentile intervals."""
    U = underproduction_draws(ri, rq_draws)
    N = U.shape[1]
    if package_ids is None:
        package_ids = tuple(str(i) for i in range(N))
    tail = 50 * (1 - level)
    lo, q25, med, q75, hi = np.percentile(U, [tail, 25, 50, 75, 100 - tail], axis=0)
    classes = tuple(classify(a, b) for a, b in zip(lo, hi))
    return UnderproductionResult(
        package_ids=tuple(package_ids),
        ri=np.asarray(ri, dtype=float),
        rq_mean=np.asarray(rq_draws, dtype=float).reshape(-1, N).mean(axis=0),
        U_mean=U.mean(axis=0),
        U_median=med,
        U_lo=lo,
        U_hi=hi,
        U_q25=q25,
        U_q75=q75,
        classes=classes,
    )


def misalignment_summary(result: UnderproductionResult) -> dict[str, int]:
    counts = {a.value: 0 for a in Alignment}
    for c in result.classes:
        counts[c.value] += 1
    return counts


def underproduction(corpus: Corpus, posterior) -> UnderproductionResult:
    """Rank a corpus against a posterior whose packages match the corpus."""
    if list(posterior.package_ids) != corpus.package_ids:
        raise ValueError("posterior packages do not match the corpus")
    return underproduction_factor(rank_importance(corpus), rank_quality_per_draw(posterior), corpus.package_ids)
