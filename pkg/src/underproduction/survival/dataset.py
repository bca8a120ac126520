from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..corpus import Corpus, SeverityLevel

DUMMY_LEVELS = (
    SeverityLevel.MINOR,
    SeverityLevel.IMPORTANT,
    SeverityLevel.SERIOUS,
    SeverityLevel.GRAVE,
    SeverityLevel.CRITICAL,
)
CODINGS = ("dummy", "ordinal")


def severity_design(severity: np.ndarray, coding: str = "dummy") -> np.ndarray:
    """Design matrix for severity codes (1..6), Normal as reference level.

    ``dummy`` gives five indicator columns; ``ordinal`` one column holding
    ``code - 2`` so that Normal maps to zero.
    """
    severity = np.asarray(severity, dtype=np.int64)
    if coding == "dummy":
        return np.stack([(severity == int(lvl)).astype(float) for lvl in DUMMY_LEVELS], axis=1).reshape(-1, 5)
    if coding == "ordinal":
        return (severity - int(SeverityLevel.NORMAL)).astype(float).reshape(-1, 1)
    raise ValueError(f"unknown severity coding {coding!r}")


def beta_names(coding: str = "dummy") -> list[str]:
    if coding == "dummy":
        return [f"beta_{lvl.label}" for lvl in DUMMY_LEVELS]
    return ["beta_severity"]


@dataclass(frozen=True, eq=False)
class SurvivalDataset:
    """Right-censored bug lifetimes, sorted by descending duration.

    Ties in duration keep the order they were given in.
    """

    durations: np.ndarray
    events: np.ndarray
    X: np.ndarray
    severity: np.ndarray
    package_index: np.ndarray
    package_ids: tuple[str, ...]
    coding: str = "dummy"

    def __post_init__(self):
        n = len(self.durations)
        if not (len(self.events) == len(self.severity) == len(self.package_index) == self.X.shape[0] == n):
            raise ValueError("row arrays have mismatched lengths")
        if n and not np.all(self.durations > 0):
            raise ValueError("durations must be positive")
        if n and np.any(np.diff(self.durations) > 0):
            raise ValueError("rows must be sorted by descending duration")
        if n and (self.package_index.min() < 0 or self.package_index.max() >= self.J):
            raise ValueError("package_index out of range")
        for a in (self.durations, self.events, self.X, self.severity, self.package_index):
            a.flags.writeable = False

    @classmethod
    def from_arrays(cls, durations, events, severity, package_index, package_ids, coding: str = "dummy"):
        durations = np.asarray(durations, dtype=float)
        order = np.argsort(-durations, kind="stable")
        severity = np.asarray(severity, dtype=np.int64)[order]
        return cls(
            durations=durations[order],
            events=np.asarray(events, dtype=bool)[order],
            X=severity_design(severity, coding),
            severity=severity,
            package_index=np.asarray(package_index, dtype=np.int64)[order],
            package_ids=tuple(package_ids),
            coding=coding,
        )

    @classmethod
    def from_corpus(cls, corpus: Corpus, coding: str = "dummy") -> "SurvivalDataset":
        bugs = sorted(corpus.bugs, key=lambda b: b.bug_id)
        return cls.from_arrays(
            [b.duration_days for b in bugs],
            [not b.censored for b in bugs],
            [int(b.severity) for b in bugs],
            [corpus.index_of(b.package_id) for b in bugs],
            corpus.package_ids,
            coding,
        )

    @property
    def n(self) -> int:
        return len(self.durations)

    @property
    def J(self) -> int:
        return len(self.package_ids)

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def n_events(self) -> int:
        return int(self.events.sum())

    @property
    def bugs_per_package(self) -> np.ndarray:
        return np.bincount(self.package_index, minlength=self.J)

    @property
    def beta_names(self) -> list[str]:
        return beta_names(self.coding)

    def subset(self, mask) -> "SurvivalDataset":
        mask = np.asarray(mask, dtype=bool)
        return SurvivalDataset(
            self.durations[mask].copy(), self.events[mask].copy(), self.X[mask].copy(),
            self.severity[mask].copy(), self.package_index[mask].copy(), self.package_ids, self.coding,
        )
