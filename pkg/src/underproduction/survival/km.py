from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..corpus import SeverityLevel
from .dataset import SurvivalDataset


@dataclass(frozen=True)
class KMCurve:
    """Product-limit survival curve; ``survival[i]`` holds on ``[times[i], times[i+1])``."""

    stratum: str
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    survival: np.ndarray = field(default_factory=lambda: np.empty(0))
    n_risk: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    n_event: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def steps(self) -> list[tuple[float, float]]:
        return list(zip(self.times.tolist(), self.survival.tolist()))

    def survival_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t, side="right")
        padded = np.concatenate([[1.0], self.survival])
        return padded[idx]


def product_limit(durations, events, stratum: str = "all") -> KMCurve:
    durations = np.asarray(durations, dtype=float)
    events = np.asarray(events, dtype=bool)
    if durations.size == 0:
        return KMCurve(stratum)
    times = np.unique(durations[events])
    if times.size == 0:
        return KMCurve(stratum)
    sorted_d = np.sort(durations)
    n_risk = durations.size - np.searchsorted(sorted_d, times, side="left")
    ev_sorted = np.sort(durations[events])
    n_event = np.searchsorted(ev_sorted, times, side="right") - np.searchsorted(ev_sorted, times, side="left")
    survival = np.cumprod(1.0 - n_event / n_risk)
    return KMCurve(stratum, times, survival, n_risk.astype(int), n_event.astype(int))


def kaplan_meier(dataset: SurvivalDataset, stratify_by_severity: bool = False) -> list[KMCurve]:
    """Kaplan-Meier curves, one per severity level or a single ``"all"`` curve.

    Empty strata produce empty curves (survival identically 1).
    """
    if not stratify_by_severity:
        return [product_limit(dataset.durations, dataset.events, "all")]
    curves = []
    for level in SeverityLevel:
        mask = dataset.severity == int(level)
        curves.append(product_limit(dataset.durations[mask], dataset.events[mask], level.label))
    return curves
