"""Synthetic corpora with known hazard parameters.

Each bug in package ``j`` resolves after an exponential (or Weibull) time
with rate ``baseline_rate * exp(beta . x + q_j)`` and is censored at the
snapshot. Output is a ``Corpus`` that round-trips through the ingestion
formats exactly, because every timestamp is a whole second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .corpus import (
    SECONDS_PER_DAY,
    BugRecord,
    Corpus,
    Resolution,
    SeverityLevel,
    build_corpus,
)
from .ranking import average_ranks, ordinal_ranks

# minor, normal, important, serious, grave, critical
DEFAULT_SEVERITY_MIX = (0.08, 0.55, 0.17, 0.12, 0.05, 0.03)
RESOLUTION_MIX = ((Resolution.CLOSED, 0.85), (Resolution.FORWARDED, 0.10), (Resolution.MERGED, 0.05))
EPOCH = 1_577_836_800  # 2020-01-01T00:00:00Z


@dataclass(frozen=True)
class PlantedPackage:
    """A package with a fixed random effect and install count."""

    name: str
    q: float
    installs: int
    n_bugs: int = 25


@dataclass(frozen=True)
class SynthConfig:
    J: int = 40
    bugs_per_package: int = 25
    bugs_dispersion: float | None = None
    true_beta: tuple[float, ...] = (0.0, 0.0, 0.7, 0.0, 0.0)
    true_sigma: float = 0.5
    baseline_rate: float = 0.1
    censor_horizon_days: float = 365.0
    open_spread_days: float = 0.0
    weibull_shape: float | None = None
    install_shape: float = 1.2
    install_scale: float = 50.0
    severity_mix: tuple[float, ...] = DEFAULT_SEVERITY_MIX
    nmu_link: tuple[float, float, float] | None = None
    planted: tuple[PlantedPackage, ...] = ()
    # (q, n_bugs): adds "pair-many" with n_bugs bugs and "pair-one", a single
    # bug whose duration is the median duration of pair-many
    shrinkage_pair: tuple[float, int] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.J < 1:
            raise ValueError("J must be >= 1")
        positive = (self.baseline_rate, self.censor_horizon_days, self.install_shape, self.install_scale)
        if min(positive) <= 0 or self.true_sigma < 0 or self.open_spread_days < 0:
            raise ValueError("rates and scales must be positive")
        if self.weibull_shape is not None and self.weibull_shape <= 0:
            raise ValueError("weibull_shape must be positive")
        if len(self.true_beta) != 5 or len(self.severity_mix) != 6:
            raise ValueError("need 5 severity effects and a 6-level severity mix")
        if self.bugs_per_package < 0:
            raise ValueError("bugs_per_package must be non-negative")


@dataclass(frozen=True)
class GroundTruth:
    package_ids: tuple[str, ...]
    q_true: np.ndarray
    beta_true: np.ndarray
    sigma_true: float
    u_true: np.ndarray = field(default_factory=lambda: np.empty(0))

    def q_of(self, package_id: str) -> float:
        return float(self.q_true[self.package_ids.index(package_id)])


def _severity_effect(beta: np.ndarray, severity: int) -> float:
    # Normal is the reference level
    idx = {1: 0, 3: 1, 4: 2, 5: 3, 6: 4}.get(severity)
    return 0.0 if idx is None else float(beta[idx])


def true_underproduction(installs: np.ndarray, q: np.ndarray) -> np.ndarray:
    return np.log(average_ranks(installs) / ordinal_ranks(q[None, :])[0])


def _draw_times(rng, rate, n, weibull_shape):
    if weibull_shape is None:
        return rng.exponential(1.0 / rate, size=n)
    # S(t) = exp(-rate t^k): hazard ratios between bugs stay exp(beta x + q)
    return (rng.exponential(1.0, size=n) / rate) ** (1.0 / weibull_shape)


def generate(config: SynthConfig) -> tuple[Corpus, GroundTruth]:
    """Simulate a corpus. Package ``j`` draws from its own RNG substream."""
    root = np.random.SeedSequence(config.seed)
    width = max(4, len(str(config.J)))
    specs = [(f"pkg{j:0{width}d}", None, None, None) for j in range(config.J)]
    specs += [(p.name, p.q, p.installs, p.n_bugs) for p in config.planted]
    if config.shrinkage_pair is not None:
        q_pair, n_many = config.shrinkage_pair
        specs += [("pair-many", q_pair, None, n_many), ("pair-one", q_pair, None, 1)]
    streams = root.spawn(len(specs) + 1)
    global_rng = np.random.Generator(np.random.PCG64(streams[-1]))

    beta = np.asarray(config.true_beta, dtype=float)
    horizon_s = config.censor_horizon_days * SECONDS_PER_DAY
    spread_s = config.open_spread_days * SECONDS_PER_DAY
    snapshot = EPOCH + int(round(spread_s + horizon_s))
    res_kinds = [r for r, _ in RESOLUTION_MIX]
    res_probs = [p for _, p in RESOLUTION_MIX]
    mix = np.asarray(config.severity_mix, dtype=float)
    mix = mix / mix.sum()

    names, q_true, installs = [], [], []
    bugs: list[BugRecord] = []
    next_id = 1
    pair_many_durations: list[float] = []
    for k, (name, q_fixed, inst_fixed, n_fixed) in enumerate(specs):
        rng = np.random.Generator(np.random.PCG64(streams[k]))
        q = float(q_fixed) if q_fixed is not None else float(rng.normal(0.0, config.true_sigma))
        inst = (int(inst_fixed) if inst_fixed is not None
                else int(config.install_scale * (1.0 + rng.pareto(config.install_shape))))
        if n_fixed is not None:
            n_bugs = int(n_fixed)
        elif config.bugs_dispersion is None:
            n_bugs = config.bugs_per_package
        else:
            r = config.bugs_dispersion
            n_bugs = int(rng.negative_binomial(r, r / (r + config.bugs_per_package)))
        names.append(name)
        q_true.append(q)
        installs.append(inst)

        if name == "pair-one":
            # deterministic twin: the typical (median) observed bug of pair-many
            opened = EPOCH
            typical = np.median(pair_many_durations) if pair_many_durations else config.censor_horizon_days
            dur_s = int(round(float(typical) * SECONDS_PER_DAY))
            bugs.append(BugRecord.resolved(next_id, name, float(opened), float(opened + dur_s),
                                           Resolution.CLOSED, SeverityLevel.NORMAL))
            next_id += 1
            continue

        severities = rng.choice(np.arange(1, 7), size=n_bugs, p=mix)
        rates = np.array([config.baseline_rate * math.exp(_severity_effect(beta, s) + q) for s in severities])
        times = _draw_times(rng, rates, n_bugs, config.weibull_shape) if n_bugs else np.empty(0)
        offsets = rng.integers(0, int(spread_s) + 1, size=n_bugs)
        kinds = rng.choice(len(res_kinds), size=n_bugs, p=res_probs)
        for sev, t, off, kind in zip(severities, times, offsets, kinds):
            opened = EPOCH + int(off)
            resolved = opened + int(round(t * SECONDS_PER_DAY))
            if resolved <= snapshot:
                rec = BugRecord.resolved(next_id, name, float(opened), float(resolved),
                                         res_kinds[kind], SeverityLevel(int(sev)))
            else:
                rec = BugRecord.open_at(next_id, name, float(opened), SeverityLevel(int(sev)), float(snapshot))
            bugs.append(rec)
            next_id += 1
            if name == "pair-many" and not rec.censored:
                pair_many_durations.append(rec.duration_days)

    installs_arr = np.asarray(installs)
    q_arr = np.asarray(q_true)
    order = np.argsort(names, kind="stable")
    names = [names[i] for i in order]
    installs_arr, q_arr = installs_arr[order], q_arr[order]
    u_true = true_underproduction(installs_arr, q_arr)

    nmu = {}
    if config.nmu_link is not None:
        b0, b1, theta = config.nmu_link
        mu = np.exp(b0 + b1 * u_true)
        counts = global_rng.negative_binomial(theta, theta / (theta + mu))
        nmu = dict(zip(names, counts.tolist()))
    corpus = build_corpus(bugs, dict(zip(names, installs_arr.tolist())), nmu, float(snapshot))
    truth = GroundTruth(tuple(names), q_arr, beta, config.true_sigma, u_true)
    return corpus, truth
