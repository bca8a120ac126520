"""Hierarchical Cox model posterior and its adaptive Metropolis-within-Gibbs sampler.

Model: Cox partial likelihood with linear predictor ``X beta + q[package]``,
``beta_p ~ Normal(0, beta_sd)``, ``q_j ~ Normal(0, sigma)``,
``sigma ~ HalfNormal(sigma_scale)``. The sampler works on ``log sigma``.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np

from .cox import CoxParams, _check_ties, _loglik, cox_log_partial_likelihood, risk_sets
from .dataset import SurvivalDataset
from .diagnostics import effective_sample_size, split_rhat

log = logging.getLogger(__name__)

RHAT_TARGET = 1.05
RHAT_WARN = 1.1
_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class Priors:
    beta_sd: float = 5.0
    sigma_scale: float = 1.0


@dataclass(frozen=True)
class SamplerConfig:
    draws: int = 4000
    chains: int = 4
    warmup: int = 1000
    seed: int = 0
    ties: str = "efron"
    n_jobs: int = 1

    def __post_init__(self):
        if self.chains < 1 or self.draws < self.chains:
            raise ValueError("need at least one draw per chain")
        if self.draws % self.chains:
            raise ValueError("draws must be a multiple of chains")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        _check_ties(self.ties)

    @property
    def kept_per_chain(self) -> int:
        return self.draws // self.chains


def _normal_logpdf(x, sd):
    x = np.asarray(x, dtype=float)
    return float(np.sum(-0.5 * (x / sd) ** 2 - math.log(sd) - 0.5 * _LOG_2PI))


def log_prior(params: CoxParams, priors: Priors = Priors()) -> float:
    """Log prior density including the Jacobian of the ``log sigma`` transform."""
    s = params.sigma
    lp = _normal_logpdf(params.beta, priors.beta_sd)
    lp += _normal_logpdf(params.q, s)
    lp += math.log(2.0) + _normal_logpdf(s, priors.sigma_scale)
    return lp + math.log(s)


def log_posterior(params: CoxParams, dataset: SurvivalDataset, priors: Priors = Priors(),
                  ties: str = "efron", with_grad: bool = False):
    """Unnormalized log posterior on ``(beta, q, log sigma)``.

    With ``with_grad`` returns ``(value, gradient)``, the gradient ordered
    as ``(beta, q, log sigma)``.
    """
    ll, g = cox_log_partial_likelihood(params, dataset, ties)
    value = ll + log_prior(params, priors)
    if not with_grad:
        return value
    p, s = dataset.p, params.sigma
    g_beta = g[:p] - params.beta / priors.beta_sd**2
    g_q = g[p:] - params.q / s**2
    # d/d log s of [-J log s - sum q^2 / 2 s^2 - s^2 / 2 c^2 + log s]
    g_log_s = -dataset.J + np.sum(params.q**2) / s**2 - s**2 / priors.sigma_scale**2 + 1.0
    return value, np.concatenate([g_beta, g_q, [g_log_s]])


@numba.njit(cache=True, nogil=True)
def _q_sweep(eta, q, sigma, steps, z, logu, pkg_ptr, pkg_rows, end, ptr, event_rows, efron, ll):
    J = q.shape[0]
    accepted = np.zeros(J, dtype=np.bool_)
    inv2s2 = 0.5 / (sigma * sigma)
    for j in range(J):
        a = pkg_ptr[j]
        b = pkg_ptr[j + 1]
        if a == b:
            # no bugs: the full conditional is the prior
            q[j] = sigma * z[j]
            accepted[j] = True
            continue
        delta = steps[j] * z[j]
        new = q[j] + delta
        for k in range(a, b):
            eta[pkg_rows[k]] += delta
        ll_new = _loglik(eta, end, ptr, event_rows, efron)
        log_ratio = ll_new - ll - (new * new - q[j] * q[j]) * inv2s2
        if logu[j] < log_ratio:
            q[j] = new
            ll = ll_new
            accepted[j] = True
        else:
            for k in range(a, b):
                eta[pkg_rows[k]] -= delta
    return ll, accepted


@numba.njit(cache=True, nogil=True)
def _beta_sweep(eta, beta, beta_sd, steps, z, logu, X, end, ptr, event_rows, efron, ll):
    p = beta.shape[0]
    n = eta.shape[0]
    accepted = np.zeros(p, dtype=np.bool_)
    inv2v = 0.5 / (beta_sd * beta_sd)
    for c in range(p):
        delta = steps[c] * z[c]
        new = beta[c] + delta
        for i in range(n):
            eta[i] += delta * X[i, c]
        ll_new = _loglik(eta, end, ptr, event_rows, efron)
        log_ratio = ll_new - ll - (new * new - beta[c] * beta[c]) * inv2v
        if logu[c] < log_ratio:
            beta[c] = new
            ll = ll_new
            accepted[c] = True
        else:
            for i in range(n):
                eta[i] -= delta * X[i, c]
    return ll, accepted


def _log_sigma_target(log_s: float, q: np.ndarray, priors: Priors) -> float:
    s = math.exp(log_s)
    J = q.shape[0]
    return -J * log_s - float(q @ q) / (2 * s * s) - s * s / (2 * priors.sigma_scale**2) + log_s


class _Chain:
    """State and adaptation for one chain. Owns its RNG stream."""

    def __init__(self, dataset: SurvivalDataset, priors: Priors, efron: bool, rng: np.random.Generator):
        self.ds = dataset
        self.priors = priors
        self.efron = efron
        self.rng = rng
        rs = risk_sets(dataset)
        self.rs = (rs.end, rs.ptr, rs.event_rows)
        order = np.argsort(dataset.package_index, kind="stable")
        counts = dataset.bugs_per_package
        self.pkg_rows = order.astype(np.int64)
        self.pkg_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

        p, J = dataset.p, dataset.J
        ev = dataset.events
        self.X = np.ascontiguousarray(dataset.X)
        col_info = (dataset.X**2)[ev].sum(axis=0) + 1.0
        self.beta_log_step = np.log(2.4 / np.sqrt(col_info))
        events_per_pkg = np.bincount(dataset.package_index[ev], minlength=J)
        self.q_log_step = np.log(2.4 / np.sqrt(events_per_pkg + 1.0))
        self.s_log_step = math.log(0.3)

        self.beta = rng.normal(0.0, 0.5, size=p)
        self.q = rng.normal(0.0, 0.5, size=J)
        self.log_s = math.log(0.5) + rng.normal(0.0, 0.5)
        self.eta = self._eta()
        self.ll = self._ll(self.eta)

    def _eta(self) -> np.ndarray:
        return np.ascontiguousarray(self.ds.X @ self.beta + self.q[self.ds.package_index])

    def _ll(self, eta) -> float:
        return float(_loglik(eta, *self.rs, self.efron))

    def step(self, t: int | None) -> tuple[np.ndarray, np.ndarray, bool]:
        """One Gibbs scan. ``t`` is the warmup iteration (1-based) or None once frozen."""
        rng, p, J = self.rng, self.ds.p, self.ds.J
        z_beta = rng.standard_normal(p)
        u_beta = np.log(rng.random(p))
        z_q = rng.standard_normal(J)
        u_q = np.log(rng.random(J))
        z_shift = rng.standard_normal()
        z_s = rng.standard_normal()
        u_s = math.log(rng.random())

        # severity effects: a systematic scan of single-coordinate moves
        self.ll, acc_beta = _beta_sweep(self.eta, self.beta, self.priors.beta_sd, np.exp(self.beta_log_step),
                                        z_beta, u_beta, self.X, *self.rs, self.efron, self.ll)

        # package effects, one coordinate at a time
        s = math.exp(self.log_s)
        steps = np.exp(self.q_log_step)
        self.ll, acc_q = _q_sweep(self.eta, self.q, s, steps, z_q, u_q, self.pkg_ptr, self.pkg_rows,
                                  *self.rs, self.efron, self.ll)
        # The partial likelihood ignores a common shift of every q_j, so the
        # shift's full conditional comes from the prior alone.
        self.q += -self.q.mean() + s / math.sqrt(J) * z_shift
        # rebuild from scratch so accepted/rejected increments cannot drift
        self.eta = self._eta()
        self.ll = self._ll(self.eta)

        # log sigma
        new = self.log_s + math.exp(self.s_log_step) * z_s
        log_ratio = _log_sigma_target(new, self.q, self.priors) - _log_sigma_target(self.log_s, self.q, self.priors)
        acc_s = bool(u_s < log_ratio)
        if acc_s:
            self.log_s = new

        if t is not None:
            gamma = t**-0.6
            self.beta_log_step += gamma * (acc_beta.astype(float) - 0.44)
            self.q_log_step += gamma * (acc_q.astype(float) - 0.44)
            self.s_log_step += gamma * (acc_s - 0.44)
        return acc_beta, acc_q, acc_s

    def state(self) -> np.ndarray:
        return np.concatenate([self.beta, self.q, [math.exp(self.log_s)]])

    def run(self, warmup: int, kept: int) -> tuple[np.ndarray, dict]:
        for t in range(1, warmup + 1):
            self.step(t)
        out = np.empty((kept, self.ds.p + self.ds.J + 1))
        acc = np.zeros(3)
        for i in range(kept):
            a_b, a_q, a_s = self.step(None)
            acc += (a_b.mean(), a_q.mean() if a_q.size else 1.0, a_s)
            out[i] = self.state()
        rates = dict(zip(("beta", "q", "log_sigma"), (acc / max(kept, 1)).tolist()))
        return out, rates


@dataclass
class PosteriorDraws:
    """Joint posterior draws, one row per draw, columns ``beta_*, q_<pkg>, sigma``."""

    draws: np.ndarray
    beta_names: list[str]
    package_ids: list[str]
    chains: int
    warmup: int
    seed: int
    diagnostics: dict = field(default_factory=dict)
    ties: str = "efron"
    coding: str = "dummy"

    @property
    def D(self) -> int:
        return self.draws.shape[0]

    @property
    def p(self) -> int:
        return len(self.beta_names)

    @property
    def columns(self) -> list[str]:
        return self.beta_names + [f"q_{pid}" for pid in self.package_ids] + ["sigma"]

    @property
    def beta(self) -> np.ndarray:
        return self.draws[:, : self.p]

    @property
    def q(self) -> np.ndarray:
        return self.draws[:, self.p : -1]

    @property
    def sigma(self) -> np.ndarray:
        return self.draws[:, -1]

    @property
    def converged(self) -> bool:
        return self.diagnostics.get("converged", True)

    def column(self, name: str) -> np.ndarray:
        return self.draws[:, self.columns.index(name)]

    def by_chain(self) -> np.ndarray:
        return self.draws.reshape(self.chains, self.D // self.chains, -1)

    def quality_draws(self, package_id: str) -> np.ndarray:
        """Draws of a package's random effect; larger means faster fixes."""
        try:
            j = self.package_ids.index(package_id)
        except ValueError:
            raise KeyError(f"unknown package {package_id!r}") from None
        return self.q[:, j]

    def interval(self, name: str, level: float = 0.95) -> tuple[float, float]:
        lo, hi = np.percentile(self.column(name), [50 * (1 - level), 50 * (1 + level)])
        return float(lo), float(hi)

    def metadata(self) -> dict:
        return {
            "draws": self.D, "chains": self.chains, "warmup": self.warmup, "seed": self.seed,
            "ties": self.ties, "coding": self.coding, "beta_names": self.beta_names,
            "package_ids": self.package_ids, "diagnostics": self.diagnostics,
        }

    def save(self, csv_path, json_path=None, extra: dict | None = None, manifest_hash: str | None = None) -> None:
        """Write draws as CSV (``%.17g``, lossless) plus a JSON sidecar."""
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        with open(csv_path, "w", encoding="utf-8", newline="") as f:
            if manifest_hash:
                f.write(f"# manifest: {manifest_hash}\n")
            f.write(",".join(self.columns) + "\n")
            np.savetxt(f, self.draws, delimiter=",", fmt="%.17g")
        meta = self.metadata()
        if manifest_hash:
            meta["manifest"] = manifest_hash
        if extra:
            meta.update(extra)
        json_path.write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, csv_path, json_path=None) -> "PosteriorDraws":
        csv_path = Path(csv_path)
        json_path = Path(json_path) if json_path else csv_path.with_suffix(".json")
        meta = json.loads(json_path.read_text())
        with open(csv_path, encoding="utf-8") as f:
            lines = [line for line in f if not line.startswith("#")]
        header = lines[0].strip().split(",")
        draws = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        out = cls(draws, meta["beta_names"], meta["package_ids"], meta["chains"], meta["warmup"],
                  meta["seed"], meta["diagnostics"], meta.get("ties", "efron"), meta.get("coding", "dummy"))
        if header != out.columns:
            raise ValueError("posterior CSV header does not match its sidecar")
        return out


def summarize_diagnostics(chains: np.ndarray, names: list[str]) -> dict:
    rhat = split_rhat(chains)
    ess = effective_sample_size(chains)
    rhat_max = float(np.max(rhat))
    return {
        "rhat": dict(zip(names, rhat.tolist())),
        "ess": dict(zip(names, ess.tolist())),
        "rhat_max": rhat_max,
        "ess_min": float(np.min(ess)),
        "rhat_target_met": rhat_max < RHAT_TARGET,
        "converged": rhat_max < RHAT_WARN,
    }


def fit_posterior(dataset: SurvivalDataset, config: SamplerConfig = SamplerConfig(),
                  priors: Priors = Priors()) -> PosteriorDraws:
    """Draw from the hierarchical Cox posterior.

    Deterministic given ``(seed, chains, config)``: chain ``c`` uses the
    ``c``-th child of ``SeedSequence(seed)``. If any split R-hat is at or above
    1.1 the result carries ``diagnostics["converged"] = False``.
    """
    if dataset.n_events < 1:
        raise ValueError("dataset has no events; the partial likelihood is flat")
    efron = _check_ties(config.ties)
    seeds = np.random.SeedSequence(config.seed).spawn(config.chains)
    chains = [_Chain(dataset, priors, efron, np.random.Generator(np.random.PCG64(s))) for s in seeds]
    kept = config.kept_per_chain

    def run(chain):
        return chain.run(config.warmup, kept)

    if config.n_jobs > 1:
        with ThreadPoolExecutor(config.n_jobs) as pool:
            results = list(pool.map(run, chains))
    else:
        results = [run(c) for c in chains]

    stacked = np.stack([r[0] for r in results])
    names = dataset.beta_names + [f"q_{pid}" for pid in dataset.package_ids] + ["sigma"]
    diagnostics = summarize_diagnostics(stacked, names)
    diagnostics["acceptance"] = [r[1] for r in results]
    diagnostics["zero_bug_packages"] = [pid for pid, n in zip(dataset.package_ids, dataset.bugs_per_package) if n == 0]
    if not diagnostics["converged"]:
        log.warning("posterior did not converge: max R-hat %.3f", diagnostics["rhat_max"])
    return PosteriorDraws(
        draws=stacked.reshape(-1, stacked.shape[-1]),
        beta_names=dataset.beta_names,
        package_ids=list(dataset.package_ids),
        chains=config.chains,
        warmup=config.warmup,
        seed=config.seed,
        diagnostics=diagnostics,
        ties=config.ties,
        coding=dataset.coding,
    )


def sampler_config_dict(config: SamplerConfig) -> dict:
    return asdict(config)
