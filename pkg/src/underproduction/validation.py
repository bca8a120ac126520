"""Negative-binomial (NB2) regression of NMU counts on mean underproduction.

Mean ``mu = exp(b0 + b1 u)``, variance ``mu + mu^2 / theta``. Coefficients
come from IRLS at fixed ``theta``; ``theta`` from Newton steps on its
log-scale profile likelihood; the two alternate until the log-likelihood
stops moving.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import digamma, gammaln, polygamma
from scipy.stats import norm

MAX_OUTER = 200
TOL = 1e-10


class DegenerateFit(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message, params=None, iterations=0):
        super().__init__(message)
        self.params = params
        self.iterations = iterations


@dataclass(frozen=True)
class NBModel:
    b0: float
    b1: float
    theta: float
    ci_b0: tuple[float, float]
    ci_b1: tuple[float, float]
    n_obs: int
    log_likelihood: float
    se_b0: float = math.nan
    se_b1: float = math.nan
    iterations: int = 0
    loglik_trace: tuple[float, ...] = ()

    def predict_mean(self, u) -> np.ndarray | float:
        return predict_mean(self, u)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ci_b0"] = list(self.ci_b0)
        d["ci_b1"] = list(self.ci_b1)
        d.pop("loglik_trace")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def predict_mean(model, u):
    """``exp(b0 + b1 u)``. ``model`` may be an ``NBModel`` or a ``(b0, b1)`` pair."""
    b0, b1 = (model.b0, model.b1) if hasattr(model, "b0") else model
    out = np.exp(b0 + b1 * np.asarray(u, dtype=float))
    return float(out) if out.ndim == 0 else out


def _log_rising(y, theta) -> float:
    """``sum_i log Gamma(y_i + theta) - log Gamma(theta)`` as a finite sum.

    The gammaln difference cancels catastrophically for large theta.
    """
    reps = y.astype(np.int64)
    total = int(reps.sum())
    if total == 0:
        return 0.0
    starts = np.repeat(np.cumsum(reps) - reps, reps)
    k = np.arange(total) - starts
    return float(np.sum(np.log(theta + k)))


def nb_loglik(y, mu, theta) -> float:
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if np.isinf(theta):
        return float(np.sum(y * np.log(mu) - mu - gammaln(y + 1)))
    return float(
        _log_rising(y, theta)
        + np.sum(-gammaln(y + 1) - theta * np.log1p(mu / theta) + y * (np.log(mu) - np.log(theta + mu)))
    )


def _irls(X, y, theta, beta, max_iter=100):
    """Maximize over coefficients at fixed theta; step-halving keeps ascent."""
    ll = nb_loglik(y, np.exp(X @ beta), theta)
    for _ in range(max_iter):
        eta = X @ beta
        mu = np.exp(eta)
        w = mu / (1.0 + mu / theta)
        z = eta + (y - mu) / mu
        XtW = X.T * w
        new = np.linalg.solve(XtW @ X, XtW @ z)
        step = new - beta
        ll_new = nb_loglik(y, np.exp(X @ new), theta)
        halvings = 0
        while ll_new < ll and halvings < 30:
            step /= 2
            new = beta + step
            ll_new = nb_loglik(y, np.exp(X @ new), theta)
            halvings += 1
        if ll_new < ll:
            break
        beta, ll_prev, ll = new, ll, ll_new
        if abs(ll - ll_prev) < TOL * 1e-2:
            break
    return beta, ll


def _theta_score_info(y, mu, theta):
    """First and second derivative of the log-likelihood in ``log theta``."""
    d1 = np.sum(digamma(y + theta) - digamma(theta) + np.log(theta / (theta + mu)) + (mu - y) / (theta + mu))
    d2 = np.sum(polygamma(1, y + theta) - polygamma(1, theta) + 1.0 / theta - 2.0 / (theta + mu)
                + (y + theta) / (theta + mu) ** 2)
    g = theta * d1
    h = theta * d1 + theta**2 * d2
    return g, h


def _newton_log_theta(y, mu, theta):
    ll = nb_loglik(y, mu, theta)
    g, h = _theta_score_info(y, mu, theta)
    step = -g / h if h < 0 else math.copysign(1.0, g)
    step = max(min(step, 5.0), -5.0)
    for _ in range(40):
        cand = theta * math.exp(step)
        cand = min(max(cand, 1e-8), 1e12)
        ll_new = nb_loglik(y, mu, cand)
        if ll_new >= ll:
            return cand, ll_new
        step /= 2
    return theta, ll


def observed_information(X, y, beta, theta, with_theta=True) -> np.ndarray:
    """Negative Hessian of the log-likelihood in ``(beta, log theta)``."""
    mu = np.exp(X @ beta)
    d2_eta = -theta * mu * (theta + y) / (theta + mu) ** 2
    H_bb = (X.T * d2_eta) @ X
    if not with_theta:
        return -H_bb
    # d/d theta of the eta-score theta (y - mu) / (theta + mu), chained to log theta
    d_eta_dtheta = mu * (y - mu) / (theta + mu) ** 2
    H_bt = X.T @ (d_eta_dtheta * theta)
    _, h_tt = _theta_score_info(y, mu, theta)
    H = np.empty((X.shape[1] + 1,) * 2)
    H[:-1, :-1] = H_bb
    H[:-1, -1] = H[-1, :-1] = H_bt
    H[-1, -1] = h_tt
    return -H


def fit_negbin(u_means, nmu_counts, theta: float | None = None, level: float = 0.95) -> NBModel:
    """Maximum-likelihood NB2 fit of counts on a single predictor.

    Pass ``theta`` to pin the dispersion instead of estimating it. Wald
    intervals use the observed information.
    """
    u = np.asarray(u_means, dtype=float)
    y = np.asarray(nmu_counts, dtype=float)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("u_means and nmu_counts must be 1-d and equal length")
    if len(y) < 3:
        raise ValueError("need at least 3 observations")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("counts must be non-negative integers")
    if not np.any(y > 0):
        raise DegenerateFit("all counts are zero; the intercept diverges")
    X = np.column_stack([np.ones_like(u), u])

    beta = np.array([math.log(y.mean()), 0.0])
    fixed = theta is not None
    th = float(theta) if fixed else 1.0
    beta, ll = _irls(X, y, th, beta)
    trace = [ll]
    converged = False
    it = 0
    for it in range(1, MAX_OUTER + 1):
        if not fixed:
            th, _ = _newton_log_theta(y, np.exp(X @ beta), th)
        beta, ll_new = _irls(X, y, th, beta)
        trace.append(ll_new)
        if abs(ll_new - ll) < TOL:
            ll = ll_new
            converged = True
            break
        ll = ll_new
    if not converged:
        raise ConvergenceError("NB fit did not converge", params=(beta, th), iterations=it)

    info = observed_information(X, y, beta, th, with_theta=not fixed)
    cov = np.linalg.inv(info)[:2, :2]
    se = np.sqrt(np.diag(cov))
    zc = norm.ppf(0.5 + level / 2)
    return NBModel(
        b0=float(beta[0]), b1=float(beta[1]), theta=th,
        ci_b0=(float(beta[0] - zc * se[0]), float(beta[0] + zc * se[0])),
        ci_b1=(float(beta[1] - zc * se[1]), float(beta[1] + zc * se[1])),
        n_obs=len(y), log_likelihood=ll, se_b0=float(se[0]), se_b1=float(se[1]),
        iterations=it, loglik_trace=tuple(trace),
    )
