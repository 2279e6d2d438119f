"""Logistic propensity-score model.

Maximum likelihood by IRLS, the flat-prior log posterior, a random-walk
Metropolis sampler for the coefficients and Bernoulli draws of synthetic
treatment assignments.

All functions take the raw covariate matrix; the intercept column is added
here and always comes first in ``theta``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from ._random import SAMPLER, stream
from .errors import InitializationError, SeparationError, SingularDesignError

__all__ = [
    "FittedPropensity",
    "PosteriorDraws",
    "fit_logistic",
    "log_posterior",
    "sample_posterior",
    "predict_propensity",
    "draw_assignments",
    "add_intercept",
]

CLIP = 1e-12
MAX_ITER = 100
SEPARATION_ETA = 30.0
# Consecutive non-shrinking Newton steps, with some |eta| > 30, before giving up.
SEPARATION_PATIENCE = 8


def add_intercept(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return np.hstack([np.ones((X.shape[0], 1)), X])


@dataclass(frozen=True, eq=False)
class FittedPropensity:
    theta: np.ndarray
    e_hat: np.ndarray
    converged: bool
    iterations: int
    hessian: np.ndarray  # negative log-likelihood Hessian at theta

    @property
    def intercept(self) -> float:
        return float(self.theta[0])


@dataclass(frozen=True, eq=False)
class PosteriorDraws:
    draws: np.ndarray
    burn_in: int
    acceptance_rate: float
    seed: int
    scale: float = float("nan")  # final proposal scale c

    @property
    def R(self) -> int:
        return self.draws.shape[0]

    def to_csv(self, path, names=None) -> None:
        names = list(names) if names is not None else [
            "intercept", *(f"theta{j}" for j in range(1, self.draws.shape[1]))
        ]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(names)
            for row in self.draws:
                w.writerow([f"{v:.17g}" for v in row])


def _check_rank(D, what="propensity design"):
    if D.shape[0] < D.shape[1] or np.linalg.matrix_rank(D) < D.shape[1]:
        raise SingularDesignError(f"{what} is rank deficient ({D.shape[0]}x{D.shape[1]})")


def _loglik(D, z, theta):
    eta = D @ theta
    return float(z @ eta - np.logaddexp(0.0, eta).sum())


def _separated(step):
    direction = step / np.linalg.norm(step)
    raise SeparationError(
        "perfect or quasi-perfect separation: linear predictor diverging along "
        f"direction {np.round(direction, 4).tolist()}",
        direction=direction,
    )


def fit_logistic(X, z, init=None, tol=1e-8, check_rank=True) -> FittedPropensity:
    """Fit ``P(z=1|x) = expit(theta0 + x'theta)`` by maximum likelihood.

    Newton-Raphson (IRLS) with step halving. Stops once the score norm is at
    most ``tol * n``.

    Raises
    ------
    SingularDesignError
        Intercept plus ``X`` is not of full column rank.
    SeparationError
        The likelihood has no finite maximizer: some linear predictor passes
        30 in absolute value while Newton steps stop shrinking.
    """
    z = np.asarray(z, dtype=float)
    D = add_intercept(X)
    n, p = D.shape
    if check_rank:
        _check_rank(D)
    n1 = z.sum()
    if n1 == 0 or n1 == n:
        raise SeparationError("all units in one arm; logistic MLE does not exist", direction=np.eye(p)[0])

    if p == 1:
        # Closed form for the intercept-only model.
        m = n1 / n
        theta = np.array([np.log(m / (1.0 - m))])
        e = np.full(n, m)
        H = np.array([[n * m * (1 - m)]])
        return FittedPropensity(theta, e, True, 0, H)

    theta = np.zeros(p) if init is None else np.array(init, dtype=float)
    ll = _loglik(D, z, theta)
    if not np.isfinite(ll):
        theta = np.zeros(p)
        ll = _loglik(D, z, theta)
    thresh = tol * n
    prev_step = np.inf
    stalled = 0
    converged = False
    it = 0
    for it in range(MAX_ITER + 1):
        eta = D @ theta
        e = expit(eta)
        grad = D.T @ (z - e)
        w = e * (1.0 - e)
        H = D.T @ (D * w[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        step_norm = np.sqrt(step @ step)
        saturated = np.max(np.abs(eta)) > SEPARATION_ETA
        if np.sqrt(grad @ grad) <= thresh:
            # At a finite MLE the remaining Newton step is negligible. Under
            # separation the gradient underflows while the step stays O(1)
            # because the information matrix vanishes with it.
            if saturated and step_norm > 1e-3 * max(1.0, np.sqrt(theta @ theta)):
                _separated(step)
            converged = True
            break
        if it == MAX_ITER:
            break
        if saturated and step_norm > 0.5 * prev_step:
            stalled += 1
            if stalled >= SEPARATION_PATIENCE:
                _separated(step)
        else:
            stalled = 0
        prev_step = step_norm
        t = 1.0
        while True:
            cand = theta + t * step
            ll_new = _loglik(D, z, cand)
            if ll_new >= ll - 1e-12 * abs(ll) or t < 1e-10:
                break
            t *= 0.5
        theta, ll = cand, ll_new
    eta = D @ theta
    e = np.clip(expit(eta), CLIP, 1.0 - CLIP)
    w = e * (1.0 - e)
    H = D.T @ (D * w[:, None])
    return FittedPropensity(theta, e, converged, it, H)


def log_posterior(theta, X, z) -> float:
    """Bernoulli log-likelihood of ``z``; equals the log posterior under the
    flat prior up to a constant.

    Evaluated as ``sum(z*eta - log(1+exp(eta)))`` so it stays finite for any
    finite ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    D = add_intercept(X)
    if theta.shape != (D.shape[1],):
        raise ValueError(f"theta has length {theta.size}, expected {D.shape[1]}")
    return _loglik(D, np.asarray(z, dtype=float), theta)


def sample_posterior(
    X,
    z,
    burn_in: int = 1000,
    n_draws: int = 2000,
    seed: int = 0,
    adapt_every: int = 50,
) -> PosteriorDraws:
    """Random-walk Metropolis for the logistic coefficients under a flat prior.

    The chain starts at the MLE. Proposals are ``N(0, c * H^-1)`` with ``H``
    the observed information at the MLE and ``c = 2.38**2 / p`` initially.
    During burn-in ``c`` is rescaled every ``adapt_every`` iterations whenever
    the batch acceptance rate leaves [0.15, 0.5]; it is frozen afterwards.
    """
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    z = np.asarray(z, dtype=float)
    D = add_intercept(X)
    p = D.shape[1]
    fit = fit_logistic(X, z)
    theta = fit.theta.copy()
    cur = _loglik(D, z, theta)
    if not np.isfinite(cur):
        raise InitializationError("log posterior is not finite at the MLE")
    try:
        L = np.linalg.cholesky(np.linalg.inv(fit.hessian))
    except np.linalg.LinAlgError as exc:
        raise InitializationError(f"information matrix at the MLE is not positive definite: {exc}") from exc

    rng = stream(seed, SAMPLER)
    c = 2.38**2 / p
    out = np.empty((n_draws, p))
    accepted = 0
    batch_acc = 0
    total = burn_in + n_draws
    noise = rng.standard_normal((total, p))
    logu = np.log(rng.random(total))
    for t in range(total):
        prop = theta + np.sqrt(c) * (L @ noise[t])
        new = _loglik(D, z, prop)
        if logu[t] < new - cur:
            theta, cur = prop, new
            if t >= burn_in:
                accepted += 1
            else:
                batch_acc += 1
        if t < burn_in:
            if (t + 1) % adapt_every == 0:
                rate = batch_acc / adapt_every
                if rate < 0.15:
                    c *= 0.6
                elif rate > 0.5:
                    c *= 1.5
                batch_acc = 0
        else:
            out[t - burn_in] = theta
    return PosteriorDraws(out, burn_in, accepted / n_draws, int(seed), c)


def predict_propensity(theta, X) -> np.ndarray:
    """``expit(theta0 + X @ theta[1:])`` clipped to ``[1e-12, 1 - 1e-12]``."""
    theta = np.asarray(theta, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] + 1 != theta.size:
        raise ValueError(f"theta has length {theta.size} but X has {X.shape[1]} columns")
    return np.clip(expit(theta[0] + X @ theta[1:]), CLIP, 1.0 - CLIP)


def draw_assignments(probabilities, rng) -> np.ndarray:
    """Independent Bernoulli draws, one per unit."""
    p = np.asarray(probabilities, dtype=float)
    return (rng.random(p.shape) < p).astype(np.int64)
