"""Per-arm linear outcome regressions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularDesignError
from .propensity import add_intercept

__all__ = ["FittedOutcome", "fit_outcome_models", "predict_means", "ols"]


@dataclass(frozen=True, eq=False)
class FittedOutcome:
    beta1: np.ndarray
    beta0: np.ndarray
    mu1_hat: np.ndarray
    mu0_hat: np.ndarray
    residuals: np.ndarray
    covariate_subset: tuple = ()


def ols(D, y, arm="") -> np.ndarray:
    """Least squares via Householder QR. ``D`` already contains the intercept."""
    n, p = D.shape
    if p == 1:
        if n == 0:
            raise SingularDesignError(f"{arm} arm is empty")
        return np.array([y.mean()])
    if n <= p:
        raise SingularDesignError(f"{arm} arm has {n} units for {p} regression parameters")
    Q, R = np.linalg.qr(D)
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise SingularDesignError(f"{arm} arm design is rank deficient")
    return np.linalg.solve(R, Q.T @ y)


def fit_outcome_models(X, z, y, covariate_subset=()) -> FittedOutcome:
    """Separate OLS fits of ``y`` on intercept + ``X`` in each arm.

    ``X`` is the already-selected covariate matrix; ``covariate_subset`` is only
    recorded for bookkeeping.
    """
    z = np.asarray(z)
    y = np.asarray(y, dtype=float)
    D = add_intercept(X)
    t = z == 1
    c = ~t
    beta1 = ols(D[t], y[t], "treated")
    beta0 = ols(D[c], y[c], "control")
    mu1 = D @ beta1
    mu0 = D @ beta0
    resid = y - np.where(t, mu1, mu0)
    return FittedOutcome(beta1, beta0, mu1, mu0, resid, tuple(covariate_subset))


def predict_means(fit: FittedOutcome, X) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate both arms' fitted regressions on new covariate rows."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[1] + 1 != fit.beta1.size:
        raise ValueError(f"X has {X.shape[1]} columns, fit expects {fit.beta1.size - 1}")
    D = add_intercept(X)
    return D @ fit.beta1, D @ fit.beta0
