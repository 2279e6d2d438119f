"""Average-treatment-effect estimators (Hajek IPW, outcome regression, doubly
robust) and their plug-in influence-function standard errors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import DegenerateVarianceError, SingularDesignError
from .outcome import FittedOutcome, fit_outcome_models
from .propensity import fit_logistic

__all__ = [
    "EffectEstimate",
    "tau_ipw_hajek",
    "tau_reg",
    "tau_dr",
    "influence",
    "sandwich_se",
    "studentize",
    "estimate_effect",
    "fit_nuisances",
]

Method = Literal["ipw", "reg", "dr"]
METHODS = ("ipw", "reg", "dr")


@dataclass(frozen=True)
class EffectEstimate:
    method: str
    tau_hat: float
    se: float | None = None
    se_method: str = "none"

    @property
    def t_abs(self) -> float | None:
        if self.se is None:
            return None
        return studentize(self.tau_hat, self.se)

    @property
    def t(self) -> float | None:
        """Signed studentized statistic."""
        return None if self.se is None else self.tau_hat / self.se


def _arms(z):
    z = np.asarray(z)
    t = z == 1
    if not t.any() or t.all():
        raise SingularDesignError("both arms must be non-empty")
    return t


def tau_ipw_hajek(z, y, e_hat) -> float:
    """Hajek (normalized) inverse-propensity-weighted difference in means."""
    t = _arms(z)
    y = np.asarray(y, dtype=float)
    e = np.asarray(e_hat, dtype=float)
    w1 = 1.0 / e[t]
    w0 = 1.0 / (1.0 - e[~t])
    s1, s0 = w1.sum(), w0.sum()
    if s1 <= 0 or s0 <= 0:
        raise DegenerateVarianceError("inverse-propensity weights sum to zero")
    return float(w1 @ y[t] / s1 - w0 @ y[~t] / s0)


def tau_reg(fit: FittedOutcome) -> float:
    return float(np.mean(fit.mu1_hat - fit.mu0_hat))


def tau_dr(z, e_hat, fit: FittedOutcome) -> float:
    """Outcome-regression estimate plus the Horvitz-Thompson weighted mean of
    the residuals."""
    z = np.asarray(z, dtype=float)
    e = np.asarray(e_hat, dtype=float)
    R = fit.residuals
    correction = np.mean(z * R / e - (1.0 - z) * R / (1.0 - e))
    return tau_reg(fit) + float(correction)


def influence(z, y, e_hat, fit: FittedOutcome | None, method: Method) -> np.ndarray:
    """Plug-in influence function values, one per unit.

    ``reg`` shares the doubly robust influence function; nuisance-estimation
    terms are dropped in every case.
    """
    z = np.asarray(z, dtype=float)
    e = np.asarray(e_hat, dtype=float)
    if method == "ipw":
        y = np.asarray(y, dtype=float)
        _arms(z)
        n = len(z)
        w1 = z / e
        w0 = (1.0 - z) / (1.0 - e)
        m1 = (w1 @ y) / w1.sum()
        m0 = (w0 @ y) / w0.sum()
        wbar1 = w1.sum() / n
        wbar0 = w0.sum() / n
        return w1 * (y - m1) / wbar1 - w0 * (y - m0) / wbar0
    if method in ("dr", "reg"):
        R = fit.residuals
        phi = fit.mu1_hat - fit.mu0_hat + z * R / e - (1.0 - z) * R / (1.0 - e)
        return phi - phi.mean()
    raise ValueError(f"unknown method {method!r}")


def sandwich_se(z, y, e_hat, fit: FittedOutcome | None, method: Method) -> float:
    """``sqrt(sum(phi**2)) / n`` with ``phi`` from :func:`influence`.

    Raises DegenerateVarianceError when the influence function vanishes up to
    rounding (relative to the outcome scale).
    """
    phi = influence(z, y, e_hat, fit, method)
    n = len(phi)
    se = float(np.sqrt(phi @ phi) / n)
    scale = float(np.max(np.abs(y))) if len(y) else 0.0
    if se == 0.0 or se <= 1e-12 * scale:
        raise DegenerateVarianceError(f"{method} influence function is identically zero")
    return se


def studentize(tau_hat: float, se: float) -> float:
    if not se > 0:
        raise ValueError(f"standard error must be positive, got {se}")
    return abs(tau_hat) / se


def fit_nuisances(X_ps, X_out, z, y, method: Method, need_ps: bool, ps_init=None, check_rank=True):
    """Fit whatever nuisance models ``method`` needs.

    Returns ``(e_hat, outcome_fit)``; either may be None.
    """
    e_hat = fit_logistic(X_ps, z, init=ps_init, check_rank=check_rank).e_hat if need_ps else None
    fit = fit_outcome_models(X_out, z, y) if method in ("reg", "dr") else None
    return e_hat, fit


def _point(method, z, y, e_hat, fit):
    if method == "ipw":
        return tau_ipw_hajek(z, y, e_hat)
    if method == "reg":
        return tau_reg(fit)
    return tau_dr(z, e_hat, fit)


def estimate_effect(
    sample,
    method: Method = "dr",
    ps_subset=None,
    outcome_subset=None,
    se_method: str = "sandwich",
    B: int = 2000,
    seed: int = 0,
) -> EffectEstimate:
    """Fit the nuisance models on ``sample`` and estimate the ATE.

    ``ps_subset``/``outcome_subset`` select analysis columns (None = all of X).
    ``se_method`` is one of ``sandwich``, ``bootstrap`` or ``none``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    X_ps = sample.columns(ps_subset)
    X_out = sample.columns(outcome_subset)
    need_ps = method != "reg" or se_method == "sandwich"
    e_hat, fit = fit_nuisances(X_ps, X_out, sample.z, sample.y, method, need_ps)
    tau = _point(method, sample.z, sample.y, e_hat, fit)
    if se_method == "none":
        return EffectEstimate(method, tau)
    if se_method == "sandwich":
        se = sandwich_se(sample.z, sample.y, e_hat, fit, method)
    elif se_method == "bootstrap":
        from .resampling import bootstrap_se

        res = bootstrap_se(sample, method, ps_subset, outcome_subset, B=B, seed=seed)
        if res.degenerate:
            raise DegenerateVarianceError("bootstrap replicates are all identical")
        se = res.se
    else:
        raise ValueError(f"unknown se_method {se_method!r}")
    return EffectEstimate(method, tau, se, se_method)
