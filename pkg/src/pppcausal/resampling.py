"""Nonparametric (pairs) bootstrap standard errors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._random import BOOTSTRAP, parallel_map, stream
from .errors import ModelError, UnstableBootstrapError
from .estimators import METHODS, _point, fit_nuisances

__all__ = ["BootstrapResult", "bootstrap_se"]


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    se: float
    B: int
    replicate_estimates: np.ndarray
    n_failed: int

    @property
    def degenerate(self) -> bool:
        est = self.replicate_estimates
        return self.se == 0.0 or bool(np.ptp(est) <= 1e-12 * max(1.0, np.max(np.abs(est))))


def _replicate(sample, method, ps_subset, outcome_subset, seed, b):
    rng = stream(seed, BOOTSTRAP, b)
    idx = rng.integers(0, sample.n, size=sample.n)
    z = sample.z[idx]
    y = sample.y[idx]
    if z.min() == z.max():
        return None
    X_ps = sample.columns(ps_subset)[idx]
    X_out = sample.columns(outcome_subset)[idx]
    try:
        e_hat, fit = fit_nuisances(X_ps, X_out, z, y, method, need_ps=method != "reg")
        return _point(method, z, y, e_hat, fit)
    except ModelError:
        return None


def bootstrap_se(
    sample,
    method: str = "dr",
    ps_subset=None,
    outcome_subset=None,
    B: int = 2000,
    seed: int = 0,
    threads: int = 1,
) -> BootstrapResult:
    """Resample units with replacement ``B`` times, refitting both nuisance
    models and recomputing the estimator each time.

    Resamples with an empty arm, separation or a singular design are dropped
    and counted, not redrawn. Resample ``b`` always uses the random stream
    ``(seed, b)``, so the result does not depend on ``threads``.

    Raises
    ------
    UnstableBootstrapError
        More than half of the resamples failed.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    out = parallel_map(
        lambda b: _replicate(sample, method, ps_subset, outcome_subset, seed, b),
        range(B),
        threads,
    )
    est = np.array([v for v in out if v is not None], dtype=float)
    n_failed = B - est.size
    if n_failed > B / 2:
        raise UnstableBootstrapError(f"{n_failed} of {B} bootstrap resamples failed")
    se = float(np.std(est, ddof=1)) if est.size > 1 else 0.0
    return BootstrapResult(se, B, est, n_failed)
