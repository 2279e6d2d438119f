"""Posterior predictive p-values for the strong null of no effect.

Two Monte Carlo routes to the same quantity are provided:

* :func:`ppp_algorithm_a` pairs each posterior propensity draw with one
  synthetic assignment vector and compares the statistics directly.
* :func:`ppp_algorithm_b` computes a randomization p-value for every posterior
  draw (many assignments per draw) and averages them.

:func:`frt_pvalue` is the special case where the assignment mechanism is
known, and :func:`normal_pvalue` the large-sample comparator.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from ._random import ASSIGN, INNER, SAMPLER, STATISTIC, child_seed, parallel_map, stream
from .errors import DesignError, ModelError, SeparationError, StatisticUndefined
from .estimators import METHODS, _point, estimate_effect, fit_nuisances, sandwich_se
from .outcome import FittedOutcome, fit_outcome_models
from .propensity import PosteriorDraws, draw_assignments, fit_logistic, predict_propensity, sample_posterior

__all__ = [
    "StatisticSpec",
    "PValueReport",
    "CompleteRandomization",
    "BernoulliDesign",
    "compute_statistic",
    "ppp_algorithm_a",
    "ppp_algorithm_b",
    "ppp_pvalue",
    "frt_pvalue",
    "normal_pvalue",
    "REPORT_FIELDS",
]

DEGENERATE_WARN_FRACTION = 0.2


@dataclass(frozen=True)
class StatisticSpec:
    """Test statistic ``|tau_hat|`` or ``|tau_hat| / se`` for one estimator.

    ``ps_subset`` and ``outcome_subset`` pick analysis columns from the sample's
    column pool (None = all of X, ``()`` = intercept only). ``freeze_outcome``
    reuses the outcome fit from the observed assignment instead of refitting
    it for every synthetic assignment; faster, but not the default.
    """

    estimator: str = "dr"
    studentized: bool = True
    se_method: str = "sandwich"
    ps_subset: tuple | None = None
    outcome_subset: tuple | None = None
    bootstrap_B: int = 200
    freeze_outcome: bool = False

    def __post_init__(self):
        if self.estimator not in METHODS:
            raise ValueError(f"estimator must be one of {METHODS}, got {self.estimator!r}")
        if self.se_method not in ("sandwich", "bootstrap"):
            raise ValueError(f"se_method must be 'sandwich' or 'bootstrap', got {self.se_method!r}")
        for name in ("ps_subset", "outcome_subset"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, tuple):
                object.__setattr__(self, name, tuple(v))

    @property
    def label(self) -> str:
        s = self.estimator
        if self.studentized:
            s += "_stud" if self.se_method == "sandwich" else "_stud_boot"
        return s


REPORT_FIELDS = (
    "method", "estimator", "studentized", "p_value", "t_observed", "R", "S", "n_degenerate", "seed",
)


@dataclass(frozen=True)
class PValueReport:
    p_value: float
    t_observed: float
    method: str
    R: int
    S: int = 0
    n_degenerate: int = 0
    estimator: str = ""
    studentized: bool = False
    seed: int = 0
    warning: str | None = None
    extras: dict = field(default_factory=dict, compare=False)

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}

    def csv_values(self) -> list[str]:
        r = self.row()
        return [
            r["method"], r["estimator"], str(int(r["studentized"])),
            f"{r['p_value']:.17g}", f"{r['t_observed']:.17g}",
            str(r["R"]), str(r["S"]), str(r["n_degenerate"]), str(r["seed"]),
        ]


class _Statistic:
    """The test statistic as a function of the assignment vector, with the
    sample's outcomes and covariates held fixed."""

    def __init__(self, sample, spec: StatisticSpec, seed: int = 0):
        self.sample = sample
        self.spec = spec
        self.seed = seed
        self.X_ps = sample.columns(spec.ps_subset)
        self.X_out = sample.columns(spec.outcome_subset)
        self.y = sample.y
        self.need_ps = spec.estimator != "reg" or (spec.studentized and spec.se_method == "sandwich")
        self.y_scale = float(np.max(np.abs(self.y))) if sample.n else 0.0
        self._frozen = None
        self._ps_init = None
        if self.need_ps:
            # Checks the propensity design once; synthetic assignments reuse
            # the same design and start IRLS from the observed-data MLE.
            try:
                self._ps_init = fit_logistic(self.X_ps, sample.z).theta
            except SeparationError:
                self._ps_init = None
        if spec.freeze_outcome and spec.estimator in ("reg", "dr"):
            self._frozen = fit_outcome_models(self.X_out, sample.z, self.y)

    @property
    def _ps_args(self):
        return (self._ps_init, self._ps_init is None)

    def _outcome(self, z):
        f = self._frozen
        resid = self.y - np.where(z == 1, f.mu1_hat, f.mu0_hat)
        return FittedOutcome(f.beta1, f.beta0, f.mu1_hat, f.mu0_hat, resid, f.covariate_subset)

    def __call__(self, z, key: int = 0) -> float:
        z = np.asarray(z)
        n1 = int(z.sum())
        if n1 == 0 or n1 == len(z):
            raise StatisticUndefined("empty arm")
        spec = self.spec
        try:
            if self._frozen is not None:
                e_hat, _ = fit_nuisances(self.X_ps, self.X_out, z, self.y, "ipw", self.need_ps, *self._ps_args)
                fit = self._outcome(z)
            else:
                e_hat, fit = fit_nuisances(
                    self.X_ps, self.X_out, z, self.y, spec.estimator, self.need_ps, *self._ps_args
                )
            tau = _point(spec.estimator, z, self.y, e_hat, fit)
            if not spec.studentized:
                value = abs(tau)
            elif spec.se_method == "sandwich":
                value = abs(tau) / sandwich_se(z, self.y, e_hat, fit, spec.estimator)
            else:
                from .resampling import bootstrap_se

                res = bootstrap_se(
                    self.sample.with_assignment(z), spec.estimator, spec.ps_subset,
                    spec.outcome_subset, B=spec.bootstrap_B,
                    seed=child_seed(self.seed, STATISTIC, key),
                )
                if res.degenerate:
                    raise StatisticUndefined("bootstrap standard error is zero")
                value = abs(tau) / res.se
        except ModelError as exc:
            raise StatisticUndefined(str(exc)) from exc
        if not math.isfinite(value):
            raise StatisticUndefined("non-finite statistic")
        return float(value)

    def tolerance(self, t_obs: float) -> float:
        # Statistics that are equal in exact arithmetic can differ by rounding
        # after a refit; such near-ties count as ties.
        atol = 0.0 if self.spec.studentized else 1e-12 * self.y_scale
        return 1e-9 * abs(t_obs) + atol

    def try_eval(self, z, key: int = 0):
        try:
            return self(z, key)
        except StatisticUndefined:
            return None


def compute_statistic(z, sample, spec: StatisticSpec, seed: int = 0) -> float:
    """Refit the nuisance models under assignment ``z`` and return the statistic.

    Raises StatisticUndefined if an arm is empty or a model cannot be fit.
    """
    return _Statistic(sample, spec, seed)(z)


def _smoothed(count: int, valid: int) -> float:
    return (1.0 + count) / (1.0 + valid)


def _observed(stat: _Statistic, sample) -> float:
    try:
        return stat(sample.z, key=0)
    except StatisticUndefined as exc:
        raise StatisticUndefined(f"statistic undefined on the observed data: {exc}") from exc


def _warning(n_deg: int, total: int) -> str | None:
    if total and n_deg > DEGENERATE_WARN_FRACTION * total:
        return f"{n_deg} of {total} synthetic draws had an undefined statistic"
    return None


def ppp_algorithm_a(
    sample,
    spec: StatisticSpec,
    R: int = 2000,
    burn_in: int = 1000,
    seed: int = 0,
    threads: int = 1,
    draws: PosteriorDraws | None = None,
) -> PValueReport:
    """Posterior predictive p-value with one assignment per posterior draw.

    For each retained coefficient draw ``theta_r`` a full assignment vector is
    drawn from the logistic model and the statistic is recomputed. The
    p-value is ``(1 + #{T_r >= T_obs}) / (1 + #valid draws)``; draws whose
    statistic is undefined are left out of both counts.
    """
    stat = _Statistic(sample, spec, seed)
    t_obs = _observed(stat, sample)
    X_ps = stat.X_ps
    if draws is None:
        draws = sample_posterior(X_ps, sample.z, burn_in=burn_in, n_draws=R, seed=child_seed(seed, SAMPLER))
    R = draws.R
    tol = stat.tolerance(t_obs)

    def one(r):
        z_r = draw_assignments(predict_propensity(draws.draws[r], X_ps), stream(seed, ASSIGN, r))
        return stat.try_eval(z_r, key=r + 1)

    values = parallel_map(one, range(R), threads)
    valid = [v for v in values if v is not None]
    n_deg = R - len(valid)
    count = sum(v >= t_obs - tol for v in valid)
    return PValueReport(
        _smoothed(count, len(valid)), t_obs, "ppp_a", R, 0, n_deg,
        spec.estimator, spec.studentized, seed, _warning(n_deg, R),
        {"acceptance_rate": draws.acceptance_rate, "statistics": np.array([np.nan if v is None else v for v in values])},
    )


def ppp_algorithm_b(
    sample,
    spec: StatisticSpec,
    theta_draws: PosteriorDraws,
    S: int = 200,
    seed: int = 0,
    threads: int = 1,
) -> PValueReport:
    """Average over posterior draws of the randomization p-value obtained with
    the coefficients fixed at each draw (``S`` assignments per draw, add-one
    smoothed)."""
    if theta_draws.R < 1:
        raise ValueError("need at least one posterior draw")
    stat = _Statistic(sample, spec, seed)
    t_obs = _observed(stat, sample)
    tol = stat.tolerance(t_obs)
    X_ps = stat.X_ps

    def one(j):
        rng = stream(seed, INNER, j)
        probs = predict_propensity(theta_draws.draws[j], X_ps)
        count = valid = 0
        for s in range(S):
            v = stat.try_eval(draw_assignments(probs, rng), key=(j + 1) * (S + 1) + s)
            if v is not None:
                valid += 1
                count += v >= t_obs - tol
        return count, valid

    results = parallel_map(one, range(theta_draws.R), threads)
    pvals = [_smoothed(c, v) for c, v in results if v > 0]
    n_deg = sum(S - v for _, v in results)
    total = S * theta_draws.R
    if not pvals:
        raise StatisticUndefined("statistic undefined for every synthetic assignment")
    return PValueReport(
        float(np.mean(pvals)), t_obs, "ppp_b", theta_draws.R, S, n_deg,
        spec.estimator, spec.studentized, seed, _warning(n_deg, total),
        {"per_draw": np.array(pvals)},
    )


def ppp_pvalue(
    sample,
    spec: StatisticSpec,
    algorithm: str = "a",
    R: int = 2000,
    burn_in: int = 1000,
    S: int = 200,
    seed: int = 0,
    threads: int = 1,
) -> PValueReport:
    """Sample the propensity posterior and run Algorithm A or B."""
    if algorithm == "a":
        return ppp_algorithm_a(sample, spec, R=R, burn_in=burn_in, seed=seed, threads=threads)
    if algorithm != "b":
        raise ValueError("algorithm must be 'a' or 'b'")
    X_ps = sample.columns(spec.ps_subset)
    draws = sample_posterior(X_ps, sample.z, burn_in=burn_in, n_draws=R, seed=child_seed(seed, SAMPLER))
    return ppp_algorithm_b(sample, spec, draws, S=S, seed=seed, threads=threads)


@dataclass(frozen=True)
class CompleteRandomization:
    """Exactly ``m`` of ``n`` units treated, all subsets equally likely."""

    m: int

    def draw(self, n, rng):
        z = np.zeros(n, dtype=np.int64)
        z[rng.choice(n, self.m, replace=False)] = 1
        return z

    def check(self, n):
        if not 0 < self.m < n:
            raise DesignError(f"complete randomization needs 0 < m < n, got m={self.m}, n={n}")


@dataclass(frozen=True, eq=False)
class BernoulliDesign:
    """Independent assignments with known probabilities (scalar or per unit)."""

    p: float | Sequence[float] | np.ndarray

    def check(self, n):
        p = np.broadcast_to(np.asarray(self.p, dtype=float), (n,))
        if not np.all((p > 0) & (p < 1)):
            raise DesignError("Bernoulli design probabilities must lie strictly in (0, 1)")

    def draw(self, n, rng):
        return draw_assignments(np.broadcast_to(np.asarray(self.p, dtype=float), (n,)), rng)


def frt_pvalue(sample, spec: StatisticSpec, design, S: int = 10000, seed: int = 0, threads: int = 1) -> PValueReport:
    """Monte Carlo Fisher randomization test under a fully known design."""
    design.check(sample.n)
    stat = _Statistic(sample, spec, seed)
    t_obs = _observed(stat, sample)
    tol = stat.tolerance(t_obs)
    n = sample.n

    def one(s):
        return stat.try_eval(design.draw(n, stream(seed, ASSIGN, s)), key=s + 1)

    values = parallel_map(one, range(S), threads)
    valid = [v for v in values if v is not None]
    n_deg = S - len(valid)
    count = sum(v >= t_obs - tol for v in valid)
    return PValueReport(
        _smoothed(count, len(valid)), t_obs, "frt", 0, S, n_deg,
        spec.estimator, spec.studentized, seed, _warning(n_deg, S),
    )


def normal_pvalue(sample, spec: StatisticSpec, seed: int = 0) -> PValueReport:
    """Two-sided p-value ``2 * (1 - Phi(|t|))`` from the studentized estimator."""
    if not spec.studentized:
        spec = replace(spec, studentized=True)
    est = estimate_effect(
        sample, spec.estimator, spec.ps_subset, spec.outcome_subset,
        se_method=spec.se_method, B=spec.bootstrap_B, seed=seed,
    )
    t = est.t_abs
    return PValueReport(
        normal_two_sided(t), t, "normal", 0, 0, 0, spec.estimator, True, seed,
        extras={"tau_hat": est.tau_hat, "se": est.se},
    )


def normal_two_sided(t: float) -> float:
    # erfc keeps full relative accuracy in the upper tail.
    return float(math.erfc(abs(t) / math.sqrt(2.0)))
