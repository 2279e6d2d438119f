"""Data-generating processes, model-specification scenarios and replication
studies of p-value distributions."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from ._random import DATA, REPLICATION, child_seed, parallel_map, stream
from .data import SimSample
from .errors import ModelError, PPPError, StatisticUndefined, StudyReliabilityError
from .ppp import StatisticSpec, normal_pvalue, ppp_pvalue

__all__ = [
    "DgpConfig",
    "ScenarioSpec",
    "MethodSpec",
    "StudyResult",
    "gen_regular",
    "gen_extreme",
    "generate",
    "scenario",
    "apply_scenario",
    "run_study",
    "summarize",
    "histogram_svg",
    "REGULAR_THETA",
    "REGULAR_MEAN_X",
    "EXTREME_THETA",
    "ALPHAS",
]

REGULAR_THETA = np.array([-1.0, 0.5, -0.25, -0.1])
REGULAR_BETA1 = np.array([0.1, -0.2, -0.2, -0.2])
REGULAR_BETA0 = np.array([-0.1, 0.3, 0.1, -0.2])
# E(X) for the regular design. Exact: W1 ~ Bern(1/2), W2 ~ U(0, 2),
# W3 ~ Exp(1), W4 ~ chi2(4) give E(X2) = 23/20, E(X3) = 9/10 and
# E(X4) = 4 + (1/2 + 9/10 + 61/60) / 10 = 509/120.
# scripts/mean_x_oracle.py checks these by Monte Carlo.
REGULAR_MEAN_X = np.array([0.5, 23 / 20, 9 / 10, 509 / 120])

EXTREME_THETA = np.array([1.0, -1.0])
EXTREME_INTERCEPT = -1.0
EXTREME_BETA1 = np.array([-0.2, 0.1])
EXTREME_BETA0 = np.array([0.2, -0.1])
EXTREME_MEAN_X = np.full(2, math.exp(0.5))
EXTREME_MU = -1.0 + 0.1 * math.sqrt(math.e)

ALPHAS = (0.01, 0.05, 0.1)
N_BINS = 20
DENSITY_CAP = 2.0


@dataclass(frozen=True)
class DgpConfig:
    kind: str = "regular"
    n: int = 1000
    tau_shift: float = 0.0
    flip_treatment: bool = False
    seed: int = 0
    swap_betas: bool = False

    def __post_init__(self):
        if self.kind not in ("regular", "extreme"):
            raise ValueError(f"kind must be 'regular' or 'extreme', got {self.kind!r}")
        if self.n < 50:
            raise ValueError("n must be at least 50")


def _finish(config, X, W, e, y0, y1, rng):
    z = (rng.random(config.n) < e).astype(np.int64)
    if config.flip_treatment:
        # Relabel before the outcome is revealed, so units now labelled
        # treated show their treated potential outcome.
        z = 1 - z
    y = np.where(z == 1, y1, y0)
    labels = tuple(f"X{j + 1}" for j in range(X.shape[1]))
    return SimSample(z=z, y=y, X=X, labels=labels, W=W, y1=y1, y0=y0, true_tau=config.tau_shift)


def gen_regular(config: DgpConfig, rng=None) -> SimSample:
    """Four skewed covariates with moderate propensity scores (no intercept in
    the true propensity model). Control outcomes have noise SD 5, treated SD 1."""
    if config.kind != "regular":
        raise ValueError("gen_regular needs kind='regular'")
    rng = stream(config.seed, DATA) if rng is None else rng
    n = config.n
    W = np.column_stack([
        rng.binomial(1, 0.5, n).astype(float),
        rng.uniform(0.0, 2.0, n),
        rng.exponential(1.0, n),
        rng.chisquare(4, n),
    ])
    x1 = W[:, 0]
    x2 = W[:, 1] + 0.3 * x1
    x3 = W[:, 2] + 0.2 * (x1 * x2 - x2)
    x4 = W[:, 3] + 0.1 * (x1 + x3 + x2 * x3)
    X = np.column_stack([x1, x2, x3, x4])
    e = expit(X @ REGULAR_THETA)
    # Coefficient labels follow the original design: Y(0) uses beta_1.
    b_y0, b_y1 = (REGULAR_BETA0, REGULAR_BETA1) if config.swap_betas else (REGULAR_BETA1, REGULAR_BETA0)
    Xc = X - REGULAR_MEAN_X
    mu0, mu1 = 1.0, 1.0 + config.tau_shift
    y0 = mu0 + Xc @ b_y0 + rng.normal(0.0, 5.0, n)
    y1 = mu1 + Xc @ b_y1 + rng.normal(0.0, 1.0, n)
    return _finish(config, X, W, e, y0, y1, rng)


def gen_extreme(config: DgpConfig, rng=None) -> SimSample:
    """Two log-normal covariates; the propensity score reaches values very close
    to 0 and 1."""
    if config.kind != "extreme":
        raise ValueError("gen_extreme needs kind='extreme'")
    rng = stream(config.seed, DATA) if rng is None else rng
    n = config.n
    W = rng.standard_normal((n, 2))
    X = np.exp(W)
    e = expit(EXTREME_INTERCEPT + X @ EXTREME_THETA)
    b_y0, b_y1 = (EXTREME_BETA0, EXTREME_BETA1) if config.swap_betas else (EXTREME_BETA1, EXTREME_BETA0)
    Xc = X - EXTREME_MEAN_X
    y0 = EXTREME_MU + Xc @ b_y0 + rng.normal(0.0, 5.0, n)
    y1 = EXTREME_MU + config.tau_shift + Xc @ b_y1 + rng.normal(0.0, 1.0, n)
    return _finish(config, X, W, e, y0, y1, rng)


def generate(config: DgpConfig) -> SimSample:
    return gen_regular(config) if config.kind == "regular" else gen_extreme(config)


@dataclass(frozen=True)
class ScenarioSpec:
    id: str
    ps_subset: tuple
    outcome_subset: tuple


_MISSPECIFIED = {"regular": ("W2", "W3"), "extreme": ("W1", "W2")}
_N_COVARIATES = {"regular": 4, "extreme": 2}


def scenario(kind: str, id: str) -> ScenarioSpec:
    """Column selections for scenario ``i`` (both models correct), ``ii``
    (outcome model wrong), ``iii`` (propensity model wrong) or ``iv`` (both
    wrong)."""
    if id not in ("i", "ii", "iii", "iv"):
        raise ValueError(f"scenario must be one of i, ii, iii, iv; got {id!r}")
    xs = tuple(f"X{j + 1}" for j in range(_N_COVARIATES[kind]))
    ws = _MISSPECIFIED[kind]
    ps = ws if id in ("iii", "iv") else xs
    out = ws if id in ("ii", "iv") else xs
    return ScenarioSpec(id, ps, out)


def apply_scenario(sim: SimSample, spec: ScenarioSpec) -> tuple[tuple, tuple]:
    """Validate the scenario's columns against ``sim`` and return
    ``(ps_subset, outcome_subset)``."""
    sim.column_indices(spec.ps_subset)
    sim.column_indices(spec.outcome_subset)
    return spec.ps_subset, spec.outcome_subset


@dataclass(frozen=True)
class MethodSpec:
    """One p-value variant in a study: ``kind`` is ``ppp_a``, ``ppp_b`` or
    ``normal``."""

    name: str
    kind: str
    statistic: StatisticSpec = field(default_factory=StatisticSpec)

    def __post_init__(self):
        if self.kind not in ("ppp_a", "ppp_b", "normal"):
            raise ValueError(f"unknown p-value kind {self.kind!r}")


@dataclass(eq=False)
class StudyResult:
    methods: list[str]
    pvalues: np.ndarray  # (successful replications, methods)
    replication_ids: np.ndarray
    n_failed: int
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def rejection_rates(self, alphas=ALPHAS) -> dict:
        return {a: (self.pvalues <= a).mean(axis=0) for a in alphas}

    def ks(self) -> np.ndarray:
        return np.array([ks_uniform(self.pvalues[:, j]) for j in range(self.pvalues.shape[1])])

    def column(self, name: str) -> np.ndarray:
        return self.pvalues[:, self.methods.index(name)]


def ks_uniform(p) -> float:
    """Kolmogorov-Smirnov distance between the empirical CDF of ``p`` and U(0, 1)."""
    p = np.sort(np.asarray(p, dtype=float))
    m = p.size
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - p), np.max(p - (i - 1) / m)))


def histogram(p, bins: int = N_BINS) -> tuple[np.ndarray, np.ndarray]:
    """Density histogram on [0, 1] (untruncated) and bin edges."""
    dens, edges = np.histogram(np.asarray(p, dtype=float), bins=bins, range=(0.0, 1.0), density=True)
    return dens, edges


def _one_replication(k, dgp, scen, methods, R, burn_in, B, S, seed):
    sim = generate(replace(dgp, seed=child_seed(seed, REPLICATION, k)))
    ps_sub, out_sub = apply_scenario(sim, scen)
    row = []
    for j, m in enumerate(methods):
        spec = replace(m.statistic, ps_subset=ps_sub, outcome_subset=out_sub, bootstrap_B=B)
        s = child_seed(seed, REPLICATION, k, j + 1)
        try:
            if m.kind == "normal":
                rep = normal_pvalue(sim, spec, seed=s)
            else:
                rep = ppp_pvalue(sim, spec, algorithm=m.kind[-1], R=R, burn_in=burn_in, S=S, seed=s)
        except (ModelError, StatisticUndefined, PPPError) as exc:
            return k, None, f"{m.name}: {type(exc).__name__}: {exc}"
        row.append(rep.p_value)
    return k, row, None


def run_study(
    dgp: DgpConfig,
    scen: ScenarioSpec,
    methods: Sequence[MethodSpec],
    replications: int = 300,
    R: int = 300,
    burn_in: int = 300,
    B: int = 2000,
    S: int = 100,
    seed: int = 0,
    threads: int = 1,
    max_failed_fraction: float = 0.1,
) -> StudyResult:
    """Repeatedly generate data and compute every requested p-value.

    Replication ``k`` draws its data and Monte Carlo streams from
    ``(seed, k)``, independent of ``threads``. Replications in which any
    method fails on the observed data are dropped and counted.
    """
    methods = list(methods)
    out = parallel_map(
        lambda k: _one_replication(k, dgp, scen, methods, R, burn_in, B, S, seed),
        range(replications),
        threads,
    )
    ok = [(k, row) for k, row, _ in out if row is not None]
    failures = [(k, msg) for k, row, msg in out if row is None]
    if len(failures) > max_failed_fraction * replications:
        raise StudyReliabilityError(
            f"{len(failures)} of {replications} replications failed; first: {failures[0][1]}"
        )
    pv = np.array([row for _, row in ok], dtype=float).reshape(len(ok), len(methods))
    config = {
        "dgp": dgp.kind, "n": dgp.n, "tau_shift": dgp.tau_shift, "flip_treatment": dgp.flip_treatment,
        "swap_betas": dgp.swap_betas, "scenario": scen.id, "replications": replications,
        "R": R, "burn_in": burn_in, "B": B, "S": S, "seed": seed,
    }
    return StudyResult(
        [m.name for m in methods], pv, np.array([k for k, _ in ok], dtype=int), len(failures), failures, config,
    )


def summarize(result: StudyResult, outdir=None, prefix: str = "") -> list[dict]:
    """Rejection rates (with binomial standard errors), KS distance and
    histograms for each method.

    With ``outdir``, writes ``summary.csv`` and one SVG histogram per method.
    """
    pv = result.pvalues
    if pv.size == 0:
        raise ValueError("empty p-value matrix")
    m = pv.shape[0]
    rows = []
    for j, name in enumerate(result.methods):
        col = pv[:, j]
        row = {"method": name, "replications": m, "n_failed": result.n_failed}
        for a in ALPHAS:
            rate = float(np.mean(col <= a))
            row[f"reject_{a:g}"] = rate
            row[f"se_{a:g}"] = math.sqrt(max(rate * (1 - rate), 0.0) / m)
        row["ks"] = ks_uniform(col)
        dens, _ = histogram(col)
        row["density"] = dens
        rows.append(row)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        keys = ["method", "replications", "n_failed"]
        for a in ALPHAS:
            keys += [f"reject_{a:g}", f"se_{a:g}"]
        keys += ["ks"] + [f"bin{b + 1}" for b in range(N_BINS)]
        with (outdir / f"{prefix}summary.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(keys)
            for row in rows:
                vals = [row["method"], row["replications"], row["n_failed"]]
                vals += [f"{row[k]:.10g}" for k in keys[3 : 4 + 2 * len(ALPHAS)]]
                vals += [f"{d:.10g}" for d in row["density"]]
                w.writerow(vals)
        for row in rows:
            (outdir / f"{prefix}hist_{row['method']}.svg").write_text(histogram_svg(row["density"], row["method"]))
    return rows


def histogram_svg(density, title: str = "", cap: float = DENSITY_CAP, width: int = 360, height: int = 240) -> str:
    """Bar chart of a density histogram on [0, 1] with bars truncated at
    ``cap``; a dashed line marks the uniform density 1."""
    density = np.minimum(np.asarray(density, dtype=float), cap)
    left, right, top, bottom = 40, 10, 24, 30
    pw, ph = width - left - right, height - top - bottom
    k = len(density)
    bw = pw / k

    def ypos(v):
        return top + ph * (1.0 - v / cap)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="10">',
        f'<text x="{width / 2:.1f}" y="14" text-anchor="middle" font-size="12">{_escape(title)}</text>',
    ]
    for i, v in enumerate(density):
        y = ypos(v)
        parts.append(
            f'<rect x="{left + i * bw:.2f}" y="{y:.2f}" width="{bw:.2f}" height="{top + ph - y:.2f}" '
            'fill="#9ecae1" stroke="#3182bd" stroke-width="0.5"/>'
        )
    parts.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')
    parts.append(
        f'<line x1="{left}" y1="{ypos(1.0):.2f}" x2="{left + pw}" y2="{ypos(1.0):.2f}" '
        'stroke="grey" stroke-dasharray="4 3"/>'
    )
    for v in (0.0, 0.5, 1.0, 1.5, 2.0):
        if v <= cap:
            parts.append(f'<text x="{left - 4}" y="{ypos(v) + 3:.2f}" text-anchor="end">{v:g}</text>')
    for v in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{left + v * pw:.2f}" y="{top + ph + 14}" text-anchor="middle">{v:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
