"""Command-line interface.

Subcommands: ``ppp``, ``frt``, ``normal``, ``simulate`` and ``summarize``.
Every run writes into its own subdirectory of the output root and echoes the
resolved configuration to ``config.txt``.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import load_csv
from .errors import DesignError, PPPError
from .ppp import (
    REPORT_FIELDS,
    BernoulliDesign,
    CompleteRandomization,
    StatisticSpec,
    frt_pvalue,
    normal_pvalue,
    ppp_pvalue,
)
from .simulation import DgpConfig, MethodSpec, StudyResult, run_study, scenario, summarize

OUTPUT_ENV = "PPP_OUTPUT_DIR"

EXIT_CODES = {
    0: "success",
    1: "unexpected internal error",
    2: "usage error: unknown flag, bad value or invalid flag combination",
    3: "ingestion failure: unreadable, malformed or invalid data file",
    4: "model failure: singular design, separation, degenerate variance or undefined statistic",
    5: "reliability failure: unstable bootstrap or too many failed study replications",
}


class UsageError(PPPError):
    exit_code = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _subset(text):
    if text is None:
        return None
    text = text.strip()
    if text in ("", "none", "intercept"):
        return ()
    return tuple(int(t) if t.strip().isdigit() else t.strip() for t in text.split(","))


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _add_statistic(p, studentized_default=True):
    g = p.add_argument_group("test statistic")
    g.add_argument("--estimator", choices=["ipw", "reg", "dr"], default="dr")
    g.add_argument(
        "--studentized", action=argparse.BooleanOptionalAction, default=studentized_default,
        help="divide |tau_hat| by its standard error (default: %(default)s)",
    )
    g.add_argument("--se-method", choices=["sandwich", "bootstrap"], default="sandwich")
    g.add_argument("--bootstrap-B", type=_positive, default=None,
                   help="bootstrap resamples when --se-method bootstrap (default 200 inside Monte Carlo loops)")
    g.add_argument("--ps-columns", default=None,
                   help="comma-separated propensity-model columns; empty string for intercept only (default: all)")
    g.add_argument("--outcome-columns", default=None,
                   help="comma-separated outcome-model columns; empty string for intercept only (default: all)")
    g.add_argument("--freeze-outcome", action="store_true",
                   help="reuse the observed outcome fit for synthetic assignments (fast, approximate)")


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=_positive, default=1, help="worker threads; results do not depend on it")
    p.add_argument("--out", default=None, help=f"output root (default: ${OUTPUT_ENV} or ./runs)")
    p.add_argument("--run-name", default=None, help="subdirectory name (default: command + UTC timestamp)")


def build_parser() -> argparse.ArgumentParser:
    epilog = "exit codes:\n" + "\n".join(f"  {k}  {v}" for k, v in EXIT_CODES.items())
    parser = _Parser(
        prog="pppcausal",
        description="Posterior predictive p-values for the null of no treatment effect.",
        epilog=epilog,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, help):
        return sub.add_parser(name, help=help, description=help, epilog=epilog,
                              formatter_class=argparse.RawDescriptionHelpFormatter)

    p = add("ppp", "posterior predictive p-value on a CSV dataset")
    p.add_argument("--data", required=True, help="CSV with columns z, y and covariates")
    _add_statistic(p)
    p.add_argument("--algorithm", choices=["a", "b"], default="a",
                   help="a: one assignment per posterior draw; b: averaged randomization p-values")
    p.add_argument("--draws", type=_positive, default=2000, help="retained posterior draws R")
    p.add_argument("--burnin", type=int, default=1000)
    p.add_argument("--inner-draws", type=_positive, default=None, help="assignments per posterior draw S (algorithm b, default 200)")
    p.add_argument("--export-draws", action="store_true", help="also write the posterior draws to draws.csv")
    _add_common(p)

    p = add("frt", "Fisher randomization test under a known design")
    p.add_argument("--data", required=True)
    p.add_argument("--design", required=True,
                   help="complete:m=<treated count> | bernoulli:p=<prob> | bernoulli:column=<csv column>")
    _add_statistic(p)
    p.add_argument("--inner-draws", type=_positive, default=10000, help="randomization draws S")
    _add_common(p)

    p = add("normal", "two-sided normal-approximation p-value of the studentized estimator")
    p.add_argument("--data", required=True)
    _add_statistic(p)
    _add_common(p)

    p = add("simulate", "replication study of p-value distributions")
    p.add_argument("--config", default=None, help="key=value file; explicit flags override it")
    p.add_argument("--dgp", choices=["regular", "extreme"], default="regular")
    p.add_argument("--scenario", choices=["i", "ii", "iii", "iv"], default="i")
    p.add_argument("--reps", type=_positive, default=300)
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--tau-shift", type=float, default=0.0)
    p.add_argument("--flip", action="store_true", help="swap treatment labels before outcomes are revealed")
    p.add_argument("--swap-betas", action="store_true", help="exchange the two arms' outcome slopes")
    p.add_argument("--methods", default="ppp_a:dr:stud,normal:dr:stud",
                   help="comma list of kind:estimator:stud|unstud[:boot], kind in ppp_a, ppp_b, normal")
    p.add_argument("--draws", type=_positive, default=300, help="posterior draws R per replication")
    p.add_argument("--burnin", type=int, default=300)
    p.add_argument("--bootstrap-B", type=_positive, default=2000)
    p.add_argument("--inner-draws", type=_positive, default=100, help="S for ppp_b methods")
    _add_common(p)

    p = add("summarize", "rejection rates, KS distances and histograms from a p-value CSV")
    p.add_argument("--input", required=True, help="pvalues.csv written by simulate")
    _add_common(p)
    return parser


def _spec(args) -> StatisticSpec:
    if args.se_method == "bootstrap" and not args.studentized:
        raise UsageError("--se-method bootstrap requires --studentized")
    if args.bootstrap_B is not None and args.se_method != "bootstrap":
        raise UsageError("--bootstrap-B requires --se-method bootstrap")
    return StatisticSpec(
        estimator=args.estimator,
        studentized=args.studentized,
        se_method=args.se_method,
        ps_subset=_subset(args.ps_columns),
        outcome_subset=_subset(args.outcome_columns),
        bootstrap_B=args.bootstrap_B or 200,
        freeze_outcome=args.freeze_outcome,
    )


def parse_methods(text) -> list[MethodSpec]:
    out = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) not in (3, 4) or parts[2] not in ("stud", "unstud") or (len(parts) == 4 and parts[3] != "boot"):
            raise UsageError(f"bad method {item!r}; expected kind:estimator:stud|unstud[:boot]")
        kind, est, stud = parts[:3]
        boot = len(parts) == 4
        if boot and stud != "stud":
            raise UsageError(f"{item!r}: bootstrap standard errors need a studentized statistic")
        if kind == "normal" and stud != "stud":
            raise UsageError(f"{item!r}: the normal approximation needs a studentized statistic")
        try:
            spec = StatisticSpec(est, stud == "stud", "bootstrap" if boot else "sandwich")
            out.append(MethodSpec(item.strip().replace(":", "_"), kind, spec))
        except ValueError as exc:
            raise UsageError(f"{item!r}: {exc}") from None
    return out


def _design(text):
    kind, _, rest = text.partition(":")
    key, _, value = rest.partition("=")
    try:
        if kind == "complete" and key == "m":
            return CompleteRandomization(int(value)), None
        if kind == "bernoulli" and key == "p":
            return BernoulliDesign(float(value)), None
    except ValueError:
        raise DesignError(f"cannot parse design {text!r}") from None
    if kind == "bernoulli" and key == "column":
        return None, value
    raise DesignError(f"cannot parse design {text!r}")


def _resolved(args) -> list[tuple[str, str]]:
    skip = {"out", "run_name", "threads", "config"}
    return sorted((k, str(v)) for k, v in vars(args).items() if k not in skip)


def _run_dir(args) -> Path:
    root = Path(args.out or os.environ.get(OUTPUT_ENV) or "runs")
    if args.run_name:
        d = root / args.run_name
    else:
        digest = hashlib.sha1(repr(_resolved(args)).encode()).hexdigest()[:8]
        stamp = _dt.datetime.now(_dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
        d = root / f"{args.command}-{stamp}-{digest}"
        k = 1
        while d.exists():
            k += 1
            d = root / f"{args.command}-{stamp}-{digest}-{k}"
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text("".join(f"{k}={v}\n" for k, v in _resolved(args)))
    return d


def _write_report(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_FIELDS)
        w.writerow(report.csv_values())


def _print_report(report, outdir):
    print(
        f"{report.method} estimator={report.estimator} studentized={int(report.studentized)} "
        f"p={report.p_value:.6g} T_obs={report.t_observed:.6g} R={report.R} S={report.S} "
        f"degenerate={report.n_degenerate} -> {outdir}"
    )
    if report.warning:
        print(f"warning: {report.warning}", file=sys.stderr)


def _cmd_ppp(args):
    if args.algorithm == "a" and args.inner_draws is not None:
        raise UsageError("--inner-draws only applies to --algorithm b")
    spec = _spec(args)
    sample = load_csv(args.data)
    outdir = _run_dir(args)
    if args.export_draws:
        from ._random import SAMPLER, child_seed
        from .propensity import sample_posterior

        X_ps = sample.columns(spec.ps_subset)
        draws = sample_posterior(X_ps, sample.z, args.burnin, args.draws, seed=child_seed(args.seed, SAMPLER))
        names = ["intercept", *(sample.pool_labels[j] for j in sample.column_indices(spec.ps_subset))]
        draws.to_csv(outdir / "draws.csv", names)
    report = ppp_pvalue(
        sample, spec, algorithm=args.algorithm, R=args.draws, burn_in=args.burnin,
        S=args.inner_draws or 200, seed=args.seed, threads=args.threads,
    )
    _write_report(outdir / "report.csv", report)
    _print_report(report, outdir)


def _cmd_frt(args):
    spec = _spec(args)
    design, column = _design(args.design)
    sample = load_csv(args.data)
    if column is not None:
        if column not in sample.labels:
            raise DesignError(f"design column {column!r} not in {args.data}")
        j = sample.labels.index(column)
        probs = sample.X[:, j]
        keep = [k for k in range(sample.d) if k != j]
        sample = type(sample)(z=sample.z, y=sample.y, X=sample.X[:, keep], labels=tuple(sample.labels[k] for k in keep))
        design = BernoulliDesign(np.array(probs))
    design.check(sample.n)
    outdir = _run_dir(args)
    report = frt_pvalue(sample, spec, design, S=args.inner_draws, seed=args.seed, threads=args.threads)
    _write_report(outdir / "report.csv", report)
    _print_report(report, outdir)


def _cmd_normal(args):
    if not args.studentized:
        raise UsageError("the normal approximation needs --studentized")
    spec = _spec(args)
    sample = load_csv(args.data)
    outdir = _run_dir(args)
    report = normal_pvalue(sample, spec, seed=args.seed)
    _write_report(outdir / "report.csv", report)
    _print_report(report, outdir)


def _write_pvalues(path, result: StudyResult):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replication", "method", "p_value"])
        for k, row in zip(result.replication_ids, result.pvalues):
            for name, p in zip(result.methods, row):
                w.writerow([int(k), name, f"{p:.17g}"])


def _print_summary(rows, outdir):
    parts = [f"{r['method']}: reject@0.05={r['reject_0.05']:.3f} ks={r['ks']:.3f}" for r in rows]
    print("; ".join(parts) + f" (replications={rows[0]['replications']}, failed={rows[0]['n_failed']}) -> {outdir}")


def _cmd_simulate(args):
    methods = parse_methods(args.methods)
    dgp = DgpConfig(args.dgp, args.n, args.tau_shift, args.flip, args.seed, args.swap_betas)
    outdir = _run_dir(args)
    result = run_study(
        dgp, scenario(args.dgp, args.scenario), methods, replications=args.reps, R=args.draws,
        burn_in=args.burnin, B=args.bootstrap_B, S=args.inner_draws, seed=args.seed, threads=args.threads,
    )
    _write_pvalues(outdir / "pvalues.csv", result)
    if result.failures:
        with open(outdir / "failures.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replication", "reason"])
            w.writerows(result.failures)
    rows = summarize(result, outdir)
    _print_summary(rows, outdir)


def read_pvalues(path) -> StudyResult:
    table = {}
    methods = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"replication", "method", "p_value"} <= set(reader.fieldnames):
            raise PPPError(f"{path}: expected columns replication, method, p_value")
        for row in reader:
            m = row["method"]
            if m not in methods:
                methods.append(m)
            table.setdefault(int(row["replication"]), {})[m] = float(row["p_value"])
    reps = sorted(table)
    pv = np.array([[table[k].get(m, np.nan) for m in methods] for k in reps], dtype=float)
    return StudyResult(methods, pv.reshape(len(reps), len(methods)), np.array(reps), 0)


def _cmd_summarize(args):
    try:
        result = read_pvalues(args.input)
    except (OSError, ValueError) as exc:
        raise PPPError(str(exc)) from exc
    outdir = _run_dir(args)
    rows = summarize(result, outdir)
    _print_summary(rows, outdir)


COMMANDS = {
    "ppp": _cmd_ppp,
    "frt": _cmd_frt,
    "normal": _cmd_normal,
    "simulate": _cmd_simulate,
    "summarize": _cmd_summarize,
}


def _load_config(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = value.strip()
    return out


def _apply_config(parser, argv):
    """Feed a ``simulate --config`` file in as defaults for the subparser."""
    if not argv or argv[0] != "simulate" or "--config" not in argv:
        return
    i = argv.index("--config")
    if i + 1 >= len(argv):
        return
    cfg = _load_config(argv[i + 1])
    sub = parser._subparsers._group_actions[0].choices["simulate"]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for k, v in cfg.items():
        if k not in known or k in ("help", "config"):
            raise UsageError(f"unknown config key {k!r}")
        action = known[k]
        if isinstance(action, argparse._StoreTrueAction):
            defaults[k] = v.lower() in ("1", "true", "yes")
        else:
            conv = action.type or str
            try:
                defaults[k] = conv(v)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {k}: {exc}") from None
            if action.choices is not None and defaults[k] not in action.choices:
                raise UsageError(f"config key {k}: {v!r} not in {sorted(action.choices)}")
    sub.set_defaults(**defaults)


def _error(exc, code) -> int:
    msg = str(exc).replace('"', "'").replace("\n", " ")
    print(f'error: code={code} type={type(exc).__name__} message="{msg}"', file=sys.stderr)
    return code


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error(exc, 2)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        COMMANDS[args.command](args)
    except (FileNotFoundError, IsADirectoryError) as exc:
        return _error(exc, 3)
    except PPPError as exc:
        return _error(exc, exc.exit_code)
    except (KeyError, IndexError) as exc:
        return _error(exc, 2)
    except Exception as exc:  # noqa: BLE001
        return _error(exc, 1)
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
