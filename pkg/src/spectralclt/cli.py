"""Command-line entry point: ``spectralclt <command> ...``.

Exit status is 0 for a finite/passing result, 2 for a negative verdict and
1 for usage or runtime errors.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .domain import resolve_domain
from .functional_mc import ExperimentConfig, load_config, run_replications, run_shared
from .hermite import DEFAULT_Q_MAX, classify_case, resolve_observable
from .spectral import covariance_function, covariance_summable, resolve_measure, spectral_condition
from .variance_theory import contraction_ratio, rank_one_variance, total_variance

EXIT_OK, EXIT_ERROR, EXIT_NEGATIVE = 0, 1, 2

PROFILES = {
    "smoke": dict(t_list=(4.0, 8.0, 16.0), n_reps=16, M=256, h=0.5),
    "desk": dict(t_list=(16.0, 32.0, 64.0, 128.0), n_reps=400, M=2048, h=0.5),
    "full": dict(t_list=(16.0, 32.0, 64.0, 128.0, 256.0), n_reps=1000, M=4096, h=0.5),
}

BERRY_CASES = [
    ("R=2", "hermite:2"),
    ("R=4", "hermite:4"),
    ("R=6", "hermite:6"),
    ("R=1,R'=2", "sq_plus_lin"),
]

NORMALITY_LIMITS = dict(skewness=0.25, excess_kurtosis=0.5)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _emit(args, name: str, text: str):
    sys.stdout.write(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# --- commands ------------------------------------------------------------------------

def cmd_spectral_check(args) -> int:
    mu = resolve_measure(args.measure)
    cond = spectral_condition(mu, args.d, args.R)
    _emit(args, "spectral_check.json", _dumps(dict(measure=mu.measure_id, d=args.d, R=args.R, **cond.to_dict())))
    return EXIT_OK if cond.finite else EXIT_NEGATIVE


def cmd_hermite(args) -> int:
    obs = resolve_observable(args.observable)
    e = obs.expansion(args.q_max)
    result = dict(observable=obs.id, coeffs=[float(c) for c in e.coeffs], rank=e.rank,
                  second_rank=None if math.isinf(e.second_rank) else int(e.second_rank),
                  l2_norm_sq=e.l2_norm_sq, mean=e.mean)
    if args.measure and e.rank is not None:
        mu = resolve_measure(args.measure)
        label = classify_case(e, covariance_summable(mu, args.d, e.rank))
        result.update(measure=mu.measure_id, d=args.d, case=str(label))
    _emit(args, "hermite.json", _dumps(result))
    return EXIT_OK


def cmd_covariance(args) -> int:
    rho = covariance_function(resolve_measure(args.measure), args.d)
    r = np.arange(0.0, args.r_max + 0.5 * args.step, args.step)
    vals = np.atleast_1d(rho(r))
    _emit(args, "covariance.csv", _csv_text(["r", "rho"], [(repr(float(a)), repr(float(b))) for a, b in zip(r, vals)]))
    return EXIT_OK


def cmd_variance_table(args) -> int:
    mu = resolve_measure(args.measure)
    dom = resolve_domain(args.domain)
    e = resolve_observable(args.observable).expansion(args.q_max)
    table = total_variance(e, covariance_function(mu, dom.d), dom, args.t, mu)
    sys.stdout.write(table.to_csv())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "variance_table.csv").write_text(table.to_csv())
        (out / "variance_table.json").write_text(table.to_json() + "\n")
    return EXIT_OK


def cmd_rank1_variance(args) -> int:
    mu = resolve_measure(args.measure)
    dom = resolve_domain(args.domain)
    rows = [(repr(t), repr(rank_one_variance(mu, dom, t))) for t in args.t]
    _emit(args, "rank1_variance.csv", _csv_text(["t", "var_rank1"], rows))
    return EXIT_OK


def cmd_contraction(args) -> int:
    mu = resolve_measure(args.measure)
    dom = resolve_domain(args.domain)
    rho = covariance_function(mu, dom.d)
    rows = []
    for t in args.t:
        est = contraction_ratio(rho, dom, args.q, args.r, t, args.n_mc, args.seed)
        rows.append((repr(t), repr(float(est.estimate)), repr(float(est.std_error)), est.n_mc))
    _emit(args, "contraction.csv", _csv_text(["t", "estimate", "std_error", "n_mc"], rows))
    return EXIT_OK


def cmd_run(args) -> int:
    if not args.config:
        raise ValueError("run needs --config <path>")
    cfg = load_config(args.config, seed=args.seed, workers=args.workers)
    report = run_replications(cfg)
    out = report.write(args.out or "out")
    if args.plot:
        _plot_rates(out / "rates.svg", {cfg.observable_id: report})
    sys.stdout.write(_dumps(dict(out=str(out), case=report.case,
                                 rate=None if report.rate is None else report.rate.to_dict())))
    if report.rate is not None and report.rate.verdict == "FAIL":
        return EXIT_NEGATIVE
    return EXIT_OK


def normality_verdict(row) -> bool:
    if row["skewness"] is None:
        return False
    return (abs(row["skewness"]) < NORMALITY_LIMITS["skewness"]
            and abs(row["excess_kurtosis"]) < NORMALITY_LIMITS["excess_kurtosis"]
            and row["ks_statistic"] < row["ks_critical_1pct"])


def suite_rows(reports: dict) -> list:
    """One verdict row per case: rate fit plus normality at the largest scale."""
    rows = []
    for label, obs in BERRY_CASES:
        rep = reports[obs]
        last = rep.scales[-1].row()
        rate = rep.rate
        rows.append(dict(
            case=label, observable=obs, classified=rep.case,
            predicted_exponent=None if rate is None else rate.predicted_exponent,
            log_correction=None if rep.prediction is None else rep.prediction["log_correction"],
            fitted_exponent=None if rate is None else rate.fitted_exponent,
            ci_low=None if rate is None else rate.ci[0], ci_high=None if rate is None else rate.ci[1],
            ratio_spread=None if rate is None else rate.ratio_spread,
            rate_verdict="UNDETERMINED" if rate is None else rate.verdict,
            t_max=last["t"], skewness=last["skewness"], excess_kurtosis=last["excess_kurtosis"],
            ks_statistic=last["ks_statistic"], ks_critical_1pct=last["ks_critical_1pct"],
            normality_verdict="PASS" if normality_verdict(last) else "FAIL"))
    return rows


def cmd_berry_suite(args) -> int:
    profile = args.profile or "smoke"
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
    settings = dict(PROFILES[profile])
    if args.config:
        base = load_config(args.config)
        settings.update(t_list=base.t_list, n_reps=base.n_reps, M=base.M, h=base.h)
    cfg = ExperimentConfig("berry", BERRY_CASES[0][1], "ball:2,1", seed=args.seed or 0,
                           workers=args.workers or 1, **settings)
    reports = run_shared(cfg, [obs for _, obs in BERRY_CASES])
    out = Path(args.out or "berry_suite")
    for label, obs in BERRY_CASES:
        reports[obs].write(out / obs.replace(":", "_"))
    rows = suite_rows(reports)
    header = list(rows[0])
    text = _csv_text(header, [[("" if r[k] is None else r[k]) for k in header] for r in rows])
    (out / "verdicts.csv").write_text(text)
    sys.stdout.write(text)
    if args.plot:
        _plot_rates(out / "rates.svg", reports)
    if profile == "smoke":
        return EXIT_OK
    ok = all(r["rate_verdict"] == "PASS" for r in rows) and all(
        r["normality_verdict"] == "PASS" for r in rows if r["case"] != "R=4")
    return EXIT_OK if ok else EXIT_NEGATIVE


def _plot_rates(path, reports):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed; skipping plot (pip install 'artifact[plot]')", file=sys.stderr)
        return
    plt.rcParams["svg.hashsalt"] = "spectralclt"
    fig, ax = plt.subplots(figsize=(5, 4))
    for obs, rep in reports.items():
        ts = [s.t for s in rep.scales]
        ax.errorbar(ts, [s.variance for s in rep.scales], yerr=[s.variance_se for s in rep.scales],
                    marker="o", ls="none", label=f"{obs} (MC)")
        if all(s.var_theory for s in rep.scales):
            ax.plot(ts, [s.var_theory for s in rep.scales], ls="--")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("Var(Y_t)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# --- parser --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad usage; 2 is reserved here for negative verdicts."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config file (key = value; see docs/config.md)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="root seed (unsigned 64-bit)")
    common.add_argument("--workers", type=int, help="worker processes for replications")
    common.add_argument("--profile", help="budget profile: smoke, desk or full")
    common.add_argument("--plot", action="store_true", help="also write an SVG plot (needs matplotlib)")

    p = _Parser(prog="spectralclt", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text):
        sp = sub.add_parser(name, parents=[common], help=help_text.splitlines()[0], description=help_text,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    sp = add("spectral-check", cmd_spectral_check,
             "Check the spectral condition int s^(-d/R) mu(ds) < inf.\n"
             "Prints JSON {finite, value}; exit 0 when finite, 2 when divergent.")
    sp.add_argument("measure", help="berry | atom:s0 | bessel:d,nu | powerlaw:beta[,smin,smax] | table:path")
    sp.add_argument("d", type=int)
    sp.add_argument("R", type=int, help="Hermite rank")

    sp = add("hermite", cmd_hermite,
             "Hermite coefficients a_q = E[phi(N) H_q(N)] / q!, rank R and second rank R'.\n"
             "With --measure and --d also reports the limit-theorem case.")
    sp.add_argument("observable", help="hermite:q | poly:c0,c1,... | indicator_above:u | abs | sq_plus_lin")
    sp.add_argument("--q-max", type=int, default=DEFAULT_Q_MAX)
    sp.add_argument("--measure")
    sp.add_argument("--d", type=int, default=2)

    sp = add("covariance", cmd_covariance,
             "Radial covariance rho(r) = int b_d(r s) mu(ds) with b_d(x) = Gamma(d/2) (2/x)^(d/2-1) J_(d/2-1)(x).")
    sp.add_argument("measure")
    sp.add_argument("d", type=int)
    sp.add_argument("--r-max", type=float, default=20.0)
    sp.add_argument("--step", type=float, default=0.5)

    sp = add("variance-table", cmd_variance_table,
             "Chaos variances Var(Y_q,t) = q! t^d v_q,t with v_q,t = int rho(|z|)^q g_D(z/t) dz,\n"
             "w_q,t = int_{|z|<=t} rho^q, and sigma_t^2 = sum_q a_q^2 Var(Y_q,t).")
    sp.add_argument("measure")
    sp.add_argument("observable")
    sp.add_argument("domain", help="ball:d,r | cube:d,side")
    sp.add_argument("t", type=float)
    sp.add_argument("--q-max", type=int, default=DEFAULT_Q_MAX)

    sp = add("rank1-variance", cmd_rank1_variance,
             "First-chaos variance int t^(2d) |F[1_D](t lambda)|^2 G(d lambda),\n"
             "with F[f](y) = int f(x) exp(i<x,y>) dx.  Berry on ball:2,1 gives 4 pi^2 t^2 J_1(t)^2.")
    sp.add_argument("measure")
    sp.add_argument("domain")
    sp.add_argument("t", type=float, nargs="+")

    sp = add("contraction", cmd_contraction,
             "Monte Carlo estimate of the normalized contraction integral\n"
             "t^d / Var(Y_q,t)^2 * int |C(x)|^r |C(y)|^r |C(z)|^(q-r) |C(x+y+z)|^(q-r) dx dy dz\n"
             "over x, y, z in the ball of radius diam(D) t.")
    sp.add_argument("measure")
    sp.add_argument("domain")
    sp.add_argument("q", type=int)
    sp.add_argument("r", type=int)
    sp.add_argument("t", type=float, nargs="+")
    sp.add_argument("--n-mc", type=int, default=10**6)

    add("run", cmd_run,
        "Replicate Y_t = int_{tD} phi(B_x) dx from a config file and write manifest.json,\n"
        "samples_t<t>.csv, report.json, report.csv and rates.csv.  Exit 2 if the rate verdict fails.")

    add("berry-suite", cmd_berry_suite,
        "Berry random waves on ball:2,1 for phi = H_2, H_4, H_6 and x + x^2.\n"
        "Expected growth of Var(Y_t): t^3, t^2 log t, t^2 and t^3.  Writes per-case reports and\n"
        "verdicts.csv; profiles smoke (no verdict), desk and full.")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and args.command == "contraction":
        args.seed = 0
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
