"""Monte Carlo replication of ``Y_t = int_{tD} phi(B_x) dx`` with normality and rate diagnostics."""
from __future__ import annotations

import csv
import json
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy
from scipy import stats

from .domain import resolve_domain
from .field_sim import DEFAULT_BLOCK, DEFAULT_M, build_sampler, derive_seed, evaluate_lattice
from .hermite import DEFAULT_Q_MAX, classify_case, resolve_observable
from .quadrature import QuadratureError
from .spectral import covariance_function, covariance_summable, resolve_measure
from .variance_theory import predicted_rate, total_variance, w_qt

DEFAULT_BUDGET = 1e12
PERSIST_LIMIT = 10_000
KS_CRIT_1PCT = 1.628
RATE_TOL = 0.15

_INT_KEYS = {"d", "M", "n_reps", "seed", "block_size", "q_max", "workers"}
_FLOAT_KEYS = {"h", "budget"}


class ConfigError(ValueError):
    pass


class BudgetExceededError(ValueError):
    pass


class DegenerateVarianceError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    measure_id: str
    observable_id: str
    domain_id: str
    t_list: tuple
    n_reps: int
    d: int | None = None
    h: float = 0.5
    M: int = DEFAULT_M
    seed: int = 0
    normalization: str = "empirical"
    block_size: int = DEFAULT_BLOCK
    budget: float = DEFAULT_BUDGET
    persist_samples: bool | None = None
    q_max: int = DEFAULT_Q_MAX
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "t_list", tuple(float(t) for t in self.t_list))
        dom = resolve_domain(self.domain_id)
        if self.d is None:
            object.__setattr__(self, "d", dom.d)
        self.validate()

    def validate(self):
        if self.n_reps < 8:
            raise ConfigError(f"n_reps must be >= 8, got {self.n_reps}")
        ts = self.t_list
        if not ts or any(t <= 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ConfigError(f"t_list must be positive and strictly increasing, got {list(ts)}")
        if self.normalization not in ("empirical", "theoretical"):
            raise ConfigError(f"normalization must be 'empirical' or 'theoretical', got {self.normalization!r}")
        if not self.h > 0 or self.M < 1 or self.workers < 1 or not 0 <= self.seed < 2**64:
            raise ConfigError("need h > 0, M >= 1, workers >= 1 and 0 <= seed < 2^64")
        dom = resolve_domain(self.domain_id)
        if dom.d != self.d:
            raise ConfigError(f"d={self.d} does not match domain {self.domain_id}")
        resolve_measure(self.measure_id)
        resolve_observable(self.observable_id)

    @property
    def persist(self) -> bool:
        if self.persist_samples is None:
            return self.n_reps <= PERSIST_LIMIT
        return self.persist_samples

    def replace(self, **changes) -> "ExperimentConfig":
        data = asdict(self)
        data.update(changes)
        return ExperimentConfig(**data)

    def to_dict(self) -> dict:
        data = asdict(self)
        data["t_list"] = list(self.t_list)
        return data


def parse_config(text: str, **overrides) -> ExperimentConfig:
    """Read the ``key = value`` grammar documented in ``docs/config.md``."""
    fields = set(ExperimentConfig.__dataclass_fields__)
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep or not value:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        if key not in fields:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        data[key] = _convert(key, value, lineno)
    data.update({k: v for k, v in overrides.items() if v is not None})
    missing = [k for k in ("measure_id", "observable_id", "domain_id", "t_list", "n_reps") if k not in data]
    if missing:
        raise ConfigError(f"config is missing required keys: {', '.join(missing)}")
    try:
        return ExperimentConfig(**data)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _convert(key, value, lineno):
    try:
        if key == "t_list":
            return tuple(float(v) for v in value.split(","))
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
        if key == "persist_samples":
            if value.lower() not in ("true", "false"):
                raise ValueError
            return value.lower() == "true"
    except ValueError:
        raise ConfigError(f"line {lineno}: bad value {value!r} for {key}") from None
    return value


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


# --- replication kernel -------------------------------------------------------------

def _replicate(args):
    """``h^d sum phi(B)`` over the lattice cells inside ``tD`` for each observable, one replication."""
    mu, d, M, seed, block, axis, mask, cell, observable_ids = args
    # observables are resolved here because their callables do not pickle
    funcs = [resolve_observable(o).func for o in observable_ids]
    field_vals = evaluate_lattice(build_sampler(mu, d, M, seed, block), axis)[mask]
    return [cell * float(np.sum(f(field_vals))) for f in funcs]


def simulate(cfg: ExperimentConfig, observable_ids) -> dict:
    """Samples of ``Y_t`` for several observables evaluated on shared fields.

    Returns ``{observable_id: {t: array of n_reps values}}``.  Replication
    ``i`` at the ``j``-th scale always uses seed ``(cfg.seed, j, i)``, so
    the samples of one observable do not depend on which others ride along.
    """
    mu = resolve_measure(cfg.measure_id)
    dom = resolve_domain(cfg.domain_id)
    observable_ids = list(observable_ids)
    for o in observable_ids:
        resolve_observable(o)
    out = {o: {} for o in observable_ids}
    for j, t in enumerate(cfg.t_list):
        axis, mask = dom.lattice(t, cfg.h)
        cost = float(axis.size) ** cfg.d * cfg.M * cfg.n_reps
        if cost > cfg.budget:
            raise BudgetExceededError(
                f"t={t:g}: {axis.size}^{cfg.d} points x {cfg.M} waves x {cfg.n_reps} reps = {cost:.3g} "
                f"exceeds budget {cfg.budget:.3g}; raise h or budget")
        cell = cfg.h**cfg.d
        tasks = ((mu, cfg.d, cfg.M, derive_seed(cfg.seed, j, i), cfg.block_size, axis, mask, cell, observable_ids)
                 for i in range(cfg.n_reps))
        if cfg.workers > 1:
            with ProcessPoolExecutor(cfg.workers) as pool:
                rows = list(pool.map(_replicate, tasks, chunksize=max(1, cfg.n_reps // (4 * cfg.workers))))
        else:
            rows = [_replicate(task) for task in tasks]
        arr = np.array(rows, dtype=float).reshape(cfg.n_reps, len(observable_ids))
        for k, o in enumerate(observable_ids):
            out[o][t] = arr[:, k].copy()
    return out


# --- diagnostics ---------------------------------------------------------------------

@dataclass(frozen=True)
class NormalityReport:
    skewness: float
    excess_kurtosis: float
    ks_statistic: float
    p_value_bounds: tuple
    ks_critical_1pct: float
    n: int

    @property
    def ks_pass(self) -> bool:
        return self.ks_statistic < self.ks_critical_1pct

    def to_dict(self):
        d = asdict(self)
        d["p_value_bounds"] = list(self.p_value_bounds)
        return d


def normality_report(samples, center: float | None = None, scale: float | None = None) -> NormalityReport:
    """Skewness, excess kurtosis and Kolmogorov-Smirnov distance of normalized samples.

    By default the samples are studentized.  Passing ``center`` and ``scale``
    (the theoretical ``m_t`` and ``sigma_t``) uses ``(x - center) / scale``
    instead, with moments taken about zero.  P-values come from the
    asymptotic Kolmogorov distribution, once with the plain scaling
    ``sqrt(n) D`` and once with Stephens' small-sample correction; the pair
    is reported as ``(low, high)``.
    """
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 8:
        raise ValueError(f"need at least 8 samples, got {n}")
    sd = x.std(ddof=1)
    if not sd > 0 or sd <= 1e-14 * np.abs(x).max():
        raise DegenerateVarianceError(
            "samples have zero variance; the normalization sigma_t is degenerate at this t")
    if scale is None:
        z = (x - x.mean()) / sd
        skew = float(stats.skew(z))
        kurt = float(stats.kurtosis(z))
    else:
        if not scale > 0:
            raise DegenerateVarianceError(f"theoretical sigma_t = {scale} is degenerate at this t")
        z = (x - (center or 0.0)) / scale
        skew = float(np.mean(z**3))
        kurt = float(np.mean(z**4) - 3.0)
    ks = float(stats.kstest(z, "norm").statistic)
    rn = math.sqrt(n)
    p_plain = float(stats.kstwobign.sf(rn * ks))
    p_stephens = float(stats.kstwobign.sf((rn + 0.12 + 0.11 / rn) * ks))
    return NormalityReport(skew, kurt, ks, (min(p_plain, p_stephens), max(p_plain, p_stephens)),
                           KS_CRIT_1PCT / rn, n)


@dataclass(frozen=True)
class RateFit:
    fitted_exponent: float
    ci: tuple
    ratio_series: tuple
    log_ratio_series: tuple | None
    ratio_spread: float
    predicted_exponent: float | None
    verdict: str

    def to_dict(self):
        return dict(fitted_exponent=self.fitted_exponent, ci=list(self.ci), ratio_series=list(self.ratio_series),
                    log_ratio_series=None if self.log_ratio_series is None else list(self.log_ratio_series),
                    ratio_spread=self.ratio_spread, predicted_exponent=self.predicted_exponent,
                    verdict=self.verdict)


def rate_fit(ts, variances, prediction=None, tolerance: float = RATE_TOL, ratio_factor: float = 3.0) -> RateFit:
    """Least-squares slope of ``log Var`` against ``log t`` with a 95% interval.

    ``ratio_series`` is ``Var / t^p`` for the predicted exponent ``p`` (divided
    further by ``log t`` in ``log_ratio_series`` when a logarithm is
    predicted).  The verdict is PASS when the slope is within ``tolerance``
    of ``p`` or the relevant ratio series stays within ``ratio_factor``.
    """
    ts = np.asarray(ts, dtype=float)
    var = np.asarray(variances, dtype=float)
    if ts.size < 3 or ts.max() / ts.min() < 8:
        raise ValueError("rate fit needs at least 3 scales spanning a factor of 8")
    if np.any(var <= 0):
        raise ValueError("variances must be positive for a log-log fit")
    res = stats.linregress(np.log(ts), np.log(var))
    half = stats.t.ppf(0.975, ts.size - 2) * res.stderr
    slope = float(res.slope)
    ci = (slope - half, slope + half)
    p = None if prediction is None else prediction.exponent
    if p is None:
        return RateFit(slope, ci, (), None, math.nan, None, "UNDETERMINED")
    ratio = var / ts**p
    log_ratio = ratio / np.log(ts) if prediction.log_correction else None
    series = log_ratio if log_ratio is not None else ratio
    spread = float(series.max() / series.min())
    ok = abs(slope - p) <= tolerance or (prediction.log_correction and spread <= ratio_factor)
    return RateFit(slope, ci, tuple(map(float, ratio)),
                   None if log_ratio is None else tuple(map(float, log_ratio)),
                   spread, float(p), "PASS" if ok else "FAIL")


# --- report --------------------------------------------------------------------------

@dataclass
class ScaleSummary:
    t: float
    n: int
    mean: float
    variance: float
    mean_se: float
    variance_se: float
    m_theory: float
    var_theory: float | None
    reference_quantity: float | None
    normality: NormalityReport | None
    ks_theoretical: float | None = None
    note: str | None = None

    def row(self):
        nr = self.normality
        return dict(t=self.t, n=self.n, mean=self.mean, mean_se=self.mean_se, var_empirical=self.variance,
                    var_se=self.variance_se, m_theory=self.m_theory, var_theoretical=self.var_theory,
                    skewness=None if nr is None else nr.skewness,
                    excess_kurtosis=None if nr is None else nr.excess_kurtosis,
                    ks_statistic=None if nr is None else nr.ks_statistic,
                    ks_critical_1pct=None if nr is None else nr.ks_critical_1pct,
                    ks_p_low=None if nr is None else nr.p_value_bounds[0],
                    ks_p_high=None if nr is None else nr.p_value_bounds[1],
                    ks_theoretical=self.ks_theoretical, note=self.note)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    case: str | None
    prediction: dict | None
    scales: list
    samples: dict = field(repr=False)
    rate: RateFit | None = None
    theory_rate: RateFit | None = None

    def to_dict(self):
        return dict(config=self.config.to_dict(), case=self.case, prediction=self.prediction,
                    scales=[s.row() for s in self.scales],
                    rate=None if self.rate is None else self.rate.to_dict(),
                    theory_rate=None if self.theory_rate is None else self.theory_rate.to_dict())

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(_dump(manifest(self.config)))
        (out / "report.json").write_text(_dump(self.to_dict()))
        rows = [s.row() for s in self.scales]
        _write_csv(out / "report.csv", rows)
        _write_csv(out / "rates.csv", [dict(t=s.t, var_empirical=s.variance, var_theoretical=s.var_theory,
                                            reference_quantity=s.reference_quantity) for s in self.scales])
        if self.config.persist:
            for t, ys in self.samples.items():
                _write_csv(out / f"samples_t{t:g}.csv",
                           [dict(rep_index=i, y_value=float(y)) for i, y in enumerate(ys)])
        return out


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(v) for k, v in row.items()})


def manifest(cfg: ExperimentConfig) -> dict:
    from . import __version__

    return dict(config=cfg.to_dict(),
                versions=dict(spectralclt=__version__, numpy=np.__version__, scipy=scipy.__version__,
                              python=platform.python_version()),
                seeds=dict(root=cfg.seed, derivation="SeedSequence([root, t_index, rep_index]) -> Philox",
                           block_size=cfg.block_size))


def _theory(cfg, expansion, t, rho, dom, mu):
    """``(m_t, sigma_t^2 or None, note)``."""
    m_t = expansion.mean * t**cfg.d * dom.volume
    if expansion.rank is None:
        return m_t, 0.0, None
    try:
        return m_t, total_variance(expansion, rho, dom, t, mu).total_variance, None
    except QuadratureError as exc:
        return m_t, None, f"theoretical variance unavailable: {exc}"


def build_report(cfg: ExperimentConfig, samples: dict) -> ExperimentReport:
    """Assemble per-scale statistics and rate fits from simulated samples."""
    mu = resolve_measure(cfg.measure_id)
    dom = resolve_domain(cfg.domain_id)
    obs = resolve_observable(cfg.observable_id)
    expansion = obs.expansion(cfg.q_max)
    rho = covariance_function(mu, cfg.d)
    prediction = case_str = None
    if expansion.rank is not None:
        label = classify_case(expansion, covariance_summable(mu, cfg.d, expansion.rank))
        case_str = str(label)
        if not label.excluded:
            prediction = predicted_rate(label, cfg.d, mu)
    scales = []
    for t in cfg.t_list:
        ys = samples[t]
        n = ys.size
        mean, var = float(ys.mean()), float(ys.var(ddof=1))
        m_t, var_t, note = _theory(cfg, expansion, t, rho, dom, mu)
        ref = None
        if prediction is not None:
            ref = t**cfg.d if prediction.chaos is None else t**cfg.d * w_qt(rho, cfg.d, prediction.chaos, t)
        try:
            if cfg.normalization == "theoretical" and var_t:
                nr = normality_report(ys, m_t, math.sqrt(var_t))
            else:
                nr = normality_report(ys)
            kurt = nr.excess_kurtosis
        except DegenerateVarianceError as exc:
            nr, kurt, note = None, 0.0, str(exc)
        var_se = var * math.sqrt(max(2.0 / (n - 1) + kurt / n, 0.0))
        ks_th = None
        if var_t:
            ks_th = float(stats.kstest((ys - m_t) / math.sqrt(var_t), "norm").statistic)
        scales.append(ScaleSummary(t, n, mean, var, math.sqrt(var / n), var_se, m_t, var_t, ref, nr, ks_th, note))
    rate = theory_rate = None
    ts = np.array(cfg.t_list)
    if prediction is not None and ts.size >= 3 and ts.max() / ts.min() >= 8:
        emp = np.array([s.variance for s in scales])
        if np.all(emp > 0):
            rate = rate_fit(ts, emp, prediction)
        th = [s.var_theory for s in scales]
        if all(v is not None and v > 0 for v in th):
            theory_rate = rate_fit(ts, th, prediction)
    return ExperimentReport(cfg, case_str, None if prediction is None else prediction.to_dict(),
                            scales, samples, rate, theory_rate)


def run_replications(cfg: ExperimentConfig) -> ExperimentReport:
    """Simulate ``cfg.n_reps`` copies of ``Y_t`` at each scale and summarize them."""
    samples = simulate(cfg, [cfg.observable_id])[cfg.observable_id]
    return build_report(cfg, samples)


def run_shared(cfg: ExperimentConfig, observable_ids) -> dict:
    """Reports for several observables computed on one set of simulated fields."""
    sims = simulate(cfg, list(observable_ids))
    return {o: build_report(cfg.replace(observable_id=o), sims[o]) for o in observable_ids}
