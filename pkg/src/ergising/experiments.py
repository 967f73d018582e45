"""Fluctuation-regime harness: normalised statistics, predicted limits, Monte Carlo and exact trends.

Every regime is a coupling ``p = p(N)`` plus a normalisation of ``Z_N`` or
``log Z_N``.  Normalisations use the exact ``E Z_N`` from the closed-form
moments.  Trial ``i`` of a run draws its graph with seed
``derive_seed(master_seed, i)``, so any single trial can be replayed and
results do not depend on the worker count.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import moments
from .enumeration import EnumerationResult, enumerate_graph
from .errors import ValidationError
from .model import GraphSample, ModelParams, sample_graph, xi_eta
from .rng import derive_seed

__all__ = [
    "THEOREMS",
    "RegimeSpec",
    "TrialRecord",
    "ExperimentReport",
    "VarianceTrend",
    "default_regime",
    "theorem_statistic",
    "predicted_limit",
    "run_clt_trials",
    "variance_trend",
    "ks_distance",
    "normal_cdf",
    "jackknife_variance_se",
    "theta_statistic",
    "linearization_gap",
    "theta_variance_exact",
    "theta_variance_limit",
    "linearization_trend",
    "write_trials_csv",
    "resolve_workers",
]

THEOREMS = ("T1", "T2a", "T2b", "T3", "T4")
_COUPLINGS = ("constant", "exponent", "c_sqrt", "c_cube")
WORKERS_ENV = "ERGISING_WORKERS"


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValidationError("worker count must be positive")
    return workers


@dataclass(frozen=True)
class RegimeSpec:
    """A theorem together with the coupling ``p(N)`` used to probe it.

    ``coupling`` is one of ``constant`` (``p = value``), ``exponent``
    (``p = N**value``), ``c_sqrt`` (``p = c / sqrt N``) or ``c_cube``
    (``p = (c / N^2)**(1/3)``).
    """

    theorem_id: str
    coupling: str
    value: float | None = None
    c_value: float | None = None

    def __post_init__(self):
        t, cp, v, c = self.theorem_id, self.coupling, self.value, self.c_value
        if t not in THEOREMS:
            raise ValidationError(f"unknown theorem id {t!r}")
        if cp not in _COUPLINGS:
            raise ValidationError(f"unknown coupling {cp!r}")
        if cp in ("constant", "exponent") and v is None:
            raise ValidationError(f"coupling {cp} needs a value")
        if cp in ("c_sqrt", "c_cube") and not (c is not None and c > 0):
            raise ValidationError(f"coupling {cp} needs a positive c")
        allowed = {
            "T1": cp == "constant" and 0 < v < 1 or cp == "exponent" and -0.5 < v < 0,
            "T2a": cp == "c_sqrt",
            "T2b": cp == "exponent" and -2 / 3 < v < -0.5,
            "T3": cp == "c_cube",
            "T4": cp == "exponent" and -1 < v < -2 / 3,
        }[t]
        if not allowed:
            raise ValidationError(f"coupling {cp}={v if c is None else c} is outside regime {t}")

    def edge_prob(self, n: int) -> float:
        if self.coupling == "constant":
            p = self.value
        elif self.coupling == "exponent":
            p = n ** self.value
        elif self.coupling == "c_sqrt":
            p = self.c_value / math.sqrt(n)
        else:
            p = (self.c_value / (n * n)) ** (1 / 3)
        if not 0 < p < 1:
            raise ValidationError(f"coupling gives p={p} at N={n}; need 0 < p < 1")
        return p

    def params(self, n: int, beta: float) -> ModelParams:
        return ModelParams(n, self.edge_prob(n), beta)

    @property
    def condition(self) -> str:
        """The sufficient scaling condition the coupling satisfies."""
        t, v = self.theorem_id, self.value
        if t == "T1":
            if self.coupling == "constant":
                return "p constant in (0,1): p^2 N -> oo and (1-p) N p -> oo"
            return f"p = N^{v}: p^2 N = N^{1 + 2 * v:.3g} -> oo"
        if t == "T2a":
            return f"p sqrt(N) = {self.c_value}"
        if t == "T2b":
            return f"p = N^{v}: p^2 N = N^{1 + 2 * v:.3g} -> 0, p^3 N^2 = N^{2 + 3 * v:.3g} -> oo"
        if t == "T3":
            return f"p^3 N^2 = {self.c_value}"
        return f"p = N^{v}: p^3 N^2 = N^{2 + 3 * v:.3g} -> 0, N p = N^{1 + v:.3g} -> oo"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RegimeSpec":
        return cls(d["theorem_id"], d["coupling"], d.get("value"), d.get("c_value"))


def default_regime(theorem_id: str, c: float | None = None, exponent: float | None = None,
                   p: float | None = None) -> RegimeSpec:
    """Default couplings: T1 p=0.5; T2a c=1; T2b N^-0.55; T3 c=1; T4 N^-0.8."""
    if theorem_id == "T1":
        if exponent is not None:
            return RegimeSpec("T1", "exponent", exponent)
        return RegimeSpec("T1", "constant", 0.5 if p is None else p)
    if theorem_id == "T2a":
        return RegimeSpec("T2a", "c_sqrt", c_value=1.0 if c is None else c)
    if theorem_id == "T2b":
        return RegimeSpec("T2b", "exponent", -0.55 if exponent is None else exponent)
    if theorem_id == "T3":
        return RegimeSpec("T3", "c_cube", c_value=1.0 if c is None else c)
    if theorem_id == "T4":
        return RegimeSpec("T4", "exponent", -0.8 if exponent is None else exponent)
    raise ValidationError(f"unknown theorem id {theorem_id!r}")


# -- statistics and limits --------------------------------------------------

def _scale(theorem_id: str, params: ModelParams) -> float:
    n, p = params.n_sites, params.edge_prob
    return {"T1": math.sqrt(p * n / (1 - p)), "T2a": n ** 0.25, "T2b": n * p ** 1.5}[theorem_id]


def _t3_c(params: ModelParams, c: float | None) -> float:
    return params.n_sites ** 2 * params.edge_prob ** 3 if c is None else c


def theorem_statistic(theorem_id: str, enumeration: EnumerationResult, params: ModelParams,
                      c: float | None = None, log_expected_z: float | None = None) -> float:
    """The normalised quantity whose law each theorem describes.

    For T3, ``c`` defaults to ``N^2 p^3`` of ``params``.
    """
    if (enumeration.n_sites, enumeration.edge_prob, enumeration.beta) != (
            params.n_sites, params.edge_prob, params.beta):
        raise ValidationError("enumeration was computed with different params")
    params.require_high_temperature()
    params.require_sparse()
    n, p, b = params.n_sites, params.edge_prob, params.beta
    log_z = enumeration.log_z
    if theorem_id in ("T1", "T2a", "T2b"):
        log_ez = enumeration.log_expected_z if log_expected_z is None else log_expected_z
        return _scale(theorem_id, params) * math.expm1(log_z - log_ez)
    if theorem_id == "T3":
        return (log_z - n * math.log(2) - b * b * (1 - p) / (8 * p) + 0.5 * math.log1p(-b)
                + b ** 4 / (192 * _t3_c(params, c)))
    if theorem_id == "T4":
        center = n * math.log(2) + n * n * p * math.log(math.cosh(params.gamma))
        return n * p ** 1.5 * (log_z - center)
    raise ValidationError(f"unknown theorem id {theorem_id!r}")


def predicted_limit(theorem_id: str, params: ModelParams, c: float | None = None) -> tuple[float, float]:
    """Mean and variance of the limiting Gaussian.

    ``c`` is the regime constant (``p sqrt N -> c`` for T2a, ``p^3 N^2 -> c``
    for T3); if omitted it is read off ``params``.
    """
    params.require_high_temperature()
    b = params.beta
    n, p = params.n_sites, params.edge_prob
    if theorem_id == "T1":
        return 0.0, b * b / 4
    if theorem_id == "T2a":
        c = p * math.sqrt(n) if c is None else c
        if c <= 0:
            raise ValidationError("T2a needs c > 0")
        return 0.0, b * b / (4 * c * c) + b ** 4 / (64 * c ** 3)
    if theorem_id in ("T2b", "T4"):
        return 0.0, b ** 4 / 64
    if theorem_id == "T3":
        c = _t3_c(params, c)
        if c <= 0:
            raise ValidationError("T3 needs c > 0")
        return 0.0, b ** 4 / (64 * c)
    raise ValidationError(f"unknown theorem id {theorem_id!r}")


def normal_cdf(x, mean: float = 0.0, variance: float = 1.0):
    """Gaussian CDF through ``erfc`` (double precision, no cancellation in the lower tail)."""
    s = math.sqrt(2 * variance)
    return np.array([0.5 * math.erfc(-(v - mean) / s) for v in np.atleast_1d(x)])


def ks_distance(samples: Sequence[float], mean: float, variance: float) -> float:
    """``sup_x |F_emp(x) - Phi((x - mean) / sqrt(variance))|``."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        raise ValidationError("ks_distance needs at least one sample")
    if not variance > 0:
        raise ValidationError("variance must be positive")
    m = x.size
    cdf = normal_cdf(x, mean, variance)
    upper = np.arange(1, m + 1) / m - cdf
    lower = cdf - np.arange(m) / m
    return float(max(upper.max(), lower.max()))


def jackknife_variance_se(samples: Sequence[float]) -> float:
    """Jackknife standard error of the unbiased sample variance."""
    x = np.asarray(samples, dtype=float)
    n = x.size
    if n < 3:
        return math.nan
    x = x - x.mean()
    s1, s2 = x.sum(), (x * x).sum()
    loo = ((s2 - x * x) - (s1 - x) ** 2 / (n - 1)) / (n - 2)
    return float(math.sqrt((n - 1) / n * ((loo - loo.mean()) ** 2).sum()))


# -- Monte Carlo -------------------------------------------------------------

@dataclass(frozen=True)
class TrialRecord:
    index: int
    seed: int
    statistic: float
    log_z: float
    total_edges: int
    diag_edges: int


@dataclass
class ExperimentReport:
    regime: dict
    condition: str
    params: dict
    master_seed: int
    n_trials: int
    empirical_mean: float
    empirical_variance: float
    variance_se: float
    predicted_mean: float
    predicted_variance: float
    ks_statistic: float
    ks_fitted: float
    exact_variance: float | None
    extras: dict
    passes: dict
    tolerances: dict
    trials: list = field(default_factory=list)

    def to_dict(self, include_trials: bool = True) -> dict:
        d = asdict(self)
        if not include_trials:
            d.pop("trials")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentReport":
        kw = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        kw["trials"] = [t if isinstance(t, TrialRecord) else TrialRecord(**t) for t in d.get("trials", [])]
        return cls(**kw)


def _run_trial(params: ModelParams, theorem_id: str, c, master_seed: int, i: int,
               max_sites: int | None) -> TrialRecord:
    seed = derive_seed(master_seed, i)
    g = sample_graph(params, seed)
    res = enumerate_graph(g, params, max_sites=max_sites)
    return TrialRecord(i, seed, theorem_statistic(theorem_id, res, params, c), res.log_z,
                       g.total_edges, g.diag_edges)


def run_clt_trials(spec: RegimeSpec, n: int, n_trials: int, master_seed: int, beta: float = 0.5,
                   workers: int | None = None, max_sites: int | None = None,
                   ks_tolerance: float = 0.1, variance_tolerance: float = 0.2) -> ExperimentReport:
    """Sample ``n_trials`` graphs, enumerate each exactly, and summarise the statistic.

    The KS distance is reported both against the predicted Gaussian and
    against the Gaussian with the empirical mean and variance.  For the
    ``Z / E Z`` regimes the exact finite-N variance of the statistic is
    included whenever the class sums are within their ceiling.
    """
    if n_trials < 2:
        raise ValidationError("need at least two trials")
    params = spec.params(n, beta)
    params.require_high_temperature()
    t = spec.theorem_id
    c = spec.c_value if t == "T3" else None
    workers = resolve_workers(workers)
    run = lambda i: _run_trial(params, t, c, master_seed, i, max_sites)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            trials = list(pool.map(run, range(n_trials)))
    else:
        trials = [run(i) for i in range(n_trials)]
    stats = np.array([r.statistic for r in trials])
    mean, var = float(stats.mean()), float(stats.var(ddof=1))
    pm, pv = predicted_limit(t, params, spec.c_value if t in ("T2a", "T3") else None)
    exact = None
    extras: dict = {}
    passes: dict = {"ks_predicted": None}
    tol = {"ks": ks_tolerance, "variance_relative": variance_tolerance}
    if t in ("T1", "T2a", "T2b") and n <= moments.DEFAULT_CUBIC_CEILING:
        exact = _scale(t, params) ** 2 * moments.exact_variance_partition(params)
        passes["variance_vs_exact"] = bool(abs(var / exact - 1) <= variance_tolerance)
    if t == "T3":
        shift = beta ** 4 / (192 * spec.c_value)
        extras["mean_without_shift"] = float(mean - shift)
        extras["shift"] = shift
        passes["shift_improves_centering"] = bool(abs(mean) < abs(mean - shift))
    if t in ("T3", "T4"):
        # Fluctuation carried by log cosh(gamma) * total_edges.
        lc = math.log(math.cosh(params.gamma))
        tot = np.array([r.total_edges for r in trials], dtype=float)
        log_z = np.array([r.log_z for r in trials])
        extras["var_log_z"] = float(log_z.var(ddof=1))
        extras["var_log_cosh_total"] = float((lc * tot).var(ddof=1))
        extras["var_log_z_tilde"] = float((log_z - lc * tot).var(ddof=1))
    ks_pred = ks_distance(stats, pm, pv)
    ks_fit = ks_distance(stats, mean, var) if var > 0 else math.nan
    passes["ks_predicted"] = bool(ks_pred <= ks_tolerance)
    return ExperimentReport(
        regime=spec.to_dict(), condition=spec.condition, params=params.to_dict(),
        master_seed=master_seed, n_trials=n_trials, empirical_mean=mean, empirical_variance=var,
        variance_se=jackknife_variance_se(stats), predicted_mean=pm, predicted_variance=pv,
        ks_statistic=ks_pred, ks_fitted=ks_fit, exact_variance=exact, extras=extras,
        passes=passes, tolerances=tol, trials=trials)


def write_trials_csv(report: ExperimentReport, path) -> None:
    """One row per trial: seed, statistic, log_z, total_edges, diag_edges.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_trials(report, path)
        return
    with open(path, "w", newline="") as fh:
        _write_trials(report, fh)


def _write_trials(report: ExperimentReport, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["seed", "statistic", "log_z", "total_edges", "diag_edges"])
    for r in report.trials:
        w.writerow([r.seed, repr(float(r.statistic)), repr(float(r.log_z)), r.total_edges, r.diag_edges])


# -- exact variance trends -------------------------------------------------

@dataclass
class VarianceTrend:
    quantity: str
    regime: dict
    beta: float
    rows: list
    predicted: float
    gaps_decreasing: bool
    values_decreasing: bool

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VarianceTrend":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


TREND_QUANTITIES = ("T1", "T2a", "T2b", "var_sum", "vwn", "vwn_beta")


def _trend_value(quantity: str, params: ModelParams, max_sites, workers) -> float:
    n, p, b = params.n_sites, params.edge_prob, params.beta
    kw = dict(max_sites=max_sites, workers=workers)
    if quantity in ("T1", "T2a", "T2b"):
        return _scale(quantity, params) ** 2 * moments.exact_variance_partition(params, **kw)
    if quantity == "var_sum":
        return n * p * moments.exact_variance_hatZ(params, **kw)
    if quantity in ("vwn", "vwn_beta"):
        v = moments.exact_variance_W(params, **kw) * 4 * n * p / (b * b * (1 - p))
        return v * (1 - b) if quantity == "vwn_beta" else v
    raise ValidationError(f"unknown trend quantity {quantity!r}")


def variance_trend(quantity: str, n_list: Iterable[int], spec: RegimeSpec, beta: float = 0.5,
                   max_sites: int | None = None, workers: int | None = None) -> VarianceTrend:
    """Exactly scaled variances over an N grid and their gaps to the predicted limit.

    Quantities: ``T1``/``T2a``/``T2b`` scale ``Var(Z/EZ)`` by the square of the
    theorem's normalisation; ``var_sum`` is ``Np Var(hat Z / E hat Z)`` (limit
    0); ``vwn`` is ``Var(W) 4Np / (beta^2 (1-p) (EZ)^2)`` (limit 1), and
    ``vwn_beta`` multiplies it by ``1 - beta``.
    """
    workers = resolve_workers(workers)
    rows = []
    for n in n_list:
        params = spec.params(int(n), beta)
        val = _trend_value(quantity, params, max_sites, workers)
        if quantity in ("T1", "T2a", "T2b"):
            pred = predicted_limit(quantity, params, spec.c_value)[1]
        else:
            pred = 0.0 if quantity == "var_sum" else 1.0
        gap = abs(val - pred) / pred if pred else abs(val)
        rows.append({"n": int(n), "p": params.edge_prob, "value": val, "predicted": pred, "gap": gap})
    gaps = [r["gap"] for r in rows]
    vals = [r["value"] for r in rows]
    return VarianceTrend(quantity, spec.to_dict(), beta, rows,
                         rows[-1]["predicted"] if rows else math.nan,
                         all(b < a for a, b in zip(gaps, gaps[1:])),
                         all(b < a for a, b in zip(vals, vals[1:])))


# -- linearised fluctuation theta_N -------------------------------------------

def theta_statistic(graph: GraphSample, params: ModelParams) -> float:
    """``theta_N = alpha_N bar xi_N + beta_N bar eta_N``."""
    st = xi_eta(graph, params)
    c = moments.asymptotic_constants(params)
    return c.alpha_n * st.xi_centered + c.beta_n * st.eta_centered


def linearization_gap(graph: GraphSample, params: ModelParams) -> float:
    """``e^theta - 1 - theta``."""
    th = theta_statistic(graph, params)
    return math.expm1(th) - th


def theta_variance_exact(params: ModelParams) -> float:
    """``Var(N p^{3/2} theta_N)`` at finite N.

    Each off-diagonal indicator enters with weight ``beta^2 (1-2p) / (8 N sqrt p)``
    after scaling, each diagonal one with that plus ``beta sqrt(p) / 2``.
    """
    params.require_sparse()
    n, p, b = params.n_sites, params.edge_prob, params.beta
    w_off = b * b * (1 - 2 * p) / (8 * n * math.sqrt(p))
    w_diag = w_off + b * math.sqrt(p) / 2
    return (n * (n - 1) * w_off ** 2 + n * w_diag ** 2) * p * (1 - p)


def theta_variance_limit(beta: float, c: float) -> float:
    """``beta^4/64 + beta^2 c/4`` where ``c = lim p^2 N``."""
    if c < 0:
        raise ValidationError("c must be nonnegative")
    return beta ** 4 / 64 + beta * beta * c / 4


def linearization_trend(spec: RegimeSpec, n_list: Iterable[int], n_graphs: int, master_seed: int,
                        beta: float = 0.5) -> list[dict]:
    """Empirical ``E[(N p^{3/2} (e^theta - 1 - theta))^2]`` per N."""
    rows = []
    for n in n_list:
        params = spec.params(int(n), beta)
        scale = n * params.edge_prob ** 1.5
        vals = []
        for i in range(n_graphs):
            g = sample_graph(params, derive_seed(master_seed, i))
            vals.append((scale * linearization_gap(g, params)) ** 2)
        rows.append({"n": int(n), "p": params.edge_prob, "mean_sq_gap": float(np.mean(vals))})
    return rows
