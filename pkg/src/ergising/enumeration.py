"""Exact per-graph partition functions by exhaustive Gray-code enumeration.

Consecutive Gray-code states differ in one spin, so the integer quadratic
form ``Q(sigma)`` is updated with a handful of popcounts per step.  Rather
than exponentiating on the fly, the walk fills an integer histogram of
``(Q, #up spins)``.  Every spin-dependent quantity is then a log-sum-exp
over at most ``(2N^2 + 1)(N + 1)`` cells: exact counts make shard merging and
worker count irrelevant to the result, and ``g(|sigma| / sqrt N)`` weights
cost nothing extra.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import CeilingExceeded, ValidationError
from .model import GraphSample, ModelParams, xi_eta
from .moments import (DEFAULT_CUBIC_CEILING, asymptotic_constants, expected_boltzmann,
                      expected_partition, log_magnetization_counts)

__all__ = [
    "DEFAULT_ENUMERATION_CEILING",
    "EnumerationResult",
    "TabulatedFunction",
    "configuration_histogram",
    "partition_exact",
    "generalized_partition",
    "hat_partition",
    "tilde_partition",
    "w_statistic",
    "x_residual_sum",
    "free_energy_per_site",
    "enumerate_graph",
    "gray_code_walk",
    "random_flip_walk",
]

DEFAULT_ENUMERATION_CEILING = 26


def _check_params(graph: GraphSample, params: ModelParams) -> None:
    if graph.n_sites != params.n_sites:
        raise ValidationError(f"dimension mismatch: graph N={graph.n_sites}, params N={params.n_sites}")


def _graph_masks(graph: GraphSample):
    """Rows plus row/column masks with the self-loop bit cleared."""
    n = graph.n_sites
    rows = np.array(graph.row_ints, dtype=np.int64)
    cols = np.array(graph.col_ints, dtype=np.int64)
    diag = np.array([1 << i for i in range(n)], dtype=np.int64)
    out_mask = rows & ~diag
    in_mask = cols & ~diag
    out_cnt = np.bitwise_count(out_mask).astype(np.int64)
    in_cnt = np.bitwise_count(in_mask).astype(np.int64)
    return rows, out_mask, out_cnt, in_mask, in_cnt


def configuration_histogram(graph: GraphSample, shards: int = 1, workers: int = 1,
                            symmetric: bool = True, max_sites: int | None = None) -> np.ndarray:
    """Counts ``hist[Q + N^2, a]`` of configurations with ``a`` up spins and form ``Q``.

    Args:
        shards: number of sub-cubes (a power of two); shard ``r`` fixes the top
            ``log2(shards)`` free spins to the bits of ``r``.
        workers: threads running shards concurrently.
        symmetric: enumerate only ``sigma_N = +1`` and mirror, using
            ``Q(-sigma) = Q(sigma)``.
        max_sites: enumeration ceiling (default 26).
    """
    n = graph.n_sites
    ceiling = DEFAULT_ENUMERATION_CEILING if max_sites is None else max_sites
    if n > ceiling:
        raise CeilingExceeded("exact enumeration", n, ceiling)
    if n > _kernels.MAX_BITS:
        raise CeilingExceeded("64-bit spin words", n, _kernels.MAX_BITS)
    if shards < 1 or shards & (shards - 1):
        raise ValidationError(f"shards must be a power of two, got {shards}")
    use_sym = symmetric and n > 1
    nfree = n - 1 if use_sym else n
    sbits = shards.bit_length() - 1
    if sbits > nfree:
        raise ValidationError(f"{shards} shards exceed the {2 ** nfree} configurations")
    masks = _graph_masks(graph)
    inner = nfree - sbits
    base = (1 << (n - 1)) if use_sym else 0

    def run(r: int) -> np.ndarray:
        h = np.zeros((2 * n * n + 1, n + 1), dtype=np.int64)
        _kernels.gray_histogram(*masks, n, inner, np.int64(base | (r << inner)), h)
        return h

    if workers > 1 and shards > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, range(shards)))
    else:
        parts = [run(r) for r in range(shards)]
    hist = parts[0]
    for h in parts[1:]:
        hist += h
    if use_sym:
        hist = hist + hist[:, ::-1]
    return hist


def _log_weighted_sum(hist: np.ndarray, gamma: float, log_g: np.ndarray) -> float:
    """``log sum_{q,a} hist[q,a] e^{gamma q} g_a`` over nonzero cells."""
    n = hist.shape[1] - 1
    qi, ai = np.nonzero(hist)
    terms = gamma * (qi - n * n) + np.log(hist[qi, ai]) + log_g[ai]
    terms = terms[np.isfinite(terms)]
    if terms.size == 0:
        return -math.inf
    return float(logsumexp(terms))


def _hist(graph, params, hist, **kw):
    _check_params(graph, params)
    return configuration_histogram(graph, **kw) if hist is None else hist


def partition_exact(graph: GraphSample, params: ModelParams, hist: np.ndarray | None = None,
                    **kw) -> float:
    """``log Z_N = log sum_sigma e^{-beta H(sigma)}``."""
    hist = _hist(graph, params, hist, **kw)
    return _log_weighted_sum(hist, params.gamma, np.zeros(params.n_sites + 1))


@dataclass(frozen=True)
class TabulatedFunction:
    """``g`` on a grid of ``x`` with linear interpolation, constant beyond the ends."""

    x: tuple[float, ...]
    y: tuple[float, ...]

    def __post_init__(self):
        if len(self.x) != len(self.y) or len(self.x) < 1:
            raise ValidationError("grid and values must be nonempty and equally long")
        if any(b <= a for a, b in zip(self.x, self.x[1:])):
            raise ValidationError("grid must be strictly increasing")
        if not all(math.isfinite(v) for v in self.y):
            raise ValidationError("g must be bounded")
        if min(self.y) < 0:
            raise ValidationError("g must be nonnegative")

    def __call__(self, x):
        return np.interp(x, self.x, self.y)


def generalized_partition(graph: GraphSample, params: ModelParams,
                          g: Callable | TabulatedFunction, hist: np.ndarray | None = None,
                          **kw) -> float:
    """``log sum_sigma e^{-beta H(sigma)} g(|sigma| / sqrt N)``.

    ``g`` is evaluated at the ``N + 1`` possible arguments.  An identically
    zero ``g`` gives the empty-sum sentinel ``-inf``.
    """
    n = params.n_sites
    xs = (2.0 * np.arange(n + 1) - n) / math.sqrt(n)
    vals = np.asarray([float(g(x)) for x in xs])
    if not np.all(np.isfinite(vals)):
        raise ValidationError("g must be finite")
    if np.any(vals < 0):
        raise ValidationError("g must be nonnegative")
    hist = _hist(graph, params, hist, **kw)
    with np.errstate(divide="ignore"):
        log_g = np.log(vals)
    return _log_weighted_sum(hist, params.gamma, log_g)


def hat_partition(graph: GraphSample, params: ModelParams, log_z: float | None = None,
                  **kw) -> float:
    """``log hat Z_N = log Z_N - alpha_N xi_N - beta_N eta_N``."""
    params.require_sparse()
    if log_z is None:
        log_z = partition_exact(graph, params, **kw)
    c = asymptotic_constants(params)
    st = xi_eta(graph, params)
    return log_z - c.alpha_n * st.xi - c.beta_n * st.eta


def tilde_partition(graph: GraphSample, params: ModelParams, log_z: float | None = None,
                    **kw) -> float:
    """``log tilde Z_N = log Z_N - log cosh(gamma) sum_{i,j} eps_ij``."""
    _check_params(graph, params)
    if log_z is None:
        log_z = partition_exact(graph, params, **kw)
    return log_z - math.log(math.cosh(params.gamma)) * graph.total_edges


def _w_over_ez(graph: GraphSample, params: ModelParams) -> float:
    n, p = params.n_sites, params.edge_prob
    log_ez = expected_partition(params).log_value
    # Off-diagonal c_ij / E Z: among sigma with |sigma| = k, sum_{i != j} sigma_i sigma_j = k^2 - N
    # is spread evenly over the N(N-1) ordered pairs.
    if n > 1:
        k = 2.0 * np.arange(n + 1) - n
        log_e = np.array([expected_boltzmann(params, int(v)).log_value for v in k])
        weights = np.exp(log_magnetization_counts(n) + log_e - log_ez)
        r = math.fsum((weights * (k * k - n)).tolist()) / (n * (n - 1))
    else:
        r = 0.0
    diag = graph.diag_edges - n * p
    off = (graph.total_edges - graph.diag_edges) - n * (n - 1) * p
    return params.gamma * (diag + r * off)


def w_statistic(graph: GraphSample, params: ModelParams, max_sites: int | None = None) -> float:
    """``W_N = gamma sum_{i,j} (eps_ij - p) c_ij`` with ``c_ij = sum_sigma sigma_i sigma_j E e^{-beta H}``.

    ``c_ii = E Z_N``; the off-diagonal coefficient is common to all ``i != j``.
    """
    _check_params(graph, params)
    ceiling = DEFAULT_CUBIC_CEILING if max_sites is None else max_sites
    if params.n_sites > ceiling:
        raise CeilingExceeded("W statistic", params.n_sites, ceiling)
    return expected_partition(params).value * _w_over_ez(graph, params)


def x_residual_sum(graph: GraphSample, params: ModelParams, log_z: float | None = None,
                   **kw) -> float:
    """``sum_sigma X(sigma) = Z_N - E Z_N - W_N``."""
    _check_params(graph, params)
    if log_z is None:
        log_z = partition_exact(graph, params, **kw)
    log_ez = expected_partition(params).log_value
    return math.exp(log_ez) * (math.expm1(log_z - log_ez) - _w_over_ez(graph, params))


def free_energy_per_site(log_z: float, params: ModelParams) -> float:
    """``-log Z_N / (beta N)``."""
    if not math.isfinite(log_z):
        raise ValidationError("log_z must be finite")
    return -log_z / (params.beta * params.n_sites)


@dataclass(frozen=True)
class EnumerationResult:
    n_sites: int
    edge_prob: float
    beta: float
    seed: int
    total_edges: int
    diag_edges: int
    log_z: float
    log_z_hat: float | None
    log_z_tilde: float
    log_expected_z: float
    w_statistic: float
    x_residual: float
    free_energy_per_site: float
    n_configs: int
    elapsed: float

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.n_sites, self.edge_prob, self.beta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EnumerationResult":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__})


def enumerate_graph(graph: GraphSample, params: ModelParams, shards: int = 1, workers: int = 1,
                    symmetric: bool = True, max_sites: int | None = None) -> EnumerationResult:
    """All per-graph quantities from one enumeration."""
    t0 = time.perf_counter()
    hist = _hist(graph, params, None, shards=shards, workers=workers, symmetric=symmetric,
                 max_sites=max_sites)
    log_z = partition_exact(graph, params, hist=hist)
    log_hat = hat_partition(graph, params, log_z) if params.edge_prob < 1 else None
    log_ez = expected_partition(params).log_value
    return EnumerationResult(
        n_sites=params.n_sites, edge_prob=params.edge_prob, beta=params.beta, seed=graph.seed,
        total_edges=graph.total_edges, diag_edges=graph.diag_edges,
        log_z=log_z, log_z_hat=log_hat,
        log_z_tilde=tilde_partition(graph, params, log_z),
        log_expected_z=log_ez,
        w_statistic=w_statistic(graph, params),
        x_residual=x_residual_sum(graph, params, log_z),
        free_energy_per_site=free_energy_per_site(log_z, params),
        n_configs=2 ** params.n_sites,
        elapsed=time.perf_counter() - t0,
    )


# -- invariant-check helpers -----------------------------------------------

def gray_code_walk(graph: GraphSample, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Incrementally updated ``Q`` and the state along the full Gray path from ``start``."""
    n = graph.n_sites
    if n > 24:
        raise CeilingExceeded("stored Gray walk", n, 24)
    rows, *masks = _graph_masks(graph)
    return _kernels.gray_walk(rows, *masks, n, n, np.int64(start))


def random_flip_walk(graph: GraphSample, flips: Sequence[int], start: int = 0):
    """Incremental and freshly recomputed ``Q`` after each flip in ``flips``."""
    n = graph.n_sites
    flips = np.asarray(flips, dtype=np.int64)
    if flips.size and (flips.min() < 0 or flips.max() >= n):
        raise ValidationError("flip index out of range")
    rows, *masks = _graph_masks(graph)
    return _kernels.flip_walk(rows, *masks, n, np.int64(start), flips)


def full_quadratic_forms(graph: GraphSample, states: np.ndarray) -> np.ndarray:
    """Popcount recomputation of ``Q`` for each packed state."""
    rows = np.array(graph.row_ints, dtype=np.int64)
    return np.array([_kernels.quadratic_form_full(rows, graph.n_sites, np.int64(s)) for s in states])
