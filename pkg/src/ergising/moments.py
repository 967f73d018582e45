"""Closed-form moments over the graph randomness.

The indicators are independent, so every expectation of an exponential of a
linear form in the ``eps_ij`` factorises into ``N**2`` factors
``1 - p + p e^{c_ij}``.  The coefficient ``c_ij`` depends on the spins only
through ``sigma_i sigma_j`` (and ``tau_i tau_j``), so each log-moment is an
integer combination of a handful of constants

    L(x) = log(1 - p + p e^x)

and depends on a configuration only through its magnetization (or on a pair
only through its class ``(k, l, m)``).  Variances are sums over classes
weighted by the multinomial counts ``nu_N(k, l, m)``; covariance terms are
formed as ``E_k E_l expm1(D)`` with ``D`` assembled before exponentiation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _kernels
from .errors import CeilingExceeded, ValidationError
from .model import ModelParams, PairClass

__all__ = [
    "LogMoment",
    "ClassTable",
    "AsymptoticConstants",
    "DEFAULT_CUBIC_CEILING",
    "asymptotic_constants",
    "expected_boltzmann",
    "expected_partition",
    "asymptotic_log_expected_partition",
    "joint_expected_boltzmann",
    "cov_hamiltonians",
    "cov_boltzmann_hamiltonian",
    "expected_T",
    "joint_expected_T",
    "expected_hat_partition",
    "expected_T_expansion",
    "expected_tilde_partition",
    "nu_count",
    "lclt_ratio",
    "exact_variance_partition",
    "exact_variance_hatZ",
    "exact_variance_W",
    "exact_variance_x_residual",
]

DEFAULT_CUBIC_CEILING = 800


@dataclass(frozen=True)
class LogMoment:
    """Natural logarithm of a positive moment; exponentiate only when needed."""

    log_value: float

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


# -- elementary constants -------------------------------------------------

def _L(p: float, x: float) -> float:
    """``log(1 - p + p e^x)``."""
    if p == 1.0:
        return x
    return math.log1p(p * math.expm1(x))


def _even(p: float, x: float) -> float:
    """``L(x) + L(-x) = log1p(4 p (1-p) sinh^2(x/2))``, free of cancellation."""
    return math.log1p(4.0 * p * (1.0 - p) * math.sinh(0.5 * x) ** 2)


def _odd(p: float, x: float) -> float:
    return _L(p, x) - _L(p, -x)


def _check_mag(n: int, k: int) -> None:
    if abs(k) > n or (n + k) % 2:
        raise ValidationError(f"magnetization {k} impossible for N={n} (need |k|<=N, k=N mod 2)")


def log_magnetization_counts(n: int) -> np.ndarray:
    """``log #{sigma : |sigma| = 2a - n}`` for ``a = 0..n``."""
    a = np.arange(n + 1)
    return gammaln(n + 1.0) - gammaln(a + 1.0) - gammaln(n - a + 1.0)


def _mags(n: int) -> np.ndarray:
    return 2.0 * np.arange(n + 1) - n


# -- e^{-beta H} moments --------------------------------------------------

def _boltzmann_coeffs(params: ModelParams) -> tuple[float, float]:
    """``log E e^{-beta H(sigma)} = c0 + c2 |sigma|^2``."""
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    return 0.5 * n * n * _even(p, g), 0.5 * _odd(p, g)


def _log_boltzmann_by_class(params: ModelParams) -> np.ndarray:
    c0, c2 = _boltzmann_coeffs(params)
    return c0 + c2 * _mags(params.n_sites) ** 2


def expected_boltzmann(params: ModelParams, mag: int) -> LogMoment:
    """``log E e^{-beta H(sigma)}`` for any sigma with ``|sigma| = mag``.

    Of the ``N**2`` ordered pairs, ``(N^2 + k^2)/2`` have ``sigma_i sigma_j = +1``
    and contribute ``L(gamma)``; the rest contribute ``L(-gamma)``.
    """
    _check_mag(params.n_sites, mag)
    c0, c2 = _boltzmann_coeffs(params)
    return LogMoment(c0 + c2 * mag * mag)


def expected_partition(params: ModelParams) -> LogMoment:
    """``log E Z_N`` by log-sum-exp over the ``N + 1`` magnetization classes."""
    terms = log_magnetization_counts(params.n_sites) + _log_boltzmann_by_class(params)
    return LogMoment(float(logsumexp(terms)))


def asymptotic_log_expected_partition(params: ModelParams) -> float:
    """``log(2^N e^{(1-p) beta^2 / (8p)} / sqrt(1 - beta))``."""
    params.require_high_temperature()
    n, p, b = params.n_sites, params.edge_prob, params.beta
    return n * math.log(2.0) + (1 - p) * b * b / (8 * p) - 0.5 * math.log1p(-b)


def joint_expected_boltzmann(params: ModelParams, cls: PairClass) -> LogMoment:
    """``log E[e^{-beta H(sigma)} e^{-beta H(tau)}]`` for a pair in class ``cls``.

    Pairs with ``sigma_i sigma_j + tau_i tau_j = +-2`` contribute ``L(+-2 gamma)``;
    there are ``(N^2 +- (k^2 + l^2) + m^2) / 4`` of them.
    """
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    cls.require_realizable(n)
    k2, l2, m2 = cls.k ** 2, cls.l ** 2, cls.m ** 2
    return LogMoment(0.25 * (n * n + m2) * _even(p, 2 * g) + 0.25 * (k2 + l2) * _odd(p, 2 * g))


def _boltzmann_pair_exponent(params: ModelParams) -> tuple[float, float, float]:
    """``D = joint - E_k - E_l = d0 + d_m m^2 + d_kl (k^2 + l^2)``."""
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    e1, e2 = _even(p, g), _even(p, 2 * g)
    o1, o2 = _odd(p, g), _odd(p, 2 * g)
    return n * n * (0.25 * e2 - e1), 0.25 * e2, 0.25 * o2 - 0.5 * o1


def cov_hamiltonians(params: ModelParams, cls: PairClass) -> float:
    """``Cov(beta H(sigma), beta H(tau)) = beta^2 (1-p) m^2 / (4 N^2 p)``."""
    n, p, b = params.n_sites, params.edge_prob, params.beta
    cls.require_realizable(n)
    return b * b * (1 - p) * cls.m ** 2 / (4 * n * n * p)


def _w(p: float, x: float) -> float:
    """``e^x / (1 - p + p e^x) - 1``."""
    e = math.expm1(x)
    return (1 - p) * e / (1 + p * e)


def cov_boltzmann_hamiltonian(params: ModelParams, cls: PairClass) -> float:
    """``Cov(e^{-beta H(sigma)}, beta H(tau)) / E e^{-beta H(sigma)}``.

    Exact: ``-(beta / 2N) sum_{i,j} tau_i tau_j w(gamma sigma_i sigma_j)``, split
    over pairs with ``sigma_i sigma_j = +-1``, whose ``tau_i tau_j`` sums are
    ``(l^2 +- m^2) / 2``.
    """
    n, p, b, g = params.n_sites, params.edge_prob, params.beta, params.gamma
    cls.require_realizable(n)
    l2, m2 = cls.l ** 2, cls.m ** 2
    return -(b / (2 * n)) * (_w(p, g) * (l2 + m2) / 2 + _w(p, -g) * (l2 - m2) / 2)


# -- T(sigma) moments -----------------------------------------------------

def _t_shift(params: ModelParams) -> float:
    g, p = params.gamma, params.edge_prob
    return 0.5 * g * g * (1 - 2 * p)


def _T_coeffs(params: ModelParams) -> tuple[float, float]:
    """``log E T(sigma) = c0 + c2 |sigma|^2``.

    Diagonal pairs carry ``F(0) = L(-s)`` with ``s = gamma^2 (1-2p) / 2``.  Off
    the diagonal (``i != j``) ``(N^2 + k^2)/2 - N`` pairs have
    ``sigma_i sigma_j = +1`` and carry ``F(1) = L(gamma - s)``; the other
    ``(N^2 - k^2)/2`` carry ``F(-1) = L(-gamma - s)``.
    """
    params.require_sparse()
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    s = _t_shift(params)
    f0, fp, fm = _L(p, -s), _L(p, g - s), _L(p, -g - s)
    return n * (f0 - fp) + 0.5 * n * n * (fp + fm), 0.5 * (fp - fm)


def _log_T_by_class(params: ModelParams) -> np.ndarray:
    c0, c2 = _T_coeffs(params)
    return c0 + c2 * _mags(params.n_sites) ** 2


def expected_T(params: ModelParams, mag: int) -> LogMoment:
    """``log E T(sigma)`` for ``|sigma| = mag``."""
    _check_mag(params.n_sites, mag)
    c0, c2 = _T_coeffs(params)
    return LogMoment(c0 + c2 * mag * mag)


def _T_pair_constants(params: ModelParams):
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    s2 = 2 * _t_shift(params)
    return _L(p, -s2), _L(p, 2 * g - s2), _L(p, -2 * g - s2)


def joint_expected_T(params: ModelParams, cls: PairClass) -> LogMoment:
    """``log E[T(sigma) T(tau)]``.

    Off-diagonal pairs with ``sigma_i sigma_j + tau_i tau_j = y`` carry
    ``G(y) = L(gamma y - gamma^2 (1-2p))``.  Counts: ``y = 2``:
    ``(N^2+k^2+l^2+m^2)/4 - N`` (the N diagonal pairs all have y = 2);
    ``y = -2``: ``(N^2-k^2-l^2+m^2)/4``; ``y = 0``: ``(N^2 - m^2)/2``.  The
    diagonal contributes ``N G(0)``.
    """
    params.require_sparse()
    n = params.n_sites
    cls.require_realizable(n)
    g0, gp, gm = _T_pair_constants(params)
    k2, l2, m2 = cls.k ** 2, cls.l ** 2, cls.m ** 2
    n_plus = (n * n + k2 + l2 + m2) // 4 - n
    n_minus = (n * n - k2 - l2 + m2) // 4
    n_zero = (n * n - m2) // 2
    return LogMoment(n * g0 + n_plus * gp + n_minus * gm + n_zero * g0)


def _T_pair_exponent(params: ModelParams) -> tuple[float, float, float]:
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    s = _t_shift(params)
    f0, fp, fm = _L(p, -s), _L(p, g - s), _L(p, -g - s)
    g0, gp, gm = _T_pair_constants(params)
    d0 = n * (g0 - gp - 2 * f0 + 2 * fp) + n * n * (0.25 * (gp + gm) + 0.5 * g0 - fp - fm)
    d_m = 0.25 * (gp + gm) - 0.5 * g0
    d_kl = 0.25 * (gp - gm) - 0.5 * (fp - fm)
    return d0, d_m, d_kl


def expected_hat_partition(params: ModelParams) -> LogMoment:
    """``log E hat Z_N = log sum_sigma E T(sigma)``."""
    terms = log_magnetization_counts(params.n_sites) + _log_T_by_class(params)
    return LogMoment(float(logsumexp(terms)))


def expected_T_expansion(params: ModelParams, mag: int) -> float:
    """Leading terms of ``log E T(sigma)`` for ``p -> 0, N^2 p^3 -> oo``."""
    n, p, b = params.n_sites, params.edge_prob, params.beta
    return (b * b / 8 * (1 - 1 / (n * p)) - b ** 4 / (12 * 16 * n * n * p ** 3)
            + b / 2 * (mag * mag / n - 1))


def expected_tilde_partition(params: ModelParams) -> LogMoment:
    """``log E tilde Z_N``; each pair factor is ``1 - p + p e^{gamma s_ij} / cosh(gamma)``."""
    n, p, g = params.n_sites, params.edge_prob, params.gamma
    lc = math.log(math.cosh(g))
    up, dn = _L(p, g - lc), _L(p, -g - lc)
    c0, c2 = 0.5 * n * n * (up + dn), 0.5 * (up - dn)
    terms = log_magnetization_counts(n) + c0 + c2 * _mags(n) ** 2
    return LogMoment(float(logsumexp(terms)))


# -- counting -------------------------------------------------------------

def nu_count(n: int, cls: PairClass) -> int:
    """Number of pairs ``(sigma, tau)`` in class ``cls``; 0 if unrealizable."""
    counts = cls.quarter_counts(n)
    if counts is None:
        return 0
    n1, n2, n3, _ = counts
    return math.comb(n, n1) * math.comb(n - n1, n2) * math.comb(n - n1 - n2, n3)


def lclt_ratio(n: int, cls: PairClass) -> float:
    """``nu_N(k,l,m) / (4^N N^{-3/2} e^{-(k^2+l^2+m^2)/(2N)})``."""
    nu = nu_count(n, cls)
    if nu == 0:
        raise ValidationError(f"class {cls} is not realizable for N={n}")
    log_ref = 2 * n * math.log(2.0) - 1.5 * math.log(n) - (cls.k ** 2 + cls.l ** 2 + cls.m ** 2) / (2 * n)
    return math.exp(math.log(nu) - log_ref)


class ClassTable:
    """Magnetization counts and pair-class counts for a fixed N (exact integers)."""

    def __init__(self, n: int):
        if n < 1:
            raise ValidationError("N must be positive")
        self.n = n
        self.magnetization_counts = {2 * a - n: math.comb(n, a) for a in range(n + 1)}

    def nu(self, cls: PairClass) -> int:
        return nu_count(self.n, cls)

    def classes(self) -> Iterator[PairClass]:
        n = self.n
        for a in range(n + 1):
            for b in range(n + 1):
                for j in range(max(0, a + b - n), min(a, b) + 1):
                    yield PairClass(2 * a - n, 2 * b - n, n - 2 * a - 2 * b + 4 * j)


@dataclass(frozen=True)
class AsymptoticConstants:
    a_n_beta: float
    b_n_beta: float
    alpha_n: float
    beta_n: float


def asymptotic_constants(params: ModelParams) -> AsymptoticConstants:
    n, p, b = params.n_sites, params.edge_prob, params.beta
    # cosh(x) - 1 = 2 sinh^2(x/2)
    a_n = -b * b / 8 + n * n * p * 2 * math.sinh(b / (4 * n * p)) ** 2
    b_n = -b * b / 4 + 0.5 * n * n * p * 2 * math.sinh(b / (2 * n * p)) ** 2
    alpha = b * math.sqrt(1 - p) / (2 * math.sqrt(n * p))
    beta_n = b * b * (1 - 2 * p) * math.sqrt(1 - p) / (8 * n * p ** 1.5)
    return AsymptoticConstants(a_n, b_n, alpha, beta_n)


# -- exact variances via class sums ---------------------------------------

def _check_ceiling(n: int, max_sites: int | None) -> None:
    ceiling = DEFAULT_CUBIC_CEILING if max_sites is None else max_sites
    if n > ceiling:
        raise CeilingExceeded("class-sum variance", n, ceiling)


def _class_sum(n, log_w, log_norm, d=(0.0, 0.0, 0.0), use_expm1=True,
               q=(0.0, 0.0, 0.0), workers: int = 1) -> float:
    log_fact = gammaln(np.arange(n + 1) + 1.0)
    log_w = np.ascontiguousarray(log_w, dtype=np.float64)

    def run(bounds):
        lo, hi = bounds
        return _kernels.class_sum_partials(n, log_fact, log_w, log_w, float(log_norm),
                                           float(d[0]), float(d[1]), float(d[2]), use_expm1,
                                           float(q[0]), float(q[1]), float(q[2]), lo, hi)

    # Chunking only changes scheduling; the per-a partials and their fsum do not move.
    edges = np.linspace(0, n + 1, max(1, workers) + 1).astype(int)
    chunks = [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(c) for c in chunks]
    return math.fsum(np.concatenate(parts).tolist())


def exact_variance_partition(params: ModelParams, max_sites: int | None = None,
                             workers: int = 1) -> float:
    """``Var(Z_N / E Z_N)`` exactly, in O(N^3)."""
    n = params.n_sites
    _check_ceiling(n, max_sites)
    if params.edge_prob == 1.0:
        return 0.0
    log_norm = 2 * expected_partition(params).log_value
    return _class_sum(n, _log_boltzmann_by_class(params), log_norm, d=_boltzmann_pair_exponent(params), workers=workers)


def exact_variance_W(params: ModelParams, max_sites: int | None = None,
                     workers: int = 1) -> float:
    """``Var(W_N) / (E Z_N)^2`` where ``W_N = sum_sigma E e^{-beta H} [-beta H - beta |sigma|^2 / 2N]``."""
    n, p, b = params.n_sites, params.edge_prob, params.beta
    _check_ceiling(n, max_sites)
    params.require_sparse()
    log_norm = 2 * expected_partition(params).log_value
    c_b = b * b * (1 - p) / (4 * n * n * p)
    return _class_sum(n, _log_boltzmann_by_class(params), log_norm, use_expm1=False,
                      q=(0.0, c_b, 0.0), workers=workers)


def exact_variance_hatZ(params: ModelParams, max_sites: int | None = None,
                        workers: int = 1) -> float:
    """``Var(hat Z_N / E hat Z_N)`` exactly, in O(N^3)."""
    n = params.n_sites
    _check_ceiling(n, max_sites)
    params.require_sparse()
    log_norm = 2 * expected_hat_partition(params).log_value
    return _class_sum(n, _log_T_by_class(params), log_norm, d=_T_pair_exponent(params),
                      workers=workers)


def exact_variance_x_residual(params: ModelParams, max_sites: int | None = None,
                              workers: int = 1) -> float:
    """``Var(sum_sigma X(sigma)) / (E Z_N)^2`` from the four covariance pieces.

    Per class the covariance divided by ``E_k E_l`` is
    ``expm1(D) + c_B m^2 + r(k,l,m) + r(l,k,m)`` where ``r`` is
    :func:`cov_boltzmann_hamiltonian`.
    """
    n, p, b, g = params.n_sites, params.edge_prob, params.beta, params.gamma
    _check_ceiling(n, max_sites)
    if p == 1.0:
        return 0.0
    log_norm = 2 * expected_partition(params).log_value
    c_b = b * b * (1 - p) / (4 * n * n * p)
    wp, wm = _w(p, g), _w(p, -g)
    scale = b / (2 * n)
    q = (0.0, c_b - scale * (wp - wm), -scale * 0.5 * (wp + wm))
    return _class_sum(n, _log_boltzmann_by_class(params), log_norm,
                      d=_boltzmann_pair_exponent(params), q=q, workers=workers)
