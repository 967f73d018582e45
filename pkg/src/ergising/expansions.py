"""Series expansions of the central function, the expm1 linearization, and Hermite tools.

The central function is

    F_m(x, p, z) = log(1 - p + p exp(x z - m (1 - 2p) z^2 / 2)).

Its even/odd combinations in ``x`` are claimed to have specific leading terms
in ``(p, z)`` with remainders of stated orders ``O(p^a z^b)``.  The order checks
evaluate the exact remainder in high precision (mpmath) and fit log-log slopes
inside hand-picked windows where a single remainder term dominates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import mpmath
import numpy as np

from .errors import ValidationError

__all__ = [
    "HERMITE_MAX_DEFAULT",
    "Z_WINDOW_DEFAULT",
    "SLOPE_TOLERANCE",
    "SeriesClaim",
    "ScanWindow",
    "OrderReport",
    "CLAIMS",
    "SUPPLEMENTARY_CLAIMS",
    "f_central",
    "f_central_naive",
    "f_central_mp",
    "series_residual",
    "series_order_check",
    "expan_exp_residual",
    "hermite",
    "hermite_coeff_exponential",
    "hermite_partial_sum",
]

HERMITE_MAX_DEFAULT = 30
Z_WINDOW_DEFAULT = 0.3
SLOPE_TOLERANCE = 0.25
_DPS = 60


def _exponent(m, x, p, z):
    return x * z - m * (1 - 2 * p) * z * z / 2


def f_central(m: int, x: float, p: float, z: float) -> float:
    """``F_m(x, p, z)`` via ``log1p(p expm1(.))``."""
    u = p * math.expm1(_exponent(m, x, p, z))
    if u <= -1.0:
        raise ValidationError("1 - p + p e^(xz - m(1-2p)z^2/2) must be positive")
    return math.log1p(u)


def f_central_naive(m: int, x: float, p: float, z: float) -> float:
    """``F_m`` by the literal formula (reference path)."""
    arg = 1 - p + p * math.exp(_exponent(m, x, p, z))
    if arg <= 0:
        raise ValidationError("1 - p + p e^(xz - m(1-2p)z^2/2) must be positive")
    return math.log(arg)


def f_central_mp(m, x, p, z):
    """``F_m`` in mpmath at the ambient precision."""
    p, z, x = mpmath.mpf(p), mpmath.mpf(z), mpmath.mpf(x)
    return mpmath.log1p(p * mpmath.expm1(x * z - m * (1 - 2 * p) * z * z / 2))


@dataclass(frozen=True)
class ScanWindow:
    """One dominance window for the remainder term ``p^a z^b``.

    The z-scan fits the slope in ``z`` at fixed ``p``; the p-scan fits the
    slope in ``p`` at fixed ``z`` (skipped for ``a = 0``).
    """

    order: tuple[int, int]
    z_scan_p: float
    z_grid: tuple[float, float]
    p_scan_z: float | None = None
    p_grid: tuple[float, float] | None = None


@dataclass(frozen=True)
class SeriesClaim:
    claim_id: str
    leading_terms: str
    residual_orders: tuple[tuple[int, int], ...]
    combination: Callable = field(repr=False, compare=False)
    leading: Callable = field(repr=False, compare=False)
    windows: tuple[ScanWindow, ...] = field(default=(), compare=False)


def _F(m):
    return lambda x, p, z: f_central_mp(m, x, p, z)


def _even(m):
    F = _F(m)
    return lambda p, z: (F(1, p, z) + F(-1, p, z)) / 2


def _mp_expan_exp_residual(p, x):
    p, x = mpmath.mpf(p), mpmath.mpf(x)
    e = mpmath.expm1(x)
    return (1 - p) * e / (1 + p * e) - (1 - p) * x


# Windows: (2,4) dominates the (1,6) term when p >> z^2; (1,6) when p << z^2.
_W24 = ScanWindow((2, 4), 1e-3, (1e-6, 1e-5), 1e-5, (1e-4, 1e-3))
_W16 = ScanWindow((1, 6), 1e-12, (1e-2, 1e-1), 0.05, (1e-12, 1e-11))
_W13 = ScanWindow((1, 3), 1e-3, (1e-3, 1e-2), 1e-2, (1e-6, 1e-5))
_F1, _F2 = _F(1), _F(2)

CLAIMS: dict[str, SeriesClaim] = {c.claim_id: c for c in [
    SeriesClaim("f1a", "(F_1(1)+F_1(-1))/2 = p^2 z^2/2 - p z^4/12", ((2, 4), (1, 6)),
                lambda p, z: (_F1(1, p, z) + _F1(-1, p, z)) / 2,
                lambda p, z: p * p * z * z / 2 - p * z ** 4 / 12, (_W24, _W16)),
    SeriesClaim("f1b", "(F_1(1)-F_1(-1))/2 = p z", ((1, 3),),
                lambda p, z: (_F1(1, p, z) - _F1(-1, p, z)) / 2,
                lambda p, z: p * z, (_W13,)),
    SeriesClaim("f2a", "(F_2(2)+F_2(-2)+2F_2(0))/4 = p^2 z^2 - p z^4/6", ((2, 4), (1, 6)),
                lambda p, z: (_F2(2, p, z) + _F2(-2, p, z) + 2 * _F2(0, p, z)) / 4,
                lambda p, z: p * p * z * z - p * z ** 4 / 6, (_W24, _W16)),
    SeriesClaim("f2b", "(F_2(2)+F_2(-2)-2F_2(0))/4 = p(1-p) z^2 - 2 p z^4/3", ((2, 4), (1, 6)),
                lambda p, z: (_F2(2, p, z) + _F2(-2, p, z) - 2 * _F2(0, p, z)) / 4,
                lambda p, z: p * (1 - p) * z * z - 2 * p * z ** 4 / 3, (_W24, _W16)),
    SeriesClaim("f2c", "(F_2(2)-F_2(-2))/4 = p z", ((1, 3),),
                lambda p, z: (_F2(2, p, z) - _F2(-2, p, z)) / 4,
                lambda p, z: p * z, (_W13,)),
    # Here ``z`` plays the role of x; p is held at a value where the x^2 term is present.
    SeriesClaim("expan_exp", "e^x/(1-p+p e^x) - 1 = (1-p) x", ((0, 2),),
                lambda p, z: _mp_expan_exp_residual(p, z) + (1 - mpmath.mpf(p)) * z,
                lambda p, z: (1 - p) * z, (ScanWindow((0, 2), 0.3, (1e-4, 1e-2)),)),
]}

# The literal even-sum reading of the last F_2 combination; its remainder is
# O(p z), so it is reported as failing rather than silently replaced.
SUPPLEMENTARY_CLAIMS: dict[str, SeriesClaim] = {"f2c_even": SeriesClaim(
    "f2c_even", "(F_2(2)+F_2(-2))/4 = p z", ((1, 3),),
    lambda p, z: (_F2(2, p, z) + _F2(-2, p, z)) / 4,
    lambda p, z: p * z, (_W13,))}


def _lookup(claim) -> SeriesClaim:
    if isinstance(claim, SeriesClaim):
        return claim
    try:
        return {**CLAIMS, **SUPPLEMENTARY_CLAIMS}[claim]
    except KeyError:
        raise ValidationError(f"unknown claim {claim!r}") from None


def series_residual(claim, p, z):
    """Exact combination minus the stated leading terms, as an mpmath number."""
    c = _lookup(claim)
    with mpmath.workdps(_DPS):
        p, z = mpmath.mpf(p), mpmath.mpf(z)
        return c.combination(p, z) - c.leading(p, z)


def _grid(lo, hi, n=7):
    return np.geomspace(lo, hi, n)


def _check_grid(vals, name, upper=None):
    vals = np.asarray(vals, dtype=float)
    if vals.size < 2 or np.any(vals <= 0) or vals.max() / vals.min() < 10 * (1 - 1e-12):
        raise ValidationError(f"degenerate {name} grid: need >= 2 positive points spanning a decade")
    if upper is not None and vals.max() > upper:
        raise ValidationError(f"{name} grid leaves the verification window |{name}| <= {upper}")
    return vals


def _slope(claim, ps, zs):
    with mpmath.workdps(_DPS):
        res = [abs(series_residual(claim, p, z)) for p, z in zip(ps, zs)]
        if any(r == 0 for r in res):
            return math.nan
        ly = np.array([float(mpmath.log(r)) for r in res])
    lx = np.log(ps if np.ptp(np.log(ps)) > 0 else zs)
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass
class OrderReport:
    claim_id: str
    windows: list
    fitted_orders: list
    claimed_orders: list
    passed: bool

    def to_dict(self) -> dict:
        return {"claim_id": self.claim_id, "window": self.windows, "fitted_orders": self.fitted_orders,
                "claimed_orders": self.claimed_orders, "pass": self.passed}


def series_order_check(claim, p_grid: Sequence[float] | None = None,
                       z_grid: Sequence[float] | None = None,
                       tolerance: float = SLOPE_TOLERANCE,
                       z_window: float = Z_WINDOW_DEFAULT) -> OrderReport:
    """Fit remainder orders of ``claim`` and compare with its claimed orders.

    With no grids, each of the claim's dominance windows is scanned.  With
    explicit grids, one z-scan at ``p = min(p_grid)`` and one p-scan at
    ``z = min(z_grid)`` are fitted and must match one claimed order.
    """
    c = _lookup(claim)
    windows, fitted, ok = [], [], True
    if p_grid is None and z_grid is None:
        for w in c.windows:
            zs = _check_grid(_grid(*w.z_grid), "z", z_window)
            sz = _slope(c, np.full(zs.size, w.z_scan_p), zs)
            sp = None
            entry = {"order": list(w.order), "z_scan": {"p": w.z_scan_p, "z": list(w.z_grid)}}
            if w.p_grid is not None and w.order[0] > 0:
                ps = _check_grid(_grid(*w.p_grid), "p")
                sp = _slope(c, ps, np.full(ps.size, w.p_scan_z))
                entry["p_scan"] = {"z": w.p_scan_z, "p": list(w.p_grid)}
            windows.append(entry)
            fitted.append([sp, sz])
            good = abs(sz - w.order[1]) <= tolerance and (
                sp is None or abs(sp - w.order[0]) <= tolerance)
            ok = ok and good
    else:
        if p_grid is None or z_grid is None:
            raise ValidationError("give both p_grid and z_grid, or neither")
        ps = _check_grid(p_grid, "p")
        zs = _check_grid(z_grid, "z", z_window)
        sz = _slope(c, np.full(zs.size, ps.min()), zs)
        sp = _slope(c, ps, np.full(ps.size, zs.min()))
        windows.append({"z_scan": {"p": float(ps.min()), "z": [float(zs.min()), float(zs.max())]},
                        "p_scan": {"z": float(zs.min()), "p": [float(ps.min()), float(ps.max())]}})
        fitted.append([sp, sz])
        ok = any(abs(sz - b) <= tolerance and (a == 0 or abs(sp - a) <= tolerance)
                 for a, b in c.residual_orders)
    return OrderReport(c.claim_id, windows, fitted, [list(o) for o in c.residual_orders], bool(ok))


def expan_exp_residual(x: float, p: float) -> float:
    """``e^x / (1 - p + p e^x) - 1 - (1 - p) x``."""
    if abs(p) > 2:
        raise ValidationError("|p| <= 2 required")
    e = math.expm1(x)
    den = 1 + p * e
    if den == 0:
        raise ValidationError("1 - p + p e^x vanishes")
    # (1-p)[e/(1+pe) - x] = (1-p)(e - x - p x e)/(1+pe)
    return (1 - p) * ((e - x) - p * x * e) / den


def hermite(n: int, x, max_n: int = HERMITE_MAX_DEFAULT):
    """Probabilists' Hermite polynomial ``He_n(x)`` by the three-term recurrence."""
    if n < 0 or n > max_n:
        raise ValidationError(f"hermite degree must lie in [0, {max_n}], got {n}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        return prev[()] if prev.ndim == 0 else prev
    for k in range(1, n):
        prev, cur = cur, x * cur - k * prev
    return cur[()] if cur.ndim == 0 else cur


def hermite_coeff_exponential(a: float, b: float, n: int, max_n: int = HERMITE_MAX_DEFAULT) -> float:
    """``(1/n!) E[e^{a + b xi} He_n(xi)] = b^n e^{a + b^2/2} / n!`` for standard normal ``xi``."""
    if n < 0 or n > max_n:
        raise ValidationError(f"hermite degree must lie in [0, {max_n}], got {n}")
    return b ** n / math.factorial(n) * math.exp(a + b * b / 2)


def hermite_partial_sum(a: float, b: float, order: int, x):
    """``sum_{n <= order} f_n He_n(x)`` for ``f(x) = e^{a + b x}``."""
    x = np.asarray(x, dtype=float)
    return sum(hermite_coeff_exponential(a, b, n) * hermite(n, x) for n in range(order + 1))
