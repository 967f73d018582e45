"""Compiled inner loops: Gray-code enumeration and pair-class sums.

Bit masks are held in signed 64-bit integers, which limits enumeration to
N <= 62 (far above any practical enumeration size).
"""

import math

import numpy as np
from numba import njit

MAX_BITS = 62


@njit(cache=True, nogil=True)
def popcount(x):
    x = x - ((x >> 1) & 0x5555555555555555)
    x = (x & 0x3333333333333333) + ((x >> 2) & 0x3333333333333333)
    x = (x + (x >> 4)) & 0x0F0F0F0F0F0F0F0F
    x = x + (x >> 8)
    x = x + (x >> 16)
    x = x + (x >> 32)
    return x & 0x7F


@njit(cache=True, nogil=True)
def lowest_bit_index(t):
    return popcount((t & -t) - 1)


@njit(cache=True, nogil=True)
def quadratic_form_full(rows, n, s):
    q = 0
    for i in range(n):
        t = 2 * popcount(rows[i] & s) - popcount(rows[i])
        if (s >> i) & 1:
            q += t
        else:
            q -= t
    return q


@njit(cache=True, nogil=True)
def flip_delta(out_mask, out_cnt, in_mask, in_cnt, s, b):
    """Change of Q when spin ``b`` of state ``s`` is flipped.

    ``out_mask[b]`` / ``in_mask[b]`` are row and column ``b`` with the
    self-loop bit removed (that term is flip invariant).
    """
    h = (2 * popcount(out_mask[b] & s) - out_cnt[b]
         + 2 * popcount(in_mask[b] & s) - in_cnt[b])
    if (s >> b) & 1:
        return -2 * h
    return 2 * h


@njit(cache=True, nogil=True)
def gray_histogram(rows, out_mask, out_cnt, in_mask, in_cnt, n, nfree, s0, hist):
    """Add the (Q, magnetization) counts of the sub-cube ``s0 | gray(t)`` to ``hist``.

    ``hist[Q + n*n, (|sigma| + n) // 2]`` counts configurations.
    """
    off = n * n
    s = s0
    q = quadratic_form_full(rows, n, s)
    a = popcount(s)
    hist[q + off, a] += 1
    total = 1 << nfree
    for t in range(1, total):
        b = lowest_bit_index(t)
        q += flip_delta(out_mask, out_cnt, in_mask, in_cnt, s, b)
        if (s >> b) & 1:
            a -= 1
        else:
            a += 1
        s ^= 1 << b
        hist[q + off, a] += 1


@njit(cache=True, nogil=True)
def gray_walk(rows, out_mask, out_cnt, in_mask, in_cnt, n, nfree, s0):
    """Incremental Q and state along the Gray path (for invariant checks)."""
    total = 1 << nfree
    qs = np.empty(total, dtype=np.int64)
    states = np.empty(total, dtype=np.int64)
    s = s0
    q = quadratic_form_full(rows, n, s)
    qs[0] = q
    states[0] = s
    for t in range(1, total):
        b = lowest_bit_index(t)
        q += flip_delta(out_mask, out_cnt, in_mask, in_cnt, s, b)
        s ^= 1 << b
        qs[t] = q
        states[t] = s
    return qs, states


@njit(cache=True, nogil=True)
def flip_walk(rows, out_mask, out_cnt, in_mask, in_cnt, n, s0, flips):
    """Incremental and recomputed Q after each flip in ``flips``."""
    m = flips.shape[0]
    inc = np.empty(m, dtype=np.int64)
    full = np.empty(m, dtype=np.int64)
    s = s0
    q = quadratic_form_full(rows, n, s)
    for t in range(m):
        b = flips[t]
        q += flip_delta(out_mask, out_cnt, in_mask, in_cnt, s, b)
        s ^= 1 << b
        inc[t] = q
        full[t] = quadratic_form_full(rows, n, s)
    return inc, full


@njit(cache=True, nogil=True)
def class_sum_partials(n, log_fact, log_wa, log_wb, log_norm,
                       d0, d_m, d_kl, use_expm1, q0, q_m, q_kl, a_lo, a_hi):
    """Per-``a`` partial sums over realizable pair classes.

    ``a`` and ``b`` count the +1 spins of sigma and tau (k = 2a - n,
    l = 2b - n) and ``j`` counts sites where both are +1, so that
    m = n - 2a - 2b + 4j and nu = n! / (j! (a-j)! (b-j)! (n-a-b+j)!).
    Each term is

        nu * exp(log_wa[a] + log_wb[b] - log_norm)
           * (use_expm1 * expm1(d0 + d_m m^2 + d_kl (k^2 + l^2))
              + q0 + q_m m^2 + q_kl (k^2 + l^2)).
    """
    partials = np.zeros(a_hi - a_lo)
    for a in range(a_lo, a_hi):
        k = 2 * a - n
        acc = 0.0
        for b in range(n + 1):
            l = 2 * b - n
            kl2 = float(k * k + l * l)
            base = log_fact[n] - log_norm + log_wa[a] + log_wb[b]
            lo = max(0, a + b - n)
            hi = min(a, b)
            for j in range(lo, hi + 1):
                m = n - 2 * a - 2 * b + 4 * j
                m2 = float(m * m)
                log_nu = -(log_fact[j] + log_fact[a - j] + log_fact[b - j] + log_fact[n - a - b + j])
                f = q0 + q_m * m2 + q_kl * kl2
                if use_expm1:
                    f += math.expm1(d0 + d_m * m2 + d_kl * kl2)
                acc += math.exp(base + log_nu) * f
        partials[a - a_lo] = acc
    return partials
