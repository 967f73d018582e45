"""Exhaustive oracles: average over every one of the 2^(N^2) graphs (N <= 3).

Nothing here uses the package's closed forms; only the definitions of H,
T, W and X are coded directly, with dense numpy arrays.
"""

import itertools
import math

import numpy as np


def all_graphs(n):
    """All adjacency matrices (as an (2^(n^2), n, n) int array)."""
    bits = np.array(list(itertools.product([0, 1], repeat=n * n)), dtype=np.int64)
    return bits.reshape(-1, n, n)


def all_spins(n):
    return np.array(list(itertools.product([-1, 1], repeat=n)), dtype=np.int64)


class Oracle:
    """Per-graph arrays over all graphs and spins, with their probability weights."""

    def __init__(self, n, p, beta):
        self.n, self.p, self.beta = n, p, beta
        self.graphs = all_graphs(n)
        self.spins = all_spins(n)
        edges = self.graphs.sum(axis=(1, 2))
        self.weights = p ** edges * (1 - p) ** (n * n - edges)
        # Q[g, s] = sum_ij eps_ij s_i s_j
        self.Q = np.einsum("gij,si,sj->gs", self.graphs, self.spins, self.spins)
        self.H = -self.Q / (2 * n * p)
        self.boltz = np.exp(-beta * self.H)
        self.total = edges
        self.diag = np.trace(self.graphs, axis1=1, axis2=2)

    def mean(self, x):
        return np.tensordot(self.weights, x, axes=(0, 0))

    def var(self, x):
        m = self.mean(x)
        return self.mean((x - m) ** 2)

    def cov(self, x, y):
        return self.mean((x - self.mean(x)) * (y - self.mean(y)))

    def index(self, spins):
        return int(np.flatnonzero((self.spins == np.asarray(spins)).all(axis=1))[0])

    def mags(self):
        return self.spins.sum(axis=1)

    # --- derived per-graph quantities ---
    def T(self):
        n, p, b = self.n, self.p, self.beta
        xi = self.diag / math.sqrt(n * p * (1 - p))
        eta = self.total / (n * math.sqrt(p * (1 - p)))
        a_n = b * math.sqrt(1 - p) / (2 * math.sqrt(n * p))
        b_n = b * b * (1 - 2 * p) * math.sqrt(1 - p) / (8 * n * p ** 1.5)
        return np.exp(-b * self.H - (a_n * xi + b_n * eta)[:, None])

    def Z(self):
        return self.boltz.sum(axis=1)

    def W(self):
        eb = self.mean(self.boltz)
        k2 = self.mags() ** 2
        return (eb[None, :] * (-self.beta * self.H - self.beta * k2 / (2 * self.n))).sum(axis=1)

    def X(self):
        eb = self.mean(self.boltz)
        k2 = self.mags() ** 2
        x = self.boltz - eb[None, :] * (1 - self.beta * self.H - self.beta * k2 / (2 * self.n))
        return x.sum(axis=1)


def pair_class_counts(n):
    """{(k, l, m): count} by enumerating all 4^n pairs."""
    s = np.arange(1 << n, dtype=np.int64)
    mag = 2 * np.bitwise_count(s).astype(np.int64) - n
    counts = {}
    for t in range(1 << n):
        ov = n - 2 * np.bitwise_count(s ^ t).astype(np.int64)
        k = mag
        l = mag[t]
        keys, c = np.unique((k + n) * (2 * n + 1) + (ov + n), return_counts=True)
        for key, cc in zip(keys, c):
            kk, mm = divmod(int(key), 2 * n + 1)
            cls = (kk - n, int(l), mm - n)
            counts[cls] = counts.get(cls, 0) + int(cc)
    return counts
