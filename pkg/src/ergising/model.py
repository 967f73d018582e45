"""Model parameters, spin configurations, random graphs and the Hamiltonian.

Spins and adjacency rows are bit-packed: bit ``i`` of a spin word is 1 when
spin ``i`` is +1, and bit ``j`` of row ``i`` is the indicator of the directed
edge ``(i, j)``.  All ``N**2`` ordered pairs, including self-loops, carry
independent indicators.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ValidationError
from .rng import bernoulli_matrix

__all__ = [
    "ModelParams",
    "SpinConfiguration",
    "GraphSample",
    "PairClass",
    "XiEta",
    "sample_graph",
    "quadratic_form",
    "hamiltonian",
    "magnetization",
    "overlap",
    "xi_eta",
]


@dataclass(frozen=True)
class ModelParams:
    """The triple ``(N, p, beta)``; ``gamma = beta / (2 N p)`` is derived."""

    n_sites: int
    edge_prob: float
    beta: float

    def __post_init__(self):
        if not isinstance(self.n_sites, (int, np.integer)) or self.n_sites < 1:
            raise ValidationError(f"n_sites must be a positive integer, got {self.n_sites!r}")
        if not (0.0 < self.edge_prob <= 1.0):
            raise ValidationError(f"edge_prob must lie in (0, 1], got {self.edge_prob!r}")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ValidationError(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "n_sites", int(self.n_sites))
        object.__setattr__(self, "edge_prob", float(self.edge_prob))
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def gamma(self) -> float:
        return self.beta / (2 * self.n_sites * self.edge_prob)

    def require_high_temperature(self) -> None:
        """Reject ``beta >= 1`` for operations that encode the CLT regimes."""
        if self.beta >= 1.0:
            raise ValidationError(f"beta must be < 1 for the fluctuation results, got {self.beta}")

    def require_sparse(self) -> None:
        """Reject ``p == 1``: quantities normalised by ``1 - p`` are undefined there."""
        if self.edge_prob >= 1.0:
            raise ValidationError("edge_prob must be < 1 (normalisation divides by 1 - p)")

    def to_dict(self) -> dict:
        return {"n_sites": self.n_sites, "edge_prob": self.edge_prob, "beta": self.beta}

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        return cls(int(d["n_sites"]), float(d["edge_prob"]), float(d["beta"]))


@dataclass(frozen=True)
class SpinConfiguration:
    """A vector of ``n_sites`` spins packed into the integer ``bits``."""

    n_sites: int
    bits: int

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValidationError("n_sites must be positive")
        if self.bits < 0 or self.bits >> self.n_sites:
            raise ValidationError("bits outside the range of n_sites spins")

    @classmethod
    def from_spins(cls, spins: Sequence[int]) -> "SpinConfiguration":
        bits = 0
        for i, s in enumerate(spins):
            if s == 1:
                bits |= 1 << i
            elif s != -1:
                raise ValidationError(f"spin values must be +1 or -1, got {s!r}")
        return cls(len(spins), bits)

    @classmethod
    def all_up(cls, n: int) -> "SpinConfiguration":
        return cls(n, (1 << n) - 1)

    def spins(self) -> np.ndarray:
        return np.array([1 if (self.bits >> i) & 1 else -1 for i in range(self.n_sites)],
                        dtype=np.int64)

    def flipped(self) -> "SpinConfiguration":
        """The globally flipped configuration ``-sigma``."""
        return SpinConfiguration(self.n_sites, self.bits ^ ((1 << self.n_sites) - 1))

    def __neg__(self) -> "SpinConfiguration":
        return self.flipped()


def magnetization(sigma: SpinConfiguration) -> int:
    """``|sigma| = sum_i sigma_i``."""
    return 2 * sigma.bits.bit_count() - sigma.n_sites


def overlap(sigma: SpinConfiguration, tau: SpinConfiguration) -> int:
    """``|sigma tau| = sum_i sigma_i tau_i``."""
    if sigma.n_sites != tau.n_sites:
        raise ValidationError(f"length mismatch: {sigma.n_sites} vs {tau.n_sites}")
    return sigma.n_sites - 2 * (sigma.bits ^ tau.bits).bit_count()


@dataclass(frozen=True)
class PairClass:
    """Class ``(k, l, m) = (|sigma|, |tau|, |sigma tau|)`` of a pair of spin vectors."""

    k: int
    l: int
    m: int

    def quarter_counts(self, n: int) -> tuple[int, int, int, int] | None:
        """Site counts with sign patterns (+,+), (+,-), (-,+), (-,-), or None."""
        k, l, m = self.k, self.l, self.m
        if max(abs(k), abs(l), abs(m)) > n:
            return None
        if (n + k) % 2 or (n + l) % 2 or (n + m) % 2 or (n + k + l + m) % 4:
            return None
        counts = ((n + k + l + m) // 4, (n + k - l - m) // 4,
                  (n - k + l - m) // 4, (n - k - l + m) // 4)
        if min(counts) < 0:
            return None
        return counts

    def is_realizable(self, n: int) -> bool:
        return self.quarter_counts(n) is not None

    def require_realizable(self, n: int) -> tuple[int, int, int, int]:
        counts = self.quarter_counts(n)
        if counts is None:
            raise ValidationError(f"class {self} is not realizable for N={n}")
        return counts

    @classmethod
    def of(cls, sigma: SpinConfiguration, tau: SpinConfiguration) -> "PairClass":
        return cls(magnetization(sigma), magnetization(tau), overlap(sigma, tau))


def _popcount_bytes(a: np.ndarray) -> int:
    return int(np.bitwise_count(a).sum(dtype=np.int64))


@dataclass(frozen=True)
class GraphSample:
    """Directed Erdos-Renyi graph with self-loops, stored row-major bit-packed.

    ``packed`` holds ``ceil(N**2 / 8)`` bytes; indicator ``(i, j)`` is bit
    ``i*N + j`` counted from the most significant bit of byte 0.
    """

    n_sites: int
    edge_prob: float
    seed: int
    packed: bytes = field(repr=False)
    total_edges: int = -1
    diag_edges: int = -1

    def __post_init__(self):
        n = self.n_sites
        if n < 1:
            raise ValidationError("n_sites must be positive")
        if len(self.packed) != (n * n + 7) // 8:
            raise ValidationError(f"expected {(n * n + 7) // 8} adjacency bytes, got {len(self.packed)}")
        dense = self.dense()
        total = int(dense.sum())
        diag = int(np.trace(dense))
        if self.total_edges == -1:
            object.__setattr__(self, "total_edges", total)
        if self.diag_edges == -1:
            object.__setattr__(self, "diag_edges", diag)
        if (self.total_edges, self.diag_edges) != (total, diag):
            raise ValidationError("cached edge counts disagree with the adjacency bits")

    @classmethod
    def from_dense(cls, adjacency, edge_prob: float, seed: int = 0) -> "GraphSample":
        adj = np.asarray(adjacency, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ValidationError("adjacency must be a square matrix")
        return cls(adj.shape[0], float(edge_prob), int(seed), np.packbits(adj.ravel()).tobytes())

    @classmethod
    def from_edges(cls, n: int, edges, edge_prob: float, seed: int = 0) -> "GraphSample":
        adj = np.zeros((n, n), dtype=bool)
        for i, j in edges:
            adj[i, j] = True
        return cls.from_dense(adj, edge_prob, seed)

    def dense(self) -> np.ndarray:
        n = self.n_sites
        bits = np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8), count=n * n)
        return bits.reshape(n, n).astype(bool)

    @cached_property
    def row_ints(self) -> tuple[int, ...]:
        """Row ``i`` as an integer whose bit ``j`` is the indicator of ``(i, j)``."""
        weights = [1 << j for j in range(self.n_sites)]
        return tuple(sum(w for w, b in zip(weights, row) if b) for row in self.dense())

    @cached_property
    def col_ints(self) -> tuple[int, ...]:
        weights = [1 << i for i in range(self.n_sites)]
        return tuple(sum(w for w, b in zip(weights, col) if b) for col in self.dense().T)

    def permuted(self, perm: Sequence[int]) -> "GraphSample":
        """Relabel vertices: new indicator ``(a, b)`` is old ``(perm[a], perm[b])``."""
        perm = np.asarray(perm)
        adj = self.dense()[np.ix_(perm, perm)]
        return GraphSample.from_dense(adj, self.edge_prob, self.seed)

    # -- serialization ---------------------------------------------------

    _MAGIC = b"ERG1"
    _HEADER = struct.Struct("<4sIQd")

    def to_bytes(self) -> bytes:
        """Binary layout: ``b"ERG1"``, u32 N, u64 seed, f64 p (little endian), adjacency bytes."""
        return self._HEADER.pack(self._MAGIC, self.n_sites, self.seed, self.edge_prob) + self.packed

    @classmethod
    def from_bytes(cls, data: bytes) -> "GraphSample":
        head = cls._HEADER.size
        if len(data) < head:
            raise ValidationError("truncated graph header")
        magic, n, seed, p = cls._HEADER.unpack_from(data)
        if magic != cls._MAGIC:
            raise ValidationError(f"bad magic {magic!r}")
        return cls(n, p, seed, bytes(data[head:]))

    def to_dict(self) -> dict:
        rows = ["".join("1" if b else "0" for b in row) for row in self.dense()]
        return {
            "n_sites": self.n_sites,
            "edge_prob": self.edge_prob,
            "seed": self.seed,
            "total_edges": self.total_edges,
            "diag_edges": self.diag_edges,
            "rows": rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GraphSample":
        adj = np.array([[c == "1" for c in row] for row in d["rows"]], dtype=bool)
        g = cls.from_dense(adj.reshape(int(d["n_sites"]), int(d["n_sites"])),
                           float(d["edge_prob"]), int(d["seed"]))
        if (g.total_edges, g.diag_edges) != (d.get("total_edges", g.total_edges),
                                             d.get("diag_edges", g.diag_edges)):
            raise ValidationError("edge counts in JSON disagree with the rows")
        return g

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GraphSample":
        return cls.from_dict(json.loads(text))


def sample_graph(params: ModelParams, seed: int) -> GraphSample:
    """Draw the ``N**2`` independent Bernoulli(p) indicators keyed by ``(seed, i, j)``."""
    if not 0 <= seed < 1 << 64:
        raise ValidationError("seed must be a 64-bit unsigned integer")
    adj = bernoulli_matrix(seed, params.n_sites, params.edge_prob)
    return GraphSample.from_dense(adj, params.edge_prob, seed)


def _check_dims(graph: GraphSample, sigma: SpinConfiguration, params: ModelParams | None = None):
    if graph.n_sites != sigma.n_sites:
        raise ValidationError(f"dimension mismatch: graph N={graph.n_sites}, spins N={sigma.n_sites}")
    if params is not None and params.n_sites != graph.n_sites:
        raise ValidationError(f"dimension mismatch: graph N={graph.n_sites}, params N={params.n_sites}")


def quadratic_form(graph: GraphSample, sigma: SpinConfiguration) -> int:
    """The integer ``Q(sigma) = sum_{i,j} eps_ij sigma_i sigma_j`` via row popcounts."""
    _check_dims(graph, sigma)
    s = sigma.bits
    q = 0
    for i, row in enumerate(graph.row_ints):
        t = 2 * (row & s).bit_count() - row.bit_count()
        q += t if (s >> i) & 1 else -t
    return q


def hamiltonian(graph: GraphSample, sigma: SpinConfiguration, params: ModelParams) -> float:
    """``H(sigma) = -Q(sigma) / (2 N p)``."""
    _check_dims(graph, sigma, params)
    return -quadratic_form(graph, sigma) / (2 * params.n_sites * params.edge_prob)


class XiEta(NamedTuple):
    xi: float
    eta: float
    xi_centered: float
    eta_centered: float


def xi_eta(graph: GraphSample, params: ModelParams) -> XiEta:
    """Normalised diagonal and total edge counts, raw and centred at their means."""
    params.require_sparse()
    if graph.n_sites != params.n_sites:
        raise ValidationError("dimension mismatch between graph and params")
    n, p = params.n_sites, params.edge_prob
    xi_scale = math.sqrt(n * p * (1 - p))
    eta_scale = n * math.sqrt(p * (1 - p))
    return XiEta(
        graph.diag_edges / xi_scale,
        graph.total_edges / eta_scale,
        (graph.diag_edges - n * p) / xi_scale,
        (graph.total_edges - n * n * p) / eta_scale,
    )
