import itertools
import math

import numpy as np
import pytest
from scipy.special import logsumexp

from ergising import enumeration as E
from ergising import moments as M
from ergising.errors import CeilingExceeded, ValidationError
from ergising.model import GraphSample, ModelParams, sample_graph
from ergising.rng import derive_seed


def direct_log_z(graph, params, g=lambda x: 1.0):
    """Plain summation over all configurations with dense linear algebra."""
    n = graph.n_sites
    A = graph.dense().astype(float)
    terms = []
    for s in itertools.product([-1, 1], repeat=n):
        s = np.array(s, dtype=float)
        w = g(s.sum() / math.sqrt(n))
        if w > 0:
            terms.append(params.gamma * (s @ A @ s) + math.log(w))
    return float(logsumexp(terms)) if terms else -math.inf


def curie_weiss_log_z(params):
    n = params.n_sites
    k = 2.0 * np.arange(n + 1) - n
    return float(logsumexp(M.log_magnetization_counts(n) + params.beta * k * k / (2 * n)))


EXPLICIT = GraphSample.from_dense([[1, 0, 1], [1, 1, 0], [0, 1, 0]], 0.5, seed=0)


def test_partition_exact_explicit_graph():
    P = ModelParams(3, 0.5, 0.7)
    assert E.partition_exact(EXPLICIT, P) == pytest.approx(direct_log_z(EXPLICIT, P), rel=1e-14)


@pytest.mark.parametrize("n", [1, 2, 5, 9, 12])
def test_partition_exact_random_graphs(n):
    for i in range(3):
        P = ModelParams(n, 0.35, 0.9)
        g = sample_graph(P, derive_seed(n, i))
        assert E.partition_exact(g, P) == pytest.approx(direct_log_z(g, P), rel=1e-13, abs=1e-13)


def test_small_beta_gives_n_log2():
    P = ModelParams(10, 0.3, 1e-14)
    g = sample_graph(P, 4)
    assert E.partition_exact(g, P) == pytest.approx(10 * math.log(2), rel=1e-12)


@pytest.mark.parametrize("n", [3, 10, 20])
def test_p1_equals_curie_weiss(n):
    P = ModelParams(n, 1.0, 0.5)
    g = sample_graph(P, 0)
    assert abs(E.partition_exact(g, P) - curie_weiss_log_z(P)) <= 1e-12 * abs(curie_weiss_log_z(P))
    assert E.free_energy_per_site(E.partition_exact(g, P), P) == pytest.approx(
        -curie_weiss_log_z(P) / (0.5 * n), rel=1e-12)


def test_symmetric_and_full_enumeration_agree():
    P = ModelParams(14, 0.3, 0.8)
    g = sample_graph(P, 21)
    h1 = E.configuration_histogram(g, symmetric=True)
    h2 = E.configuration_histogram(g, symmetric=False)
    assert np.array_equal(h1, h2)
    assert h1.sum() == 2 ** 14


def test_shard_independence_bit_exact():
    P = ModelParams(16, 0.25, 0.6)
    g = sample_graph(P, 8)
    ref = E.configuration_histogram(g)
    ref_z = E.partition_exact(g, P, hist=ref)
    for shards, workers in [(2, 1), (4, 2), (16, 3), (64, 4)]:
        h = E.configuration_histogram(g, shards=shards, workers=workers)
        assert np.array_equal(h, ref)
        assert E.partition_exact(g, P, hist=h) == ref_z
    with pytest.raises(ValidationError):
        E.configuration_histogram(g, shards=3)


def test_gray_walk_visits_everything_and_matches_recompute():
    for n in range(1, 11):
        g = sample_graph(ModelParams(n, 0.45, 0.5), derive_seed(77, n))
        qs, states = E.gray_code_walk(g)
        assert len(set(states.tolist())) == 2 ** n
        assert np.array_equal(qs, E.full_quadratic_forms(g, states))
        # consecutive states differ in exactly one bit
        assert np.all(np.bitwise_count(states[1:] ^ states[:-1]) == 1)


def test_random_flips_at_n20():
    g = sample_graph(ModelParams(20, 0.4, 0.5), 5)
    flips = np.random.default_rng(3).integers(0, 20, size=100_000)
    inc, full = E.random_flip_walk(g, flips, start=12345)
    assert np.array_equal(inc, full)
    with pytest.raises(ValidationError):
        E.random_flip_walk(g, [20])


def test_enumeration_ceiling():
    g = sample_graph(ModelParams(27, 0.5, 0.5), 0)
    with pytest.raises(CeilingExceeded, match="26"):
        E.partition_exact(g, ModelParams(27, 0.5, 0.5))


def test_dimension_mismatch():
    with pytest.raises(ValidationError):
        E.partition_exact(EXPLICIT, ModelParams(4, 0.5, 0.5))


# -- generalized partition function ------------------------------------------------

def test_generalized_unit_is_bit_identical():
    P = ModelParams(12, 0.3, 0.7)
    g = sample_graph(P, 9)
    assert E.generalized_partition(g, P, lambda x: 1.0) == E.partition_exact(g, P)
    tab = E.TabulatedFunction((-5.0, 5.0), (1.0, 1.0))
    assert E.generalized_partition(g, P, tab) == E.partition_exact(g, P)


def test_generalized_zero_and_square():
    P = ModelParams(3, 0.5, 0.7)
    assert E.generalized_partition(EXPLICIT, P, lambda x: 0.0) == -math.inf
    sq = lambda x: x * x
    assert E.generalized_partition(EXPLICIT, P, sq) == pytest.approx(direct_log_z(EXPLICIT, P, sq), rel=1e-14)
    with pytest.raises(ValidationError):
        E.generalized_partition(EXPLICIT, P, lambda x: x)
    with pytest.raises(ValidationError):
        E.TabulatedFunction((0.0, 1.0), (1.0, -1.0))


def test_tabulated_interpolation():
    f = E.TabulatedFunction((-1.0, 0.0, 1.0), (2.0, 0.0, 4.0))
    assert f(0.5) == 2.0 and f(-3.0) == 2.0 and f(9.0) == 4.0
    P = ModelParams(4, 0.5, 0.5)
    g = sample_graph(P, 1)
    assert E.generalized_partition(g, P, f) == pytest.approx(direct_log_z(g, P, f), rel=1e-13)


# -- modified partition functions ----------------------------------------------------

def test_tilde_and_hat_identities():
    P = ModelParams(12, 0.3, 0.6)
    g = sample_graph(P, 2)
    lz = E.partition_exact(g, P)
    lt = E.tilde_partition(g, P)
    assert abs(lt + math.log(math.cosh(P.gamma)) * g.total_edges - lz) < 1e-12
    c = M.asymptotic_constants(P)
    xi = g.diag_edges / math.sqrt(12 * 0.3 * 0.7)
    eta = g.total_edges / (12 * math.sqrt(0.3 * 0.7))
    assert E.hat_partition(g, P) == pytest.approx(lz - c.alpha_n * xi - c.beta_n * eta, rel=1e-14)
    with pytest.raises(ValidationError):
        E.hat_partition(g, ModelParams(12, 1.0, 0.6))


def test_empty_graph():
    P = ModelParams(6, 0.3, 0.9)
    g = GraphSample.from_dense(np.zeros((6, 6)), 0.3)
    assert E.partition_exact(g, P) == pytest.approx(6 * math.log(2), rel=1e-15)
    assert E.tilde_partition(g, P) == E.partition_exact(g, P)


def test_tilde_reduces_sample_variance():
    P = ModelParams(20, 0.3, 0.5)
    lez = M.expected_partition(P).log_value
    letz = M.expected_tilde_partition(P).log_value
    z, zt = [], []
    for i in range(100):
        g = sample_graph(P, derive_seed(40, i))
        lz = E.partition_exact(g, P)
        z.append(math.exp(lz - lez))
        zt.append(math.exp(E.tilde_partition(g, P, lz) - letz))
    assert np.var(zt, ddof=1) < np.var(z, ddof=1)


# -- W and X ---------------------------------------------------------------------

def _direct_w(graph, params):
    n = params.n_sites
    A = graph.dense().astype(float)
    total = 0.0
    for s in itertools.product([-1, 1], repeat=n):
        s = np.array(s, dtype=float)
        k = int(s.sum())
        eb = M.expected_boltzmann(params, k).value
        total += eb * (params.gamma * (s @ A @ s) - params.beta * k * k / (2 * n))
    return total


def test_w_statistic_matches_definition():
    P = ModelParams(3, 0.5, 0.5)
    assert E.w_statistic(EXPLICIT, P) == pytest.approx(_direct_w(EXPLICIT, P), rel=1e-12)
    for n in (1, 2, 6):
        Q = ModelParams(n, 0.3, 0.8)
        g = sample_graph(Q, 6 + n)
        assert E.w_statistic(g, Q) == pytest.approx(_direct_w(g, Q), rel=1e-11, abs=1e-11)


def test_w_and_residual_vanish_at_p1():
    P = ModelParams(7, 1.0, 0.5)
    g = sample_graph(P, 0)
    assert E.w_statistic(g, P) == 0.0
    assert abs(E.x_residual_sum(g, P)) < 1e-12 * M.expected_partition(P).value


def test_mean_w_and_residual_zero():
    P = ModelParams(12, 0.4, 0.5)
    ez = M.expected_partition(P).value
    ws, xs = [], []
    for i in range(10000):
        g = sample_graph(P, derive_seed(17, i))
        ws.append(E.w_statistic(g, P) / ez)
        xs.append(E.x_residual_sum(g, P) / ez)
    for v in (np.array(ws), np.array(xs)):
        assert abs(v.mean()) < 4 * v.std(ddof=1) / math.sqrt(v.size)
    # the residual is what is left of Z/EZ - 1 after the linear part W
    var_x = M.exact_variance_x_residual(P)
    assert np.var(xs, ddof=1) == pytest.approx(var_x, rel=0.1)


def test_residual_variance_small_and_decreasing():
    beta, p = 0.5, 0.5
    vals = []
    for n in (12, 16):
        P = ModelParams(n, p, beta)
        ez = M.expected_partition(P).value
        xs = [E.x_residual_sum(sample_graph(P, derive_seed(n, i)), P) / ez for i in range(400)]
        vals.append(np.var(xs, ddof=1) * p * n / (1 - p))
    assert vals[1] < vals[0] < 0.25 * beta ** 2 / 4


def test_mean_z_over_ez_is_one():
    P = ModelParams(10, 0.4, 0.5)
    lez = M.expected_partition(P).log_value
    m = 3000
    r = [math.exp(E.partition_exact(sample_graph(P, derive_seed(99, i)), P) - lez) for i in range(m)]
    assert abs(np.mean(r) - 1) < 4 * math.sqrt(M.exact_variance_partition(P) / m)


def test_log_z_convex_in_beta():
    g = sample_graph(ModelParams(12, 0.3, 0.5), 13)
    hist = E.configuration_histogram(g)
    betas = np.linspace(0.05, 2.0, 40)
    lz = np.array([E.partition_exact(g, ModelParams(12, 0.3, b), hist=hist) for b in betas])
    assert np.all(np.diff(lz, 2) >= -1e-12)


def test_vertex_relabeling_invariance():
    P = ModelParams(11, 0.4, 0.7)
    g = sample_graph(P, 31)
    perm = np.random.default_rng(0).permutation(11)
    h = g.permuted(perm)
    assert E.partition_exact(h, P) == E.partition_exact(g, P)
    assert E.tilde_partition(h, P) == E.tilde_partition(g, P)
    assert E.hat_partition(h, P) == E.hat_partition(g, P)
    assert E.w_statistic(h, P) == E.w_statistic(g, P)


def test_enumeration_result_roundtrip():
    P = ModelParams(8, 0.3, 0.5)
    r = E.enumerate_graph(sample_graph(P, 1), P)
    assert E.EnumerationResult.from_dict(r.to_dict()) == r
    assert r.n_configs == 256
    assert r.free_energy_per_site == -r.log_z / (0.5 * 8)
    assert E.enumerate_graph(sample_graph(ModelParams(4, 1.0, 0.5), 1), ModelParams(4, 1.0, 0.5)).log_z_hat is None
    with pytest.raises(ValidationError):
        E.free_energy_per_site(math.inf, P)
