import io
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plantedcut.errors import ConfigError, IntegralityViolation, ParityViolation, ProbabilityOutOfRange
from plantedcut.graphs import (
    Graph,
    LabeledGraph,
    RegularGraph,
    apply_swap_noise,
    block_degree_matrix,
    centered_color_vectors,
    eta_from_counts,
    planted_cut_fraction,
    read_graph,
    sample_esbm,
    sample_sbm_er,
    sample_uniform_regular,
    spectral_planting_residual,
    write_graph,
)


def test_from_edges_rejects_bad_input():
    with pytest.raises(ConfigError):
        Graph.from_edges(3, [(0, 0)])
    with pytest.raises(ConfigError):
        Graph.from_edges(3, [(0, 1), (1, 0)])
    with pytest.raises(ConfigError):
        Graph.from_edges(3, [(0, 3)])


def test_cycle_basics():
    g = RegularGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert g.d == 2 and g.num_edges == 4
    assert g.has_edge(0, 3) and not g.has_edge(0, 2)
    np.testing.assert_array_equal(g.edges(), [[0, 1], [0, 3], [1, 2], [2, 3]])
    x = np.arange(4.0)
    np.testing.assert_allclose(g.matvec(x), g.to_dense(float) @ x)


@pytest.mark.parametrize("n,d", [(10, 3), (50, 4), (30, 7), (200, 12)])
def test_uniform_regular_is_simple_regular(n, d):
    g = sample_uniform_regular(n, d, seed=1)
    g.check_simple()
    assert np.all(g.degrees == d)


def test_uniform_regular_parity_and_range():
    with pytest.raises(ParityViolation):
        sample_uniform_regular(5, 3)
    with pytest.raises(ConfigError):
        sample_uniform_regular(4, 4)


def test_uniform_regular_deterministic():
    a = sample_uniform_regular(100, 5 + 1, seed=3)
    b = sample_uniform_regular(100, 6, seed=3)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_uniform_regular_small_case_covers_all_graphs():
    # K4 minus a perfect matching: the three 2-regular graphs on 4 vertices (4-cycles)
    seen = set()
    for s in range(200):
        seen.add(tuple(map(tuple, sample_uniform_regular(4, 2, seed=s).edges())))
    assert len(seen) == 3


def test_block_degree_matrix():
    dm = block_degree_matrix(3, 4, Fraction(-1, 2))
    assert dm.diag == 0 and dm.off == 2
    assert np.all(dm.entries.sum(axis=1) == 4)
    with pytest.raises(IntegralityViolation):
        block_degree_matrix(3, 4, Fraction(-1, 3))
    with pytest.raises(ConfigError):
        block_degree_matrix(3, 4, -0.75)


def test_eta_from_counts():
    assert eta_from_counts(2, 1, 7) == Fraction(-3, 4)
    assert eta_from_counts(4, 0, 11) == Fraction(-1, 3)


@pytest.mark.parametrize("n,k,d,eta", [(120, 3, 4, Fraction(-1, 2)), (200, 2, 8, Fraction(-3, 4)), (60, 2, 6, Fraction(-2, 3))])
def test_esbm_is_equitable(n, k, d, eta):
    lg = sample_esbm(n, k, d, eta, seed=2)
    dm = block_degree_matrix(k, d, eta)
    prof = lg.color_profile()
    np.testing.assert_array_equal(prof, dm.entries[lg.sigma])
    assert lg.is_balanced()
    assert spectral_planting_residual(lg) == 0


def test_esbm_color_vectors_are_eigenvectors():
    lg = sample_esbm(90, 3, 4, Fraction(-1, 2), seed=0)
    v = centered_color_vectors(lg)
    a = lg.graph.to_dense(float)
    np.testing.assert_allclose(a @ v, -2 * v, atol=1e-12)


def test_planted_cut_fraction():
    lg = sample_esbm(120, 3, 4, Fraction(-1, 2), seed=0)
    assert planted_cut_fraction(lg) == 1


def test_sbm_er_probability_check():
    with pytest.raises(ProbabilityOutOfRange):
        sample_sbm_er(10, 2, 8, 1.0)
    lg = sample_sbm_er(400, 2, 5, -0.5, seed=1)
    assert abs(lg.graph.degrees.mean() - 5) < 1


def test_swap_noise_preserves_degrees():
    g = sample_uniform_regular(100, 4, seed=0)
    h = apply_swap_noise(g, 0.3, seed=1)
    h.check_simple()
    assert np.all(h.degrees == 4)
    assert not np.array_equal(g.indices, h.indices)
    assert apply_swap_noise(g, 0.0) is g


def test_graph_round_trip():
    lg = sample_esbm(30, 3, 4, Fraction(-1, 2), seed=5)
    buf = io.StringIO()
    write_graph(lg, buf)
    buf.seek(0)
    back = read_graph(buf)
    assert isinstance(back, LabeledGraph) and isinstance(back.graph, RegularGraph)
    np.testing.assert_array_equal(back.graph.indices, lg.graph.indices)
    np.testing.assert_array_equal(back.sigma, lg.sigma)


@settings(max_examples=30, deadline=None)
@given(half=st.integers(3, 30), d=st.integers(1, 5), seed=st.integers(0, 2**32))
def test_regular_sampler_property(half, d, seed):
    n = 2 * half
    g = sample_uniform_regular(n, d, seed=seed)
    g.check_simple()
    assert np.all(g.degrees == d)
    assert 2 * g.num_edges == n * d


@settings(max_examples=20, deadline=None)
@given(m=st.integers(3, 12), seed=st.integers(0, 2**32), frac=st.floats(0, 0.5))
def test_swap_noise_property(m, seed, frac):
    g = sample_uniform_regular(2 * m, 3, seed=seed)
    h = apply_swap_noise(g, frac, seed=seed + 1)
    h.check_simple()
    assert np.all(h.degrees == 3)
