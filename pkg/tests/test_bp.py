import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plantedcut.bp import (
    BPParams,
    BPRunner,
    bp_update_coloring,
    coloring_pairs,
    coloring_spectrum,
    esbm_spectrum,
    full_to_pairs,
    jacobian_coloring,
    jacobian_esbm,
    kappa_plus,
    ks_threshold_eq,
    ks_threshold_sbm,
    match_spectra,
    numeric_spectrum,
    pairs_to_full,
    stability_experiment,
    threshold_report,
    vertex_update,
)
from plantedcut.errors import ConfigError
from plantedcut.graphs import sample_esbm


def fd_jacobian(params: BPParams, h: float = 1e-6) -> np.ndarray:
    k, d = params.k, params.d
    fp = np.broadcast_to(params.prior(), (d, k, k)).copy()
    y = np.zeros((k * k, k * k))
    for i in range(k * k):
        r, s = divmod(i, k)
        x1, x2 = fp.copy(), fp.copy()
        x1[0, r, s] += h
        x2[0, r, s] -= h
        y[i] = (vertex_update(x1, params)[1] - vertex_update(x2, params)[1]).ravel() / (2 * h)
    return y


def test_params():
    p = BPParams(4, 0, 11)
    assert p.d == 33 and p.lam == -1 / 3
    assert abs(p.prior().sum() - 1) < 1e-15
    with pytest.raises(ConfigError):
        BPParams(1, 1, 1)


def test_prior_is_fixed_point():
    p = BPParams(3, 1, 2)
    lg = sample_esbm(60, 3, p.d, Fraction(p.a - p.b, p.d), seed=0)
    run = BPRunner(lg.graph, p)
    fp = run.fixed_point()
    np.testing.assert_allclose(run.sweep(fp), fp, atol=1e-14)


def test_vertex_update_shape_check():
    with pytest.raises(ConfigError):
        vertex_update(np.zeros((2, 2, 2)), BPParams(2, 1, 2))


@pytest.mark.parametrize("k,a,b", [(4, 1, 2), (5, 3, 1), (4, 0, 3), (6, 2, 2), (3, 1, 1), (2, 1, 5)])
def test_jacobian_matches_finite_difference(k, a, b):
    p = BPParams(k, a, b)
    jb = jacobian_esbm(k, a, b)
    sup = p.weights().ravel() > 0
    fd = fd_jacobian(p)
    rows = np.flatnonzero(sup)
    np.testing.assert_allclose(fd[np.ix_(rows, sup)], jb.Y[np.ix_(rows, sup)], atol=1e-7)


@pytest.mark.parametrize("k,a,b", [(4, 1, 2), (5, 3, 1), (6, 0, 4), (4, 5, 1)])
def test_jacobian_spectrum_closed_form(k, a, b):
    jb = jacobian_esbm(k, a, b)
    d = a + b * (k - 1)
    assert match_spectra(numeric_spectrum(jb.Y), esbm_spectrum(k, a, b, d)) < 1e-10
    kp = kappa_plus(a, b, d)
    small = np.sort_complex(np.linalg.eigvals(jb.m))
    expected = np.sort_complex(np.array([-1 / (d - 1), kp.kappa_plus, kp.kappa_minus]))
    assert match_spectra(small, expected) < 1e-10


@pytest.mark.parametrize("k,c", [(4, 3), (5, 2), (6, 5)])
def test_coloring_jacobian_spectrum(k, c):
    jb = jacobian_coloring(k, c)
    assert match_spectra(numeric_spectrum(jb.Y), coloring_spectrum(k, c, c * (k - 1))) < 1e-10


def test_pair_conversions():
    k = 4
    m = np.arange(k * (k - 1), dtype=float)
    full = pairs_to_full(m, k)
    assert np.all(np.diag(full) == 0)
    np.testing.assert_array_equal(full_to_pairs(full), m)
    assert len(coloring_pairs(k)) == 12


def test_coloring_update_matches_full_form():
    k, c = 3, 2
    p = BPParams(k, 0, c)
    lg = sample_esbm(30, k, p.d, Fraction(-c, p.d), seed=1)
    fp = BPRunner(lg.graph, p).fixed_point()
    rng = np.random.default_rng(0)
    msgs = fp * (1 + 0.01 * rng.standard_normal(fp.shape))
    msgs /= msgs.sum(axis=(2, 3), keepdims=True)
    np.testing.assert_allclose(bp_update_coloring(full_to_pairs(msgs), lg.graph, c),
                               full_to_pairs(bp_update_coloring(msgs, lg.graph, c)), atol=1e-14)


def test_thresholds():
    assert abs(ks_threshold_eq(1 / 3) - 18 * (1 + math.sqrt(8 / 9))) < 1e-12
    # c* = 6 + sqrt(32) for 4-colorings: d = 3c, eta = -1/3
    assert abs(ks_threshold_eq(-1 / 3) / 3 - (6 + math.sqrt(32))) < 1e-12
    assert ks_threshold_sbm(0.5) == 5
    r = threshold_report(0, 12, 4)
    assert r.unstable and r.discriminant > 0
    assert not threshold_report(0, 11, 4).unstable


@settings(max_examples=100, deadline=None)
@given(d=st.integers(3, 60), eta=st.floats(-1, 1).filter(lambda x: abs(x) > 1e-3))
def test_discriminant_matches_threshold(d, eta):
    disc = (d * eta) ** 2 - 4 * (d - 1)
    gap = d - ks_threshold_eq(eta)
    if abs(disc) > 1e-9 and abs(gap) > 1e-9:
        assert np.sign(disc) == np.sign(gap)


def test_stability_argument_checks():
    p = BPParams(2, 1, 3)
    lg = sample_esbm(40, 2, 4, Fraction(-1, 2), seed=0)
    with pytest.raises(ConfigError):
        stability_experiment(p, lg.graph, eps=1e-3)
    with pytest.raises(ConfigError):
        stability_experiment(p, lg.graph, T=5)


def test_stability_small_run():
    # far above threshold: 2 colors, d=12, a=0 gives d eta = -12, disc > 0
    p = BPParams(2, 0, 12)
    lg = sample_esbm(400, 2, 12, Fraction(-1), seed=0)
    r = stability_experiment(p, lg.graph, T=20, seed=1)
    # growth saturates nonlinearly within the run, so only the sign is checked
    assert r.unstable
    p2 = BPParams(2, 2, 4)
    lg2 = sample_esbm(400, 2, 6, Fraction(-1, 3), seed=0)
    r2 = stability_experiment(p2, lg2.graph, T=20, seed=1)
    assert not r2.unstable
