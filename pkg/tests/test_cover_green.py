import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import mixed_instance
from qergo.cover_green import (IDENTITY_NAMES, continuation_solve, identity_residuals, mu_k, regular_zeta,
                               solve_zeta, tree_green, tree_green_paths)
from qergo.ensembles import EnsembleConfig, random_regular
from qergo.errors import NoConvergence
from qergo.graph import nb_paths, regular_tree
from qergo.spectral import hamiltonian


@pytest.fixture(scope="module")
def k4_field(k4):
    return solve_zeta(k4, None, 1j, 1e-14)


def test_k4_closed_form(k4_field):
    # 2 z^2 - i z + 1 = 0, lower root -i/2; then 2m = i - 3z
    zf = k4_field
    np.testing.assert_allclose(zf.zeta, -0.5j, atol=1e-12)
    np.testing.assert_allclose(zf.m, 1.25j, atol=1e-12)
    np.testing.assert_allclose(zf.green_diag, 0.4j, atol=1e-12)
    np.testing.assert_allclose(zf.n_gamma, 0.4, atol=1e-12)


def test_k4_tree_green(k4_field):
    assert tree_green(k4_field, [0, 1]) == pytest.approx(0.2, abs=1e-12)
    assert tree_green(k4_field, [2]) == pytest.approx(0.4j, abs=1e-12)


def test_k4_im_zeta_sum_arithmetic(k4_field):
    # left: two successors with |Im zeta| = 1/2; right: 0.5 / 0.25 - 1
    res = identity_residuals(k4_field)
    assert res["im_zeta_sum"] < 1e-12
    assert set(res) == set(IDENTITY_NAMES)


def test_regular_zeta_root():
    for q, gamma in [(2, 1j), (3, 0.5 + 0.01j), (2, -2.9 + 0.2j)]:
        z = regular_zeta(q, gamma)
        assert z.imag < 0
        assert abs(q * z * z - gamma * z + 1) < 1e-12


def test_large_eta_bound(medium_instance):
    g, w = medium_instance
    zf = solve_zeta(g, w, 0.3 + 10j, 1e-12)
    assert np.abs(zf.zeta).max() <= 0.1
    assert zf.iterations < 50


def test_finite_tree_matches_resolvent():
    # on a tree the covering tree is the graph itself
    g = regular_tree(3, 4)
    w = np.random.default_rng(0).uniform(-1, 1, g.n)
    gamma = 0.3 + 0.2j
    zf = solve_zeta(g, w, gamma, 1e-13)
    G = np.linalg.inv(hamiltonian(g, w) - gamma * np.eye(g.n))
    for k in range(4):
        lv = nb_paths(g, k)
        ref = G[lv.vertices[:, 0], lv.vertices[:, -1]]
        np.testing.assert_allclose(tree_green_paths(zf, lv), ref, atol=1e-12)


def test_tree_green_matches_loop_oracle(small_instance):
    g, w = small_instance
    zf = solve_zeta(g, w, 0.7 + 0.05j, 1e-13)
    for p in oracles.nb_paths_dfs(g, 3)[:200]:
        assert tree_green(zf, p) == pytest.approx(oracles.green(zf, p), abs=1e-12)


def test_identities_random_instance():
    g, w = mixed_instance(100, 3)
    zf = solve_zeta(g, w, 0.7 + 0.05j, 1e-12)
    assert max(identity_residuals(zf).values()) <= 1e-9


def _half_plane(zf):
    assert (zf.zeta.imag < 0).all()
    assert (zf.m.imag > 0).all()
    assert (zf.n_gamma > 0).all()
    assert (zf.xi > 0).all()
    np.testing.assert_allclose(np.abs(zf.u), 1, atol=1e-14)
    assert (np.abs(zf.zeta) <= 1 / zf.eta + 1e-12).all()


@given(st.floats(-4, 4), st.sampled_from([1.0, 0.3, 0.05]), st.integers(1, 6))
def test_half_plane_and_identities(lam, eta, seed):
    g, w = mixed_instance(24, seed)
    zf = continuation_solve(g, w, lam, eta, 1e-12)
    _half_plane(zf)
    res = identity_residuals(zf)
    assert max(res.values()) <= 1e-9
    lv = nb_paths(g, 2)
    fwd = tree_green_paths(zf, lv)
    back = tree_green_paths(zf, lv.vertices[:, ::-1])
    assert np.abs(fwd - back).max() < 1e-11


def test_continuation_single_rung_equals_solve(medium_instance):
    g, w = medium_instance
    a = continuation_solve(g, w, 0.4, 1.0, 1e-12)
    b = solve_zeta(g, w, 0.4 + 1j, 1e-12)
    assert (a.zeta == b.zeta).all()


def test_continuation_regular_closed_form():
    g = random_regular(EnsembleConfig(1000, seed=2))
    zf = continuation_solve(g, None, 0.0, 1e-3, 1e-12)
    np.testing.assert_allclose(zf.zeta, regular_zeta(2, 1e-3j), atol=1e-8)


def test_continuation_anderson_invariants():
    g, w = mixed_instance(200, 9, epsilon=0.5, extra=0)
    zf = continuation_solve(g, w, 0.5, 0.01, 1e-10)
    assert zf.residual <= 1e-10
    _half_plane(zf)


def test_no_convergence_reported(medium_instance):
    g, w = medium_instance
    with pytest.raises(NoConvergence) as info:
        continuation_solve(g, w, 0.1, 0.01, 1e-12, max_iter=5)
    assert info.value.rung == 1.0
    with pytest.raises(ValueError):
        solve_zeta(g, w, 0.5 + 0j)


def test_k4_mu(k4_field):
    m1 = mu_k(k4_field, 1)
    m2 = mu_k(k4_field, 2)
    # |Im z| / |m z|^2 * |z|^2 * |Im z| / |z|^2 = 0.5 / (1.25 * 0.5)^2 * 0.5 = 0.64
    np.testing.assert_allclose(m1.values, 0.64, atol=1e-12)
    # one more factor |z|^2 = 0.25
    np.testing.assert_allclose(m2.values, 0.16, atol=1e-12)
    # two continuations at 0.16 taken from 0.64
    np.testing.assert_allclose(m2.compat_defect, 0.32, atol=1e-12)
    np.testing.assert_allclose(m2.inv_defect, 0.32, atol=1e-12)
    assert m1.compat_defect is None


def test_mu_matches_loop_oracle(small_instance):
    g, w = small_instance
    zf = solve_zeta(g, w, -0.4 + 0.2j, 1e-13)
    m = mu_k(zf, 3)
    for p, v in zip(m.paths.vertices.tolist()[:100], m.values[:100]):
        assert v == pytest.approx(oracles.mu(zf, p), rel=1e-11)


def test_mu_defects_linear_in_eta():
    g, w = mixed_instance(80, 5)
    top = {}
    for eta in (0.1, 0.05):
        zf = continuation_solve(g, w, 0.5, eta, 1e-13)
        m = mu_k(zf, 2)
        assert (m.values >= 0).all()
        assert (m.compat_defect >= 0).all() and (m.inv_defect >= 0).all()
        top[eta] = max(m.compat_defect.max(), m.inv_defect.max())
    assert 0.4 <= top[0.05] / top[0.1] <= 0.6


def test_regular_collapse():
    g = random_regular(EnsembleConfig(60, seed=4))
    zf = solve_zeta(g, np.full(g.n, 0.3), 0.5 + 0.2j, 1e-13)
    np.testing.assert_allclose(zf.zeta, regular_zeta(2, 0.5 + 0.2j, 0.3), atol=1e-10)
