import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from conftest import mixed_instance
from qergo.cover_green import continuation_solve, mu_values, solve_zeta
from qergo.ergodicity import ZetaPolicy, build_quasi_eigenvectors
from qergo.graph import nb_paths
from qergo.invariance import (collapse_remainder, collapsed_main, eigen_remainder, gamma_inner, r_operator,
                              transfer_matrix, transfer_row_sums_expected, transfer_form, z_operator)
from qergo.quantization import Observable, kb_matrix_element
from qergo.spectral import eigensystem

RNR = [(2, 1, 0), (3, 2, 1), (3, 3, 0), (2, 2, 2), (1, 0, 0)]


def _random_obs(g, k, r):
    n = len(nb_paths(g, k))
    return Observable.dense(g, k, r.uniform(-1, 1, n) + 1j * r.uniform(-1, 1, n), None)


@pytest.fixture(scope="module")
def setup():
    g, w = mixed_instance(12, 1)
    return g, w, solve_zeta(g, w, 0.3 + 0.2j, 1e-14)


def test_k4_transfer_entries(k4):
    zf = solve_zeta(k4, None, 1j, 1e-14)
    S = transfer_matrix(zf, "S", 1).toarray()
    # xi = 0.25 / 0.5 on every edge and |Im zeta| = 0.5
    assert set(np.round(S[S != 0], 14)) == {0.25}
    np.testing.assert_allclose(S.sum(axis=1), 0.5, atol=1e-14)
    np.testing.assert_allclose(transfer_row_sums_expected(zf, "S", 1), 0.5, atol=1e-14)


@given(st.integers(1, 6), st.floats(-3, 3), st.sampled_from([1.0, 0.1]))
def test_row_sums(seed, lam, eta):
    g, w = mixed_instance(24, seed)
    zf = continuation_solve(g, w, lam, eta, 1e-13)
    for k in (1, 2):
        for which in ("S", "S_adjoint"):
            sums = np.asarray(transfer_matrix(zf, which, k).sum(axis=1)).ravel()
            np.testing.assert_allclose(sums, transfer_row_sums_expected(zf, which, k), atol=1e-12)
            assert (sums <= 1).all()


def test_su_has_the_same_moduli(setup):
    _, _, zf = setup
    S, Su = transfer_matrix(zf, "S", 2), transfer_matrix(zf, "Su", 2)
    assert (S.indices == Su.indices).all()
    np.testing.assert_allclose(np.abs(Su.data), S.data, rtol=1e-14)


def test_adjoint_in_mu(setup, rng):
    g, _, zf = setup
    for k in (1, 2):
        lv = nb_paths(g, k)
        mu = mu_values(zf, lv)
        f = rng.normal(size=len(lv)) + 1j * rng.normal(size=len(lv))
        h = rng.normal(size=len(lv)) + 1j * rng.normal(size=len(lv))
        lhs = np.vdot(h * mu, transfer_matrix(zf, "S", k) @ f)
        rhs = np.vdot(mu * (transfer_matrix(zf, "S_adjoint", k) @ h), f)
        assert lhs == pytest.approx(rhs, rel=1e-12)


def test_r_trivial_and_z_inverse(setup, rng):
    g, _, zf = setup
    K = _random_obs(g, 2, rng)
    assert (r_operator(zf, K, 0, 0).values == K.values).all()
    back = z_operator(zf, z_operator(zf, K), inverse=True)
    np.testing.assert_allclose(back.values, K.values, atol=1e-13)
    with pytest.raises(ValueError):
        r_operator(zf, K, 1, 2)


@pytest.mark.parametrize("k", [1, 2])
def test_r_and_inner_product_match_loops(setup, rng, k):
    g, _, zf = setup
    K = _random_obs(g, k, rng)
    table = {tuple(p): v for p, v in zip(nb_paths(g, k).vertices.tolist(), K.values)}
    for n, r in [(1, 0), (1, 1), (2, 1), (3, 0)]:
        ours = r_operator(zf, K, n, r)
        ref = oracles.r_operator(zf, lambda p: table[tuple(p)], n, r, k)
        keys = [tuple(p) for p in nb_paths(g, n + k).vertices.tolist()]
        np.testing.assert_allclose(ours.values, [ref[p] for p in keys], atol=1e-13)
        other = r_operator(zf, K, n, 0)
        ref0 = oracles.r_operator(zf, lambda p: table[tuple(p)], n, 0, k)
        assert gamma_inner(zf, ours, other) == pytest.approx(oracles.gamma_inner(zf, ref, ref0), abs=1e-13)


@pytest.mark.parametrize("k", [1, 2])
def test_collapsed_inner_product(setup, rng, k):
    g, _, zf = setup
    K = _random_obs(g, k, rng)
    ZK = z_operator(zf, K)
    for n, r, rp in RNR:
        lhs = gamma_inner(zf, r_operator(zf, K, n, r), r_operator(zf, K, n, rp))
        rhs = collapsed_main(zf, K, n, r, rp) - collapse_remainder(zf, K, n, r, rp)
        assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))
        # with the Z-twisted kernel the main term is the transfer-operator form
        lhs = gamma_inner(zf, r_operator(zf, ZK, n, r), r_operator(zf, ZK, n, rp))
        rhs = transfer_form(zf, K, r, rp) - collapse_remainder(zf, ZK, n, r, rp)
        assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))


def test_remainder_vanishes_without_outer_sums(setup, rng):
    g, _, zf = setup
    K = _random_obs(g, 1, rng)
    # r = n empties the first outer sum and r' = 0 the second
    assert collapse_remainder(zf, K, 2, 2, 0) == 0
    assert collapse_remainder(zf, K, 2, 2, 1) != 0


def test_eigen_remainder_identity(rng):
    g, w = mixed_instance(12, 1)
    es = eigensystem(g, w)
    vs = build_quasi_eigenvectors(es, ZetaPolicy(g, w, 0.1, 1e-14), (-np.inf, np.inf))
    for v in vs[::4]:
        zf = solve_zeta(g, w, v.gamma, 1e-14)
        for k in (1, 2):
            K = _random_obs(g, k, rng)
            base = kb_matrix_element(K, v.f_star, v.f)
            for n, r in [(1, 0), (1, 1), (2, 1), (3, 2), (3, 0)]:
                lhs = kb_matrix_element(r_operator(zf, K, n, r), v.f_star, v.f)
                rhs = base - eigen_remainder(v, K, zf, n, r)
                assert abs(lhs - rhs) <= 1e-12 * max(1, abs(lhs))


def test_k4_transfer_form(k4, rng):
    zf = solve_zeta(k4, None, 1j, 1e-14)
    K = _random_obs(k4, 1, rng)
    ZK = z_operator(zf, K)
    table = {tuple(p): v for p, v in zip(nb_paths(k4, 1).vertices.tolist(), ZK.values)}
    for r, rp in [(2, 0), (1, 0), (2, 1), (1, 1)]:
        a = oracles.r_operator(zf, lambda p: table[tuple(p)], 2, r, 1)
        b = oracles.r_operator(zf, lambda p: table[tuple(p)], 2, rp, 1)
        lhs = oracles.gamma_inner(zf, a, b)
        assert lhs == pytest.approx(transfer_form(zf, K, r, rp) - collapse_remainder(zf, ZK, 2, r, rp), abs=1e-13)
