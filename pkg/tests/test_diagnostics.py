import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from conftest import mixed_instance
from qergo.cover_green import regular_zeta, solve_zeta
from qergo.diagnostics import (ConstantChi, EmpiricalMeasure, GaussianChi, PopulationDynamics, empirical_measure,
                               empirical_vs_tree, green_diagonal_average, histogram_rows, kesten_mckay_cdf,
                               kesten_mckay_density, km_integral, ks_distance_km, phi_histogram, write_rows)
from qergo.ensembles import EnsembleConfig, random_regular, sample_potential
from qergo.errors import OracleBudgetExceeded
from qergo.spectral import eigensystem


def test_km_examples():
    assert kesten_mckay_density(2, 0.0) == pytest.approx(np.sqrt(2) / (3 * np.pi), abs=1e-12)
    assert kesten_mckay_density(2, 3.0) == 0
    with pytest.raises(ValueError):
        kesten_mckay_density(1, 0.0)


@given(st.integers(2, 6), st.floats(-6, 6))
def test_km_symmetry(q, lam):
    assert kesten_mckay_density(q, lam) == kesten_mckay_density(q, -lam)


@pytest.mark.parametrize("q", [2, 3, 5])
def test_km_normalization_and_cdf(q):
    edge = 2 * np.sqrt(q)
    total = integrate.quad(lambda t: kesten_mckay_density(q, t), -edge, edge, limit=200, epsabs=1e-12)[0]
    assert total == pytest.approx(1, abs=1e-8)
    cdf = kesten_mckay_cdf(q, [0.0, -10, 10, 1.0])
    assert cdf[0] == pytest.approx(0.5, abs=1e-8)
    assert cdf[1] == 0 and cdf[2] == pytest.approx(1, abs=1e-8)
    assert 0.5 < cdf[3] < 1


def test_km_is_the_tree_boundary_value():
    for lam in (-2.0, 0.3, 1.7):
        gamma = lam + 1e-9j
        z = regular_zeta(2, gamma)
        g_root = 1 / (3 * z - gamma)
        assert g_root.imag / np.pi == pytest.approx(kesten_mckay_density(2, lam), abs=1e-6)


def test_ks_distance_decreases():
    d = [ks_distance_km(eigensystem(random_regular(EnsembleConfig(n, seed=1))).values, 2) for n in (100, 1000)]
    assert d[1] < d[0] and d[1] < 0.02


def test_empirical_measure():
    with pytest.raises(ValueError):
        EmpiricalMeasure(np.zeros(2), np.array([0.2, 0.2]))
    g, w = mixed_instance(30, 2)
    m = empirical_measure(eigensystem(g, w))
    assert m.integrate(ConstantChi()) == 1.0
    assert m.integrate(lambda t: t) == pytest.approx(np.mean(w), abs=1e-12)


def test_constant_chi_is_exact():
    g, w = mixed_instance(60, 3)
    es = eigensystem(g, w)
    finite, tree = empirical_vs_tree(es, ConstantChi(), PopulationDynamics(EnsembleConfig(60, epsilon=1.0)))
    assert finite == 1.0 and tree.value == 1.0 and tree.stderr == 0


def test_km_chi_integral():
    chi = GaussianChi(0.0, 0.3)
    exact = km_integral(2, chi)
    ref = integrate.quad(lambda t: chi(t) * kesten_mckay_density(2, t), -3, 3, points=[0], limit=200)[0]
    assert exact == pytest.approx(ref, abs=1e-10)
    errs = []
    for n in (200, 2000):
        es = eigensystem(random_regular(EnsembleConfig(n, seed=5)))
        finite, tree = empirical_vs_tree(es, chi, q=2)
        assert tree.value == exact and tree.stderr == 0
        errs.append(abs(finite - exact))
    assert errs[1] < errs[0]


def test_popdyn_without_disorder_is_the_closed_form():
    pd = PopulationDynamics(EnsembleConfig(100, epsilon=0.0, seed=1), pool=2000, eta=1e-3)
    dens, se, sweeps, ok = pd.density(0.5)
    z = regular_zeta(2, 0.5 + 1e-3j)
    assert ok and se == pytest.approx(0, abs=1e-15)
    assert dens == pytest.approx((1 / (3 * z - (0.5 + 1e-3j))).imag / np.pi, rel=1e-12)
    assert dens == pytest.approx(kesten_mckay_density(2, 0.5), abs=1e-3)


def test_popdyn_stderr_scales():
    pd = PopulationDynamics(EnsembleConfig(100, epsilon=0.5, seed=2), pool=20000, eta=0.05, window=5)
    _, se1, _, _ = pd.density(0.4, samples=20000)
    _, se2, _, _ = pd.density(0.4, samples=40000)
    assert 0.6 <= se2 / se1 <= 0.85


def test_popdyn_budget():
    pd = PopulationDynamics(EnsembleConfig(100, epsilon=0.5), pool=100000, budget=1e6)
    with pytest.raises(OracleBudgetExceeded):
        pd.integrate(GaussianChi(0.0))


def test_popdyn_thread_independent():
    cfg = EnsembleConfig(100, epsilon=0.5, seed=3)
    a = PopulationDynamics(cfg, pool=3000, eta=0.05, window=5, threads=1).integrate(GaussianChi(0.2), nodes=4)
    b = PopulationDynamics(cfg, pool=3000, eta=0.05, window=5, threads=3).integrate(GaussianChi(0.2), nodes=4)
    assert a.value == b.value and a.stderr == b.stderr


def test_popdyn_matches_finite_anderson():
    cfg = EnsembleConfig(1000, epsilon=0.5, seed=4)
    g = random_regular(cfg)
    es = eigensystem(g, sample_potential(g, cfg).values)
    chi = GaussianChi(0.5)
    finite, tree = empirical_vs_tree(es, chi, PopulationDynamics(cfg, pool=20000, eta=0.01, window=10))
    assert tree.converged
    assert abs(finite - tree.value) <= 0.02


def test_green_average_examples(k4):
    assert green_diagonal_average(solve_zeta(k4, None, 1j, 1e-14)) == pytest.approx(0.4, abs=1e-12)
    g, w = mixed_instance(40, 1)
    assert green_diagonal_average(solve_zeta(g, w, -1.3 + 0.05j, 1e-12)) > 0


def test_green_average_regular_trend():
    eta, grid = 0.1, np.linspace(-2.5, 2.5, 11)
    tree = np.array([(1 / (3 * regular_zeta(2, lam + 1j * eta) - (lam + 1j * eta))).imag for lam in grid])
    gaps = []
    for n in (100, 400, 1600):
        g = random_regular(EnsembleConfig(n, seed=7))
        es = eigensystem(g)
        cover = np.array([green_diagonal_average(solve_zeta(g, None, lam + 1j * eta, 1e-12)) for lam in grid])
        np.testing.assert_allclose(cover, tree, atol=1e-10)
        trace = np.array([np.mean(eta / ((es.values - lam) ** 2 + eta ** 2)) for lam in grid])
        gaps.append(np.abs(trace - cover).max())
    assert gaps[0] > gaps[1] > gaps[2]


def test_phi_histogram_examples(k4):
    zf = solve_zeta(k4, None, 1j, 1e-14)
    assert phi_histogram(zf, 1, np.abs)[0] == pytest.approx(0, abs=1e-13)
    g, w = mixed_instance(40, 2)
    val, raw = phi_histogram(solve_zeta(g, w, 0.1 + 0.2j, 1e-12), 0, lambda x: x)
    assert val == pytest.approx(1, abs=1e-13) and len(raw) == g.n
    g = random_regular(EnsembleConfig(50, seed=1))
    val, raw = phi_histogram(solve_zeta(g, None, 0.7 + 0.1j, 1e-13), 0, lambda x: x ** 3 + 2)
    assert val == pytest.approx(3, abs=1e-12)


def test_histogram_and_csv(tmp_path):
    rows = histogram_rows(np.array([0.0, 0.1, 0.9, 1.0]), bins=2)
    assert [r[1] for r in rows] == [0.5, 0.5]
    write_rows(tmp_path / "h.csv", ["value", "weight"], rows)
    text = (tmp_path / "h.csv").read_text().splitlines()
    assert text[0] == "value,weight" and text[1] == "0.25,0.5"
