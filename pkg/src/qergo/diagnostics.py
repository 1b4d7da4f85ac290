"""Local-convergence diagnostics: finite spectra against tree expectations.

The tree side of ``(1/N) sum_j chi(lambda_j) -> E <delta_o, chi(H) delta_o>`` is
estimated by population dynamics on the cavity recursion

    zeta = 1 / (gamma - W - zeta_1 - ... - zeta_q),

followed by ``G(o, o) = 1 / (W + zeta_1 + ... + zeta_{q+1} - gamma)`` at the
root.  ``E Im G / pi`` is the spectral density smoothed at scale ``eta``; it is
integrated against a Gaussian ``chi`` by Gauss-Hermite quadrature.
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .cover_green import ZetaField, regular_zeta
from .ensembles import STREAM_POPDYN, EnsembleConfig, rng_stream, sample_nu
from .ergodicity import phi_weights, resolve_threads
from .errors import OracleBudgetExceeded
from .graph import nb_paths
from .spectral import EigenSystem


@dataclass(frozen=True)
class EmpiricalMeasure:
    points: np.ndarray
    weights: np.ndarray
    eta: float = 0.0

    def __post_init__(self):
        if (self.weights < 0).any() or abs(self.weights.sum() - 1) > 1e-12:
            raise ValueError("weights must be non-negative and sum to 1")

    def integrate(self, chi) -> float:
        return float(np.sum(self.weights * chi(self.points)))


def empirical_measure(es: EigenSystem) -> EmpiricalMeasure:
    return EmpiricalMeasure(es.values.copy(), np.full(es.n, 1.0 / es.n))


@dataclass(frozen=True)
class GaussianChi:
    """``exp(-(t - center)^2 / (2 width^2))``, peak value 1."""

    center: float
    width: float = 0.3

    def __call__(self, t):
        return np.exp(-((np.asarray(t) - self.center) ** 2) / (2 * self.width ** 2))


@dataclass(frozen=True)
class ConstantChi:
    value: float = 1.0

    def __call__(self, t):
        return np.full(np.shape(t), self.value, dtype=float)


def kesten_mckay_density(q: int, lam) -> np.ndarray | float:
    """Spectral density of the ``(q+1)``-regular tree at ``lam``."""
    if q < 2:
        raise ValueError("q must be at least 2")
    lam = np.asarray(lam, dtype=float)
    inside = lam ** 2 < 4 * q
    with np.errstate(invalid="ignore"):
        val = (q + 1) / (2 * np.pi) * np.sqrt(np.where(inside, 4 * q - lam ** 2, 0.0)) / ((q + 1) ** 2 - lam ** 2)
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def kesten_mckay_cdf(q: int, lam) -> np.ndarray:
    """Cumulative distribution, accumulated piecewise over the sorted points."""
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    edge = 2 * np.sqrt(q)
    order = np.argsort(lam)
    pts = np.clip(lam[order], -edge, edge)
    out = np.empty(len(lam))
    acc, prev = 0.0, -edge
    for i, p in zip(order, pts):
        if p > prev:
            acc += integrate.quad(lambda t: kesten_mckay_density(q, t), prev, p, limit=200)[0]
            prev = p
        out[i] = acc
    return np.minimum(out, 1.0)


def ks_distance_km(values: np.ndarray, q: int) -> float:
    """Kolmogorov-Smirnov distance between the empirical law of ``values`` and Kesten-McKay."""
    x = np.sort(values)
    n = len(x)
    f = kesten_mckay_cdf(q, x)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.abs(upper - f).max(), np.abs(f - lower).max()))


@dataclass
class OracleEstimate:
    value: float
    stderr: float
    nodes: int
    samples: int
    sweeps: list = field(default_factory=list)
    converged: bool = True


class PopulationDynamics:
    """Distributional fixed point of the cavity recursion under i.i.d. disorder."""

    def __init__(self, cfg: EnsembleConfig, pool: int = 100_000, eta: float = 0.005, window: int = 20,
                 max_sweeps: int = 1000, budget: float = 5e10, seed: int | None = None, threads: int | None = None):
        self.cfg = cfg
        self.q = cfg.q_plus_1 - 1
        self.pool = int(pool)
        self.eta = float(eta)
        self.window = int(window)
        self.max_sweeps = int(max_sweeps)
        self.budget = float(budget)
        self.seed = cfg.seed if seed is None else seed
        self.threads = resolve_threads(threads)

    def _potential(self, rng, size) -> np.ndarray:
        if self.cfg.epsilon == 0:
            return np.zeros(size)
        return self.cfg.epsilon * sample_nu(rng, self.cfg, size)

    def density(self, lam: float, tag: int = 0, samples: int | None = None) -> tuple[float, float, int, bool]:
        """``(E Im G / pi, standard error, sweeps, converged)`` at ``lam + i eta``."""
        q, m = self.q, self.pool
        rng = rng_stream(self.seed, STREAM_POPDYN, tag)
        gamma = lam + 1j * self.eta
        pool = np.full(m, regular_zeta(q, gamma), dtype=complex)
        sweeps, converged, last = 0, False, None
        while sweeps < self.max_sweeps:
            means = []
            for _ in range(self.window):
                picks = rng.integers(0, m, size=(m, q))
                pool = 1.0 / (gamma - self._potential(rng, m) - pool[picks].sum(axis=1))
                means.append(pool.mean())
                sweeps += 1
            avg = np.mean(means)
            noise = 4 * np.std(pool) / np.sqrt(m)
            if last is not None and abs(avg - last) < max(1e-3 * abs(avg), noise):
                converged = True
                break
            last = avg
        ns = m if samples is None else int(samples)
        picks = rng.integers(0, m, size=(ns, q + 1))
        g_root = 1.0 / (self._potential(rng, ns) + pool[picks].sum(axis=1) - gamma)
        vals = g_root.imag / np.pi
        return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(ns)), sweeps, converged

    def integrate(self, chi: GaussianChi, nodes: int = 16, samples: int | None = None, tag: int = 0) -> OracleEstimate:
        """``E <delta_o, chi(H) delta_o>`` for a Gaussian ``chi``."""
        cost = float(nodes) * self.pool * (self.q + 1) * self.max_sweeps
        if cost > self.budget:
            raise OracleBudgetExceeded(f"estimated cost {cost:.2e} exceeds budget {self.budget:.2e}")
        x, w = np.polynomial.hermite.hermgauss(nodes)
        t = chi.center + np.sqrt(2) * chi.width * x
        weights = np.sqrt(2) * chi.width * w

        def run(i):
            return self.density(float(t[i]), tag=tag * 1000 + i, samples=samples)

        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as ex:
                res = list(ex.map(run, range(nodes)))
        else:
            res = [run(i) for i in range(nodes)]
        dens = np.array([r[0] for r in res])
        se = np.array([r[1] for r in res])
        return OracleEstimate(float(np.sum(weights * dens)), float(np.sqrt(np.sum((weights * se) ** 2))), nodes,
                              self.pool if samples is None else int(samples), [r[2] for r in res],
                              all(r[3] for r in res))


def km_integral(q: int, chi) -> float:
    edge = 2 * np.sqrt(q)
    return float(integrate.quad(lambda t: chi(t) * kesten_mckay_density(q, t), -edge, edge, limit=200)[0])


def empirical_vs_tree(es: EigenSystem, chi, oracle: PopulationDynamics | None = None, q: int | None = None,
                      tag: int = 0) -> tuple[float, OracleEstimate]:
    """``((1/N) sum_j chi(lambda_j), tree estimate)``.

    Without disorder the tree side is the Kesten-McKay integral (zero error);
    a constant ``chi`` gives its value on both sides.
    """
    finite = float(np.mean(chi(es.values)))
    if isinstance(chi, ConstantChi):
        return finite, OracleEstimate(chi.value, 0.0, 0, 0)
    if oracle is None or oracle.cfg.epsilon == 0:
        qq = q if q is not None else oracle.q
        return finite, OracleEstimate(km_integral(qq, chi), 0.0, 0, 0)
    return finite, oracle.integrate(chi, tag=tag)


def green_diagonal_average(zf: ZetaField) -> float:
    return float(zf.n_gamma.mean())


def phi_histogram(zf: ZetaField, k: int, F) -> tuple[float, np.ndarray]:
    """``(1/N) sum_x sum_{|path| = k from x} F(N Phi)`` and the raw ``N Phi`` values."""
    level = nb_paths(zf.graph, k)
    raw = zf.graph.n * phi_weights(zf, level)
    return float(np.sum(F(raw)) / zf.graph.n), raw


def histogram_rows(raw: np.ndarray, bins: int = 50) -> list[tuple[float, float]]:
    counts, edges = np.histogram(raw, bins=bins)
    mids = 0.5 * (edges[1:] + edges[:-1])
    total = counts.sum()
    return [(float(m), float(c / total)) for m, c in zip(mids, counts)]


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
