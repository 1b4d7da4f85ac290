"""Quasi-eigenvectors, Green-weighted averages and quantum variances.

For an eigenpair ``(lambda_j, psi_j)`` of ``H = A + W`` and ``gamma_j = lambda_j + i eta_0``
the edge functions

    f_j(x_0, x_1)  = psi_j(x_1) / zeta_{x_0}(x_1) - psi_j(x_0)
    f*_j(x_0, x_1) = psi_j(x_0) / zeta_{x_1}(x_0) - psi_j(x_1)

satisfy ``B(zeta f_j) = f_j - i eta_0 tau_+ psi_j`` and the adjoint relation
``B*((zeta o iota) f*_j) = f*_j - i eta_0 tau_- psi_j`` exactly, where
``tau_+ psi(x_0, x_1) = psi(x_1)`` and ``tau_- psi(x_0, x_1) = psi(x_0)``.  ``g_j, g*_j``
are the same with ``zeta`` replaced by its conjugate.
"""
from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cover_green import ZetaField, continuation_solve, regular_zeta, solve_zeta, tree_green_paths
from .ensembles import as_potential
from .graph import Graph, nb_adjoint_apply, nb_apply, nb_paths
from .quantization import Observable, kb_diagonal, kg_diagonal
from .spectral import EigenSystem

THREADS_ENV = "QERGO_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1"))
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


class ZetaPolicy:
    """Solves a distinct field at every ``gamma_j = lambda_j + i eta_0``.

    The sorted ``lambda`` values are cut into fixed chunks; the first value of a
    chunk is reached by continuation in ``eta`` and the rest warm-start from
    their left neighbour.  Chunks are independent, so the fields (and every
    number derived from them) do not depend on the thread count.
    """

    def __init__(self, g: Graph, w=None, eta0: float = 0.1, tol: float = 1e-10, chunk: int = 64,
                 threads: int | None = None, max_iter: int | None = None):
        if not 0 < eta0:
            raise ValueError("eta0 must be positive")
        self.graph = g
        self.w = as_potential(w, g.n)
        self.eta0 = float(eta0)
        self.tol = float(tol)
        self.chunk = int(chunk)
        self.threads = resolve_threads(threads)
        self.max_iter = max_iter
        # free regular graphs: the constant tree value is already the fixed point
        self._regular_free = bool((g.degrees == g.degrees[0]).all() and not self.w.values.any())

    def meta(self) -> dict:
        return {"eta0": self.eta0, "tol": self.tol, "chunk": self.chunk, "mode": "exact-per-eigenvalue"}

    def _solve_chunk(self, lams: np.ndarray, fn, out: list, positions: np.ndarray) -> None:
        kw = {} if self.max_iter is None else {"max_iter": self.max_iter}
        zf = None
        for pos, lam in zip(positions, lams):
            if self._regular_free:
                gamma = float(lam) + 1j * self.eta0
                start = np.full(self.graph.oriented.count, regular_zeta(int(self.graph.degrees[0]) - 1, gamma))
                zf = solve_zeta(self.graph, self.w, gamma, self.tol, init=start, **kw)
            elif zf is None:
                zf = continuation_solve(self.graph, self.w, float(lam), self.eta0, self.tol, **kw)
            else:
                zf = solve_zeta(self.graph, self.w, float(lam) + 1j * self.eta0, self.tol, init=zf.zeta, **kw)
            out[pos] = fn(int(pos), zf)

    def map(self, lams: Sequence[float], fn: Callable[[int, ZetaField], object]) -> list:
        """``[fn(i, field at lams[i] + i eta_0) for i]``, streamed without keeping fields."""
        lams = np.asarray(lams, dtype=float)
        order = np.argsort(lams, kind="stable")
        out: list = [None] * len(lams)
        pieces = [order[i:i + self.chunk] for i in range(0, len(order), self.chunk)]
        if self.threads == 1 or len(pieces) <= 1:
            for p in pieces:
                self._solve_chunk(lams[p], fn, out, p)
        else:
            with ThreadPoolExecutor(self.threads) as ex:
                list(ex.map(lambda p: self._solve_chunk(lams[p], fn, out, p), pieces))
        return out

    def field(self, lam: float) -> ZetaField:
        return continuation_solve(self.graph, self.w, float(lam), self.eta0, self.tol)


@dataclass(frozen=True)
class NbQuasiEigenvectors:
    j: int
    lam: float
    gamma: complex
    psi: np.ndarray
    f: np.ndarray
    f_star: np.ndarray
    g: np.ndarray
    g_star: np.ndarray
    zeta: np.ndarray = field(repr=False)


def edge_functions(zf: ZetaField, psi: np.ndarray, conjugate: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """``(f, f*)`` built from ``psi`` (or ``(g, g*)`` with ``conjugate=True``)."""
    o = zf.graph.oriented
    z = np.conj(zf.zeta) if conjugate else zf.zeta
    f = psi[o.terminus] / z - psi[o.origin]
    f_star = psi[o.origin] / z[o.reverse] - psi[o.terminus]
    return f, f_star


def quasi_eigenvectors(zf: ZetaField, psi: np.ndarray, j: int = -1, lam: float | None = None) -> NbQuasiEigenvectors:
    psi = np.asarray(psi)
    f, fs = edge_functions(zf, psi)
    g, gs = edge_functions(zf, psi, conjugate=True)
    lam = zf.gamma.real if lam is None else lam
    return NbQuasiEigenvectors(j, lam, zf.gamma, psi, f, fs, g, gs, zf.zeta)


def build_quasi_eigenvectors(es: EigenSystem, policy: ZetaPolicy, interval) -> list[NbQuasiEigenvectors]:
    idx = es.in_interval(interval)
    return policy.map(es.values[idx], lambda i, zf: quasi_eigenvectors(zf, es.vectors[:, idx[i]], int(idx[i]),
                                                                      float(es.values[idx[i]])))


def quasi_eigen_residual(v: NbQuasiEigenvectors, g: Graph) -> tuple[float, float]:
    """Sup-norm residuals of both quasi-eigenvector equations."""
    o = g.oriented
    eta0 = v.gamma.imag
    lhs = nb_apply(g, v.zeta * v.f)
    r1 = np.abs(lhs - (v.f - 1j * eta0 * v.psi[o.terminus])).max()
    lhs2 = nb_adjoint_apply(g, v.zeta[o.reverse] * v.f_star)
    r2 = np.abs(lhs2 - (v.f_star - 1j * eta0 * v.psi[o.origin])).max()
    return float(r1), float(r2)


def reflect(obs: Observable) -> Observable:
    """``(iota K)(x_0..x_k) = K(x_k..x_0)``, the path reversal."""
    if obs.k == 0:
        return obs
    rule = obs.evaluate
    return Observable.from_rule(obs.graph, obs.k, lambda v: rule(v[:, ::-1]), obs.sup_bound, obs.name + "~")


def phi_weights(zf: ZetaField, paths) -> np.ndarray:
    """``Im G(x_0, x_k) / sum_v N_gamma(v)`` for each path."""
    return tree_green_paths(zf, paths).imag / zf.n_gamma.sum()


def _as_family(obs) -> list[Observable]:
    if isinstance(obs, Observable):
        return [obs]
    return list(obs)


def weighted_average(obs, zf: ZetaField) -> complex:
    """``<K>_gamma``: sum over the family's paths of ``K * Phi``."""
    total = 0j
    denom = zf.n_gamma.sum()
    for o in _as_family(obs):
        if o.k == 0 and o.values is not None:
            # real and imaginary parts summed like the denominator, so a constant gives exactly 1
            total += complex(np.sum(o.values.real * zf.n_gamma), np.sum(o.values.imag * zf.n_gamma)) / denom
            continue
        for verts, vals in o.blocks(block=1024):
            total += np.sum(vals * tree_green_paths(zf, verts).imag) / denom
    return complex(total)


def kg_diagonal_family(obs, vecs: np.ndarray) -> np.ndarray:
    return sum(kg_diagonal(o, vecs) for o in _as_family(obs))


@dataclass
class VarianceReport:
    interval: tuple[float, float]
    eta0: float
    indices: np.ndarray
    lambdas: np.ndarray
    terms: np.ndarray
    n: int
    centered: bool
    kind: str = "quantum"
    observable: str = ""
    policy: dict = field(default_factory=dict)
    multiplicities: np.ndarray | None = None
    averages: np.ndarray | None = None

    @property
    def aggregate(self) -> float:
        return float(self.terms.sum() / self.n)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["j", "lambda_j", "term", "centered_flag"])
            for j, lam, t in zip(self.indices, self.lambdas, self.terms):
                wr.writerow([int(j), repr(float(lam)), repr(float(t)), int(self.centered)])

    def summary(self) -> dict:
        return {"kind": self.kind, "interval": list(self.interval), "eta0": self.eta0, "n": self.n,
                "count": int(len(self.terms)), "aggregate": self.aggregate, "centered": self.centered,
                "observable": self.observable, "policy": self.policy}


def quantum_variance(es: EigenSystem, obs, policy: ZetaPolicy | None, interval, centered: bool = True,
                     name: str = "") -> VarianceReport:
    """``(1/N) sum_{lambda_j in I} |<psi_j, K_G psi_j> - c_j <K>_{gamma_j}|``.

    ``c_j = |psi_j|^2 = 1`` when centered and 0 otherwise.
    """
    idx = es.in_interval(interval)
    vecs = es.vectors[:, idx]
    diag = kg_diagonal_family(obs, vecs)
    avg = None
    if centered:
        if policy is None:
            raise ValueError("centering needs a zeta policy")
        avg = np.array(policy.map(es.values[idx], lambda i, zf: weighted_average(obs, zf)), dtype=complex)
        # the norm goes through the same contraction as the observable, so a constant cancels exactly
        norms = kg_diagonal(Observable.vertex(policy.graph, np.ones(es.n)), vecs)
        diag = diag - avg * norms
    return VarianceReport(tuple(interval), policy.eta0 if policy else float("nan"), idx, es.values[idx],
                          np.abs(diag), es.n, centered, "quantum", name,
                          policy.meta() if policy else {}, es.multiplicities()[idx], avg)


def nb_variance(es: EigenSystem, obs_gamma, policy: ZetaPolicy, interval, tilde: bool = False,
                name: str = "") -> VarianceReport:
    """``(1/N) sum_{lambda_j in I} |<f*_j, K_B^{gamma_j} f_j>|`` (``g, g*`` when ``tilde``).

    ``obs_gamma`` is an observable, a family, or a callable ``zf -> observable(s)``.
    """
    idx = es.in_interval(interval)

    def term(i, zf):
        psi = es.vectors[:, idx[i]]
        f, fs = edge_functions(zf, psi, conjugate=tilde)
        obs = obs_gamma(zf) if callable(obs_gamma) else obs_gamma
        val = sum(kb_diagonal(o, fs[:, None], f[:, None])[0] for o in _as_family(obs))
        return abs(val)

    terms = np.array(policy.map(es.values[idx], term), dtype=float)
    return VarianceReport(tuple(interval), policy.eta0, idx, es.values[idx], terms, es.n, False,
                          "nb-tilde" if tilde else "nb", name, policy.meta(), es.multiplicities()[idx])


def indicator_observable(g: Graph, subset) -> Observable:
    a = np.zeros(g.n)
    a[np.asarray(subset, dtype=np.int64)] = 1.0
    return Observable.vertex(g, a, name="indicator")


def path_phi(zf: ZetaField, k: int) -> np.ndarray:
    return phi_weights(zf, nb_paths(zf.graph, k))
