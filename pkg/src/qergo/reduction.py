"""Operators that reduce the vertex-level variance to non-backtracking ones.

With ``N = N_gamma``, ``d`` the degree and ``P`` the simple random walk:

* ``P_gamma = (d/N) P (N/d)``; ``S_T = (1/T) sum_{s<T} (T-s) P_gamma^s``;
  ``S~_T = (1/T) sum_{1<=s<=T} P_gamma^s``, so that ``J = (I - P_gamma) S_T J + S~_T J``.
* ``L, L~ : C^V -> C^B`` turn ``2i <psi, [(I - P_gamma) d J]_G psi>`` into a
  difference of two edge matrix elements.
* ``T, O_1`` (and the real-eigenvector variants ``T~, O~_1``) on ``H_1`` and
  ``U_m, O_m, P_m`` on ``H_m`` (``m >= 2``) split ``<psi, K_G psi>`` into an
  edge matrix element plus lower-order vertex terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cover_green import ZetaField
from .ensembles import STREAM_OPERANDS, rng_stream
from .ergodicity import ZetaPolicy, edge_functions, weighted_average
from .errors import DegenerateDenominator
from .graph import nb_paths
from .quantization import Observable, kb_matrix_element, kg_matrix_element
from .spectral import EigenSystem

DEGENERACY_THRESHOLD = 1e-8


def relative_residual(lhs: complex, rhs: complex) -> float:
    return float(abs(lhs - rhs) / max(1.0, abs(lhs), abs(rhs)))


@dataclass
class ReductionOperators:
    zf: ZetaField
    T: int = 1
    strict: bool = False
    threshold: float = DEGENERACY_THRESHOLD
    flagged: np.ndarray = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        g = self.zf.graph
        self.g = g
        self.d = g.degrees.astype(float)
        self.N = self.zf.n_gamma
        self._adj = g.adjacency()
        o = g.oriented
        z = self.zf.zeta
        self.z01 = z
        self.z10 = z[o.reverse]
        self.flagged = np.zeros(o.count, dtype=bool)

    # vertex operators
    def P(self, f: np.ndarray) -> np.ndarray:
        return (self._adj @ f) / self.d

    def P_gamma(self, J: np.ndarray) -> np.ndarray:
        return self.d / self.N * self.P(self.N / self.d * J)

    def _powers(self, J: np.ndarray, count: int) -> list[np.ndarray]:
        out = [np.asarray(J, dtype=complex)]
        for _ in range(count):
            out.append(self.P_gamma(out[-1]))
        return out

    def S_T(self, J: np.ndarray) -> np.ndarray:
        pw = self._powers(J, self.T - 1)
        return sum((self.T - s) * pw[s] for s in range(self.T)) / self.T

    def S_T_tilde(self, J: np.ndarray) -> np.ndarray:
        pw = self._powers(J, self.T)
        return sum(pw[1:]) / self.T

    def Y(self, K: np.ndarray) -> np.ndarray:
        return self.d / self.N * np.mean(self.N * K) / np.mean(self.d)

    # vertex -> edge
    def _L(self, J: np.ndarray, tilde: bool) -> np.ndarray:
        o = self.g.oriented
        pref = np.abs(self.z01) ** 2 / np.abs(2 * self.zf.m[o.origin]) ** 2
        if tilde:
            cross = self.z01 * np.conj(self.z10)
        else:
            cross = np.conj(self.z01) * self.z10
        return pref * (J[o.origin] / self.N[o.terminus] - J[o.terminus] / (cross * self.N[o.origin]))

    def L(self, J: np.ndarray) -> np.ndarray:
        return self._L(np.asarray(J), False)

    def L_tilde(self, J: np.ndarray) -> np.ndarray:
        return self._L(np.asarray(J), True)

    # H_1 operators
    def degenerate_edges(self) -> np.ndarray:
        a = np.abs(self.z01 * self.z10) ** 2
        return np.abs(a - 1) < self.threshold

    def T_op(self, K: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``T K`` on edge values, and ``K`` with degenerate edges (and reversals) zeroed."""
        K = np.asarray(K, dtype=complex)
        bad = self.degenerate_edges()
        if bad.any():
            if self.strict:
                raise DegenerateDenominator(f"{int(bad.sum())} edges with |zeta zeta|^2 = 1")
            bad = bad | bad[self.g.oriented.reverse]
            K = np.where(bad, 0, K)
            self.flagged |= bad
        a = np.abs(self.z01 * self.z10) ** 2
        c = np.conj(self.z01) * self.z10
        with np.errstate(divide="ignore", invalid="ignore"):
            tk = a / (a - 1) * (-K / c + K[self.g.oriented.reverse])
        return np.where(bad, 0, tk), K

    def T_tilde(self, K: np.ndarray) -> np.ndarray:
        c = np.conj(self.z10) * self.z01
        return c / (c + 1) * np.asarray(K, dtype=complex)

    def O1_from_T(self, tk: np.ndarray) -> np.ndarray:
        o = self.g.oriented
        incoming = _cbincount(o.terminus, tk / self.z01, self.g.n)
        out_terms = tk / np.conj(self.z10)
        outgoing = np.add.reduceat(out_terms, self.g.indptr[:-1])
        return incoming + outgoing

    def O1(self, K: np.ndarray) -> np.ndarray:
        return self.O1_from_T(self.T_op(K)[0])

    def O1_tilde(self, K: np.ndarray) -> np.ndarray:
        return self.O1_from_T(self.T_tilde(K))

    # H_m operators, m >= 2
    def _check_m(self, K: Observable):
        if K.k < 2:
            raise ValueError("U_m, O_m, P_m need m >= 2")

    def U(self, K: Observable) -> Observable:
        self._check_m(K)
        lvl = nb_paths(self.g, K.k)
        rev = self.g.oriented.reverse
        z = self.zf.zeta
        vals = np.conj(z[rev[lvl.first_edge]]) * z[lvl.last_edge] * K.to_dense().values
        return Observable.dense(self.g, K.k, vals, None, "U" + K.name)

    def O(self, K: Observable) -> Observable:
        self._check_m(K)
        m = K.k
        hi = nb_paths(self.g, m)
        n_lo = len(nb_paths(self.g, m - 1))
        rev = self.g.oriented.reverse
        z = self.zf.zeta
        kv = K.to_dense().values
        a = np.conj(z[rev[hi.first_edge]]) * kv
        b = kv * z[hi.last_edge]
        vals = _cbincount(hi.tail, a, n_lo) + _cbincount(hi.parent, b, n_lo)
        return Observable.dense(self.g, m - 1, vals, None, "O" + K.name)

    def Pm(self, K: Observable) -> Observable:
        self._check_m(K)
        m = K.k
        hi = nb_paths(self.g, m)
        mid = nb_paths(self.g, m - 1)
        n_lo = len(nb_paths(self.g, m - 2))
        rev = self.g.oriented.reverse
        z = self.zf.zeta
        vals = np.conj(z[rev[hi.first_edge]]) * K.to_dense().values * z[hi.last_edge]
        target = mid.tail[hi.parent]
        return Observable.dense(self.g, m - 2, _cbincount(target, vals, n_lo), None, "P" + K.name)


def _cbincount(idx: np.ndarray, vals: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(idx, weights=vals.real, minlength=n) + 1j * np.bincount(idx, weights=vals.imag, minlength=n)


def _edge_pair(f1: np.ndarray, k_edge: np.ndarray, f2: np.ndarray) -> complex:
    return complex(np.sum(np.conj(f1) * k_edge * f2))


def _vertex_pair(psi: np.ndarray, a: np.ndarray) -> complex:
    return complex(np.sum(np.conj(psi) * a * psi))


def _edge_kg(g, psi, k_edge) -> complex:
    o = g.oriented
    return complex(np.sum(np.conj(psi[o.origin]) * k_edge * psi[o.terminus]))


def vertex_to_edge_residual(ops: ReductionOperators, psi: np.ndarray, J: np.ndarray) -> float:
    f, fs = edge_functions(ops.zf, psi)
    gg, gs = edge_functions(ops.zf, psi, conjugate=True)
    lhs = _edge_pair(fs, ops.L(J), f) - _edge_pair(gs, ops.L_tilde(J), gg)
    dj = ops.d * J
    rhs = 2j * _vertex_pair(psi, dj - ops.P_gamma(dj))
    return relative_residual(lhs, rhs)


def edge_split_residual(ops: ReductionOperators, psi: np.ndarray, K: np.ndarray, tilde: bool = False) -> float:
    f, fs = edge_functions(ops.zf, psi)
    if tilde:
        tk, k_eff = ops.T_tilde(K), np.asarray(K, dtype=complex)
    else:
        tk, k_eff = ops.T_op(K)
    lhs = _edge_pair(fs, tk, f)
    rhs = _edge_kg(ops.g, psi, k_eff) - _vertex_pair(psi, ops.O1_from_T(tk))
    return relative_residual(lhs, rhs)


def path_split_residual(ops: ReductionOperators, psi: np.ndarray, K: Observable) -> float:
    f, fs = edge_functions(ops.zf, psi)
    lhs = kb_matrix_element(ops.U(K), fs, f)
    rhs = (kg_matrix_element(K, psi, psi) - kg_matrix_element(ops.O(K), psi, psi)
           + kg_matrix_element(ops.Pm(K), psi, psi))
    return relative_residual(lhs, rhs)


def o1_average_residual(ops: ReductionOperators, K: np.ndarray, tilde: bool = False) -> float:
    g = ops.g
    if tilde:
        o1, k_eff = ops.O1_tilde(K), np.asarray(K, dtype=complex)
    else:
        tk, k_eff = ops.T_op(K)
        o1 = ops.O1_from_T(tk)
    lhs = weighted_average(Observable.dense(g, 0, o1, None), ops.zf)
    rhs = weighted_average(Observable.dense(g, 1, k_eff, None), ops.zf)
    return relative_residual(lhs, rhs)


def path_average_residual(ops: ReductionOperators, K: Observable) -> float:
    lhs = weighted_average(K, ops.zf)
    o, p = ops.O(K), ops.Pm(K)
    rhs = weighted_average(o, ops.zf) - weighted_average(p, ops.zf)
    return relative_residual(lhs, rhs)


def telescoping_residual(ops: ReductionOperators, J: np.ndarray) -> float:
    s = ops.S_T(J)
    rhs = s - ops.P_gamma(s) + ops.S_T_tilde(J)
    return float(np.abs(J - rhs).max() / max(1.0, np.abs(J).max()))


BASE_NAMES = ("vertex_to_edge", "telescoping", "edge_split_m1", "edge_split_m1_real", "o1_average", "o1_average_real")


def random_operand(rng: np.random.Generator, size: int) -> np.ndarray:
    """Complex values with modulus at most 1."""
    r = np.sqrt(rng.uniform(0, 1, size))
    return r * np.exp(2j * np.pi * rng.uniform(0, 1, size))


@dataclass
class IdentityReport:
    residuals: dict
    flagged_edges: int
    samples: int

    @property
    def worst(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0


def identity_suite(es: EigenSystem, policy: ZetaPolicy, interval=None, samples: int = 4, operands: int = 2,
                   T: int = 3, m_values=(2, 3), seed: int = 0) -> IdentityReport:
    """Largest relative residual of every variance-reduction identity over sampled ``j`` and operands."""
    g = policy.graph
    idx = np.arange(es.n) if interval is None else es.in_interval(interval)
    rng = rng_stream(seed, STREAM_OPERANDS)
    if len(idx) > samples:
        idx = np.sort(rng.choice(idx, size=samples, replace=False))
    names = list(BASE_NAMES) + [f"{base}_m{m}" for m in m_values for base in ("path_split", "path_average")]
    worst = dict.fromkeys(names, 0.0)
    flagged = np.zeros(g.oriented.count, dtype=bool)
    ops_rngs = [rng_stream(seed, STREAM_OPERANDS, int(j)) for j in idx]

    def run(i, zf):
        r = ops_rngs[i]
        psi = es.vectors[:, idx[i]]
        ops = ReductionOperators(zf, T)
        out = dict.fromkeys(names, 0.0)
        for _ in range(operands):
            J = random_operand(r, g.n)
            K1 = random_operand(r, g.oriented.count)
            out["vertex_to_edge"] = max(out["vertex_to_edge"], vertex_to_edge_residual(ops, psi, J))
            out["telescoping"] = max(out["telescoping"], telescoping_residual(ops, J))
            out["edge_split_m1"] = max(out["edge_split_m1"], edge_split_residual(ops, psi, K1))
            out["edge_split_m1_real"] = max(out["edge_split_m1_real"],
                                               edge_split_residual(ops, psi, K1, tilde=True))
            out["o1_average"] = max(out["o1_average"], o1_average_residual(ops, K1))
            out["o1_average_real"] = max(out["o1_average_real"], o1_average_residual(ops, K1, tilde=True))
            for m in m_values:
                Km = Observable.dense(g, m, random_operand(r, len(nb_paths(g, m))), 1.0)
                out[f"path_split_m{m}"] = max(out[f"path_split_m{m}"], path_split_residual(ops, psi, Km))
                out[f"path_average_m{m}"] = max(out[f"path_average_m{m}"], path_average_residual(ops, Km))
        return out, ops.flagged

    for out, fl in policy.map(es.values[idx], run):
        flagged |= fl
        for k, v in out.items():
            worst[k] = max(worst[k], v)
    return IdentityReport(worst, int(flagged.sum()), len(idx))
