"""Path kernels and their two quantizations.

An observable of order ``k`` is a complex function on ``B_k``, the
non-backtracking paths of length ``k``.  It acts on vertex functions through

    <phi1, K_G phi2> = sum_{(x_0..x_k) in B_k} conj(phi1(x_0)) K(x_0..x_k) phi2(x_k)

and on oriented-edge functions (``k >= 1``) through

    <f1, K_B f2> = sum_{B_k} conj(f1(x_0, x_1)) K(x_0..x_k) f2(x_{k-1}, x_k).

Backtracking paths never enter either sum, so extending a kernel by zero
there changes nothing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np
import scipy.sparse as sp

from .errors import GraphError, KZeroNotEdgeBased, SupBoundViolated
from .graph import DEFAULT_PATH_CAP, Graph, count_nb_paths, distances_from, iter_path_blocks, nb_paths, path_edges

SUP_SLACK = 1e-12
FORMAT_HEADER = "# qergo observable v1"


@dataclass(frozen=True)
class Observable:
    """Element of ``H_k``, either a dense table over ``nb_paths(g, k)`` or a rule.

    A rule maps an ``(n, k+1)`` vertex array to ``n`` complex values and is
    evaluated block by block, so ``B_k`` is never materialised.
    """

    graph: Graph
    k: int
    values: np.ndarray | None = None
    rule: Callable[[np.ndarray], np.ndarray] | None = None
    sup_bound: float = 1.0
    name: str = ""

    def __post_init__(self):
        if (self.values is None) == (self.rule is None):
            raise ValueError("give exactly one of values and rule")
        if self.k < 0:
            raise ValueError("k must be non-negative")
        if self.values is not None:
            v = np.asarray(self.values, dtype=complex)
            if v.shape != (len(nb_paths(self.graph, self.k)),):
                raise ValueError(f"dense values need one entry per path of B_{self.k}")
            _check_sup(v, self.sup_bound)
            object.__setattr__(self, "values", v)

    @classmethod
    def dense(cls, g: Graph, k: int, values, sup_bound: float | None = None, name: str = "") -> "Observable":
        v = np.asarray(values, dtype=complex)
        bound = float(np.abs(v).max(initial=0.0)) if sup_bound is None else sup_bound
        return cls(g, k, values=v, sup_bound=bound, name=name)

    @classmethod
    def from_rule(cls, g: Graph, k: int, rule, sup_bound: float = 1.0, name: str = "") -> "Observable":
        return cls(g, k, rule=rule, sup_bound=sup_bound, name=name)

    @classmethod
    def constant(cls, g: Graph, k: int, c: complex = 1.0) -> "Observable":
        return cls.from_rule(g, k, lambda verts: np.full(len(verts), c, dtype=complex), abs(c), f"const{k}")

    @classmethod
    def vertex(cls, g: Graph, a, name: str = "") -> "Observable":
        return cls.dense(g, 0, a, name=name)

    def evaluate(self, verts: np.ndarray) -> np.ndarray:
        """Values on the rows of ``verts`` (all assumed to be paths of ``B_k``)."""
        if self.values is not None:
            return self.values[_path_index(self.graph, self.k, verts)]
        out = np.asarray(self.rule(verts), dtype=complex)
        _check_sup(out, self.sup_bound)
        return out

    def blocks(self, block: int = 256) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        """``(vertices, values)`` pairs covering ``B_k`` in lexicographic order."""
        if self.values is not None:
            yield nb_paths(self.graph, self.k).vertices, self.values
            return
        for verts in iter_path_blocks(self.graph, self.k, block):
            yield verts, self.evaluate(verts)

    def to_dense(self, cap: int = DEFAULT_PATH_CAP) -> "Observable":
        if self.values is not None:
            return self
        level = nb_paths(self.graph, self.k, cap)
        return Observable(self.graph, self.k, values=self.evaluate(level.vertices), sup_bound=self.sup_bound,
                          name=self.name)

    def scaled(self, c: complex) -> "Observable":
        if self.values is not None:
            return Observable.dense(self.graph, self.k, c * self.values, abs(c) * self.sup_bound, self.name)
        rule = self.rule
        return Observable.from_rule(self.graph, self.k, lambda v: c * rule(v), abs(c) * self.sup_bound, self.name)


def _check_sup(v: np.ndarray, bound: float) -> None:
    if v.size and np.abs(v).max() > bound * (1 + SUP_SLACK) + SUP_SLACK:
        raise SupBoundViolated(f"|K| reaches {np.abs(v).max():.6g}, above the declared bound {bound:.6g}")


def _path_index(g: Graph, k: int, verts: np.ndarray) -> np.ndarray:
    """Row positions of the given paths inside ``nb_paths(g, k)``."""
    level = nb_paths(g, k)
    if k == 0:
        return verts[:, 0]
    e = path_edges(g, verts)
    rev = g.oriented.reverse
    if (e[:, 1:] == rev[e[:, :-1]]).any():
        raise GraphError("backtracking path")
    idx = e[:, 0]
    for j in range(2, k + 1):
        lower = nb_paths(g, j - 1)
        prev, step = e[:, j - 2], e[:, j - 1]
        # children are ordered by their new last edge, the reversal skipped
        offset = step - g.indptr[verts[:, j - 1]] - (step > rev[prev])
        idx = lower.child_start[idx] + offset
    return idx


def lift_kernel(kernel, R: int, g: Graph, check_range: bool = True) -> list[Observable]:
    """Observables ``K_k(x_0..x_k) = kernel(x_0, x_k)`` for ``k = 0..R``.

    ``kernel`` is an ``(N, N)`` array or a vectorised callable ``(x, y) -> values``.
    A dense kernel must vanish beyond graph distance ``R`` and be bounded by 1.
    """
    if R < 0:
        raise ValueError("R must be non-negative")
    if callable(kernel):
        fn = kernel
    else:
        kmat = np.asarray(kernel, dtype=complex)
        if kmat.shape != (g.n, g.n):
            raise ValueError("kernel must be an N x N array")
        if kmat.size and np.abs(kmat).max() > 1 + SUP_SLACK:
            raise SupBoundViolated("kernel exceeds 1 in modulus")
        if check_range:
            far = distances_from(g, np.arange(g.n)) > R
            if np.any(kmat[far] != 0):
                raise ValueError(f"kernel does not vanish beyond distance {R}")

        def fn(x, y):
            return kmat[x, y]

    out = []
    for k in range(R + 1):
        if k == 0:
            vals = np.asarray(fn(np.arange(g.n), np.arange(g.n)), dtype=complex)
            out.append(Observable.dense(g, 0, vals, 1.0, name="lift0"))
        else:
            out.append(Observable.from_rule(g, k, lambda v, fn=fn: fn(v[:, 0], v[:, -1]), 1.0, name=f"lift{k}"))
    return out


def kg_matrix_element(obs: Observable, phi1, phi2) -> complex:
    phi1 = np.asarray(phi1)
    phi2 = np.asarray(phi2)
    total = 0j
    for verts, vals in obs.blocks():
        total += np.sum(np.conj(phi1[verts[:, 0]]) * vals * phi2[verts[:, -1]])
    return complex(total)


def kb_matrix_element(obs: Observable, f1, f2) -> complex:
    if obs.k == 0:
        raise KZeroNotEdgeBased("K_B needs k >= 1; use the vertex form for k = 0")
    f1 = np.asarray(f1)
    f2 = np.asarray(f2)
    g = obs.graph
    total = 0j
    for verts, vals in obs.blocks():
        e = path_edges(g, verts)
        total += np.sum(np.conj(f1[e[:, 0]]) * vals * f2[e[:, -1]])
    return complex(total)


def kg_diagonal(obs: Observable, phi1: np.ndarray, phi2: np.ndarray | None = None) -> np.ndarray:
    """Column-wise ``<phi1[:, j], K_G phi2[:, j]>`` for vertex-function matrices."""
    phi2 = phi1 if phi2 is None else phi2
    out = np.zeros(phi1.shape[1], dtype=complex)
    for verts, vals in obs.blocks():
        out += np.einsum("pj,p,pj->j", np.conj(phi1[verts[:, 0]]), vals, phi2[verts[:, -1]])
    return out


def kb_diagonal(obs: Observable, f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
    """Column-wise ``<f1[:, j], K_B f2[:, j]>`` for edge-function matrices."""
    if obs.k == 0:
        raise KZeroNotEdgeBased("K_B needs k >= 1; use the vertex form for k = 0")
    out = np.zeros(f1.shape[1], dtype=complex)
    for verts, vals in obs.blocks():
        e = path_edges(obs.graph, verts)
        out += np.einsum("pj,p,pj->j", np.conj(f1[e[:, 0]]), vals, f2[e[:, -1]])
    return out


def kg_matrix(obs: Observable) -> sp.csr_matrix:
    """``K_G`` as a sparse ``N x N`` matrix (duplicate paths between a pair are summed)."""
    g = obs.graph
    rows, cols, data = [], [], []
    for verts, vals in obs.blocks():
        rows.append(verts[:, 0])
        cols.append(verts[:, -1])
        data.append(vals)
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(g.n, g.n))


def kb_matrix(obs: Observable) -> sp.csr_matrix:
    """``K_B`` as a sparse matrix on oriented-edge functions."""
    if obs.k == 0:
        raise KZeroNotEdgeBased("K_B needs k >= 1")
    g = obs.graph
    m = g.oriented.count
    rows, cols, data = [], [], []
    for verts, vals in obs.blocks():
        e = path_edges(g, verts)
        rows.append(e[:, 0])
        cols.append(e[:, -1])
        data.append(vals)
    return sp.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(m, m))


def write_observable(obs: Observable, path) -> None:
    """One row per path: ``x_0 ... x_k re im``, after a two-line header."""
    with open(path, "w") as fh:
        fh.write(f"{FORMAT_HEADER}\n# k={obs.k} n={obs.graph.n} sup={float(obs.sup_bound)!r}\n")
        for verts, vals in obs.blocks():
            for row, v in zip(verts.tolist(), vals):
                fh.write(" ".join(map(str, row)) + f" {float(v.real)!r} {float(v.imag)!r}\n")


def read_observable(path, g: Graph) -> Observable:
    """Parse the interchange format; paths not listed get the value 0."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != FORMAT_HEADER:
        raise ValueError("missing observable header")
    meta = dict(item.split("=") for item in lines[1].lstrip("# ").split())
    k, n = int(meta["k"]), int(meta["n"])
    if n != g.n:
        raise ValueError("observable was written for a different vertex count")
    count_nb_paths(g, k)
    values = np.zeros(len(nb_paths(g, k)), dtype=complex)
    rows = [ln.split() for ln in lines[2:] if ln.strip()]
    if rows:
        verts = np.array([[int(x) for x in r[:k + 1]] for r in rows], dtype=np.int64)
        if any(len(r) != k + 3 for r in rows):
            raise ValueError("malformed observable row")
        vals = np.array([complex(float(r[-2]), float(r[-1])) for r in rows])
        values[_path_index(g, k, verts)] = vals
    return Observable.dense(g, k, values, float(meta.get("sup", np.abs(values).max(initial=0.0))))
