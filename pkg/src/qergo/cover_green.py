"""Cavity fixed point on oriented edges and Green functions of the covering tree.

The value stored at oriented edge ``e = (w -> v)`` is ``zeta_w(v)``: minus the
diagonal Green function at ``v`` of the covering tree with the branch through
``w`` removed.  It solves

    zeta(w -> v) = 1 / (gamma - W(v) - sum_{u ~ v, u != w} zeta(v -> u)),

and every quantity on the covering tree (diagonal Green values, Green values
along non-backtracking paths, the measures ``mu_k``) is read off from it.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensembles import as_potential
from .errors import HalfPlaneViolation, NoConvergence
from .graph import Graph, PathLevel, nb_paths, path_edges

DEFAULT_MAX_ITER = 200_000


@dataclass(frozen=True)
class ZetaField:
    graph: Graph
    w: np.ndarray
    gamma: complex
    zeta: np.ndarray
    m: np.ndarray
    residual: float
    iterations: int
    tol: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def eta(self) -> float:
        return self.gamma.imag

    @property
    def green_diag(self) -> np.ndarray:
        return -1.0 / (2.0 * self.m)

    @property
    def n_gamma(self) -> np.ndarray:
        return self.green_diag.imag

    @property
    def u(self) -> np.ndarray:
        return np.conj(self.zeta) / self.zeta

    @property
    def xi(self) -> np.ndarray:
        return np.abs(self.zeta) ** 2 / np.abs(self.zeta.imag)

    @property
    def weight(self) -> np.ndarray:
        """``|Im zeta| / |zeta|^2`` per oriented edge, the reciprocal of :attr:`xi`."""
        return np.abs(self.zeta.imag) / np.abs(self.zeta) ** 2

    def at(self, w: int, v: int) -> complex:
        return complex(self.zeta[self.graph.edge_id(w, v)])


def _sweep(g: Graph, w: np.ndarray, gamma: complex, z: np.ndarray) -> np.ndarray:
    o = g.oriented
    s = np.add.reduceat(z, g.indptr[:-1])
    return 1.0 / (gamma - w[o.terminus] - s[o.terminus] + z[o.reverse])


def recursion_residual(g: Graph, w: np.ndarray, gamma: complex, z: np.ndarray) -> np.ndarray:
    o = g.oriented
    s = np.add.reduceat(z, g.indptr[:-1])
    return np.abs(gamma - w[o.terminus] - (s[o.terminus] - z[o.reverse]) - 1.0 / z)


def _m_from_zeta(g: Graph, w: np.ndarray, gamma: complex, z: np.ndarray) -> np.ndarray:
    s = np.add.reduceat(z, g.indptr[:-1])
    return 0.5 * (gamma - w - s)


def solve_zeta(g: Graph, w=None, gamma: complex = 1j, tol: float = 1e-12,
               max_iter: int = DEFAULT_MAX_ITER, init=None) -> ZetaField:
    """Synchronous Picard iteration from ``zeta = -i`` (or a warm start)."""
    gamma = complex(gamma)
    if gamma.imag <= 0:
        raise ValueError("solve_zeta needs Im gamma > 0")
    if tol <= 0:
        raise ValueError("tol must be positive")
    wv = as_potential(w, g.n).values
    z = np.full(g.oriented.count, -1j) if init is None else np.array(init, dtype=complex)
    for it in range(1, max_iter + 1):
        new = _sweep(g, wv, gamma, z)
        step = np.abs(new - z).max()
        z = new
        if step < tol:
            res = recursion_residual(g, wv, gamma, z).max()
            if res < tol:
                break
    else:
        raise NoConvergence(f"no convergence after {max_iter} sweeps at gamma={gamma}", iterations=max_iter)
    if (z.imag >= 0).any():
        raise HalfPlaneViolation("an iterate left the lower half-plane")
    m = _m_from_zeta(g, wv, gamma, z)
    return ZetaField(g, wv, gamma, z, m, float(res), it, tol)


def continuation_solve(g: Graph, w=None, lam: float = 0.0, eta_target: float = 1.0, tol: float = 1e-12,
                       max_iter: int = DEFAULT_MAX_ITER, init=None) -> ZetaField:
    """Solve at ``lam + i*eta_target`` by halving ``eta`` from 1, warm-starting each rung."""
    if eta_target <= 0:
        raise ValueError("eta_target must be positive")
    rungs = []
    eta = 1.0
    while eta > eta_target:
        rungs.append(eta)
        eta /= 2
    rungs.append(eta_target)
    z = init
    zf = None
    for i, eta in enumerate(rungs):
        last = i == len(rungs) - 1
        try:
            zf = solve_zeta(g, w, lam + 1j * eta, tol if last else max(tol, 1e-8), max_iter, z)
        except NoConvergence as exc:
            raise NoConvergence(f"continuation stalled at rung eta={eta}", exc.iterations, rung=eta) from exc
        z = zf.zeta
    zf.meta["rungs"] = len(rungs)
    return zf


def regular_zeta(q: int, gamma: complex, w: float = 0.0) -> complex:
    """Root of ``q z^2 - (gamma - w) z + 1 = 0`` in the lower half-plane."""
    a = complex(gamma) - w
    disc = np.sqrt(a * a - 4 * q + 0j)
    roots = [(a + disc) / (2 * q), (a - disc) / (2 * q)]
    return min(roots, key=lambda r: r.imag)


def _as_vertices(paths) -> np.ndarray:
    if isinstance(paths, PathLevel):
        return paths.vertices
    return np.atleast_2d(np.asarray(paths, dtype=np.int64))


def tree_green_paths(zf: ZetaField, paths) -> np.ndarray:
    """Covering-tree Green values between the lifted endpoints of each path."""
    verts = _as_vertices(paths)
    if verts.shape[1] == 1:
        return zf.green_diag[verts[:, 0]]
    e = path_edges(zf.graph, verts)
    rev = zf.graph.oriented.reverse
    return -np.prod(zf.zeta[rev[e]], axis=1) / (2 * zf.m[verts[:, -1]])


def tree_green(zf: ZetaField, path) -> complex:
    return complex(tree_green_paths(zf, np.asarray(path)[None, :])[0])


def _green_between(zf: ZetaField, verts: np.ndarray, e: np.ndarray, i: int, j: int) -> np.ndarray:
    """Green value between path positions ``i`` and ``j`` (either order)."""
    rev = zf.graph.oriented.reverse
    if i <= j:
        prod = np.prod(zf.zeta[rev[e[:, i:j]]], axis=1)
    else:
        prod = np.prod(zf.zeta[e[:, j:i]], axis=1)
    return -prod / (2 * zf.m[verts[:, j]])


IDENTITY_NAMES = ("recursion", "zeta_ratio", "green_factorization", "green_symmetry", "im_zeta_sum", "im_green_step", "im_green_edge", "im_green_path")


def identity_residuals(zf: ZetaField, sample=None) -> dict[str, float]:
    """Largest absolute residual of each tree identity.

    Edge identities are checked at every oriented edge; path identities on
    ``sample`` (a :class:`PathLevel`, a vertex array, or a list of them),
    which defaults to all paths of length 1 to 3.
    """
    g = zf.graph
    o = g.oriented
    z, m = zf.zeta, zf.m
    out = dict.fromkeys(IDENTITY_NAMES, 0.0)

    s = np.add.reduceat(z, g.indptr[:-1])
    g3a = np.abs(zf.gamma - zf.w - s - 2 * m)
    g3b = recursion_residual(g, zf.w, zf.gamma, z)
    out["recursion"] = float(max(g3a.max(), g3b.max()))

    zr = z[o.reverse]
    mo, mt = m[o.origin], m[o.terminus]
    mv1 = np.abs(z - mo / mt * zr)
    mv2 = np.abs(1 / z - zr - 2 * mt)
    out["zeta_ratio"] = float(max(mv1.max(), mv2.max()))

    # sum over u in N_v minus w of |Im zeta_v(u)|, for e = (w -> v)
    abs_im = np.abs(z.imag)
    tot = np.add.reduceat(abs_im, g.indptr[:-1])
    lhs = tot[o.terminus] - abs_im[o.reverse]
    out["im_zeta_sum"] = float(np.abs(lhs - (abs_im / np.abs(z) ** 2 - zf.eta)).max())

    gd = zf.green_diag
    g01 = -zr / (2 * mt)
    g10 = -z / (2 * mo)
    lhs1 = gd[o.terminus].imag - np.conj(z) * g10.imag - z * g01.imag + np.abs(z) ** 2 * gd[o.origin].imag
    out["im_green_edge"] = float(np.abs(lhs1 - abs_im).max())

    if sample is None:
        sample = [nb_paths(g, k) for k in (1, 2, 3)]
    elif isinstance(sample, (PathLevel, np.ndarray)):
        sample = [sample]
    for part in sample:
        verts = _as_vertices(part)
        k = verts.shape[1] - 1
        if k < 1:
            continue
        e = path_edges(g, verts)
        full = _green_between(zf, verts, e, 0, k)
        back = _green_between(zf, verts, e, k, 0)
        out["green_symmetry"] = max(out["green_symmetry"], float(np.abs(full - back).max()))
        peel_front = z[o.reverse[e[:, 0]]] * _green_between(zf, verts, e, 1, k)
        peel_back = z[e[:, k - 1]] * _green_between(zf, verts, e, 0, k - 1)
        out["green_factorization"] = max(out["green_factorization"], float(np.abs(full - peel_front).max()),
                                 float(np.abs(full - peel_back).max()))
        z_last = z[e[:, k - 1]]
        g_prefix = _green_between(zf, verts, e, 0, k - 1)
        step = full.imag - z_last * g_prefix.imag - z_last.imag * np.conj(g_prefix)
        out["im_green_step"] = max(out["im_green_step"], float(np.abs(step).max()))
        cz_first = np.conj(z[o.reverse[e[:, 0]]])
        psi_1k = _green_between(zf, verts, e, 1, k).imag
        psi_1km = _green_between(zf, verts, e, 1, k - 1).imag
        p2 = full.imag - cz_first * psi_1k - z_last * g_prefix.imag + cz_first * z_last * psi_1km
        out["im_green_path"] = max(out["im_green_path"], float(np.abs(p2).max()))
    return out


@dataclass(frozen=True)
class NbMeasure:
    """``mu_k`` on ``B_k`` together with its two sub-stationarity defects.

    The defects live on ``B_{k-1}`` and are only defined for ``k >= 2``
    (``compat``: mass lost when summing over the last vertex; ``inv``: over
    the first vertex).
    """

    k: int
    values: np.ndarray
    paths: PathLevel
    compat_defect: np.ndarray | None
    inv_defect: np.ndarray | None

    @property
    def total(self) -> float:
        return float(self.values.sum())


def mu_values(zf: ZetaField, level: PathLevel) -> np.ndarray:
    if level.k < 1:
        raise ValueError("mu_k needs k >= 1")
    g = zf.graph
    e = path_edges(g, level.vertices)
    z = zf.zeta
    first, last = e[:, 0], e[:, -1]
    x1 = level.vertices[:, 1]
    front = np.abs(z[g.oriented.reverse[first]].imag) / np.abs(zf.m[x1] * z[first]) ** 2
    middle = np.prod(np.abs(z[e]) ** 2, axis=1)
    return front * middle * zf.weight[last]


def mu_k(zf: ZetaField, k: int, cap: int | None = None) -> NbMeasure:
    g = zf.graph
    level = nb_paths(g, k) if cap is None else nb_paths(g, k, cap)
    mu = mu_values(zf, level)
    compat = inv = None
    if k >= 2:
        lower = mu_values(zf, nb_paths(g, k - 1))
        n_lower = len(lower)
        compat = lower - np.bincount(level.parent, weights=mu, minlength=n_lower)
        inv = lower - np.bincount(level.tail, weights=mu, minlength=n_lower)
    return NbMeasure(k, mu, level, compat, inv)
