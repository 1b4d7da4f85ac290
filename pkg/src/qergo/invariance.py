"""Transfer operators on path spaces and the invariance operators ``R_{n,r}``, ``Z``.

Notation: for a path ``omega = (x_0..x_k)`` the first edge is ``(x_0 -> x_1)``
and the last edge ``(x_{k-1} -> x_k)``.  ``weight[e] = |Im zeta[e]| / |zeta[e]|^2``
and ``xi = 1 / weight``.  The weighted inner product on ``H_k`` (``k >= 1``) is

    <A, B>_gamma = (1/N) sum_{B_k} weight[rev first] conj(A) B weight[last],

and on ``H_0`` it is ``(1/N) sum N_gamma^2 conj(A) B``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .cover_green import ZetaField, mu_values
from .ergodicity import NbQuasiEigenvectors
from .graph import nb_adjoint_apply, nb_apply, nb_paths, path_edges
from .quantization import Observable, kb_matrix_element

TRANSFER_KINDS = ("S", "Su", "S_adjoint")


def _levels(zf: ZetaField, k: int):
    if k < 1:
        raise ValueError("transfer operators act on H_k with k >= 1")
    g = zf.graph
    return nb_paths(g, k), nb_paths(g, k + 1)


def transfer_matrix(zf: ZetaField, which: str, k: int) -> sp.csr_matrix:
    """Sparse matrix of ``S_gamma``, ``S_{u^gamma}`` or ``S_gamma^*`` on ``H_k``."""
    if which not in TRANSFER_KINDS:
        raise ValueError(f"which must be one of {TRANSFER_KINDS}")
    lo, hi = _levels(zf, k)
    rev = zf.graph.oriented.reverse
    z = zf.zeta
    if which == "S_adjoint":
        rows, cols = hi.parent, hi.tail
        vals = zf.xi[lo.last_edge[rows]] * np.abs(z[hi.last_edge].imag)
    else:
        rows, cols = hi.tail, hi.parent
        back = rev[hi.first_edge]
        vals = zf.xi[rev[lo.first_edge[rows]]] * np.abs(z[back].imag)
        if which == "Su":
            vals = vals * np.conj(zf.u[back])
    n = len(lo)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def transfer_apply(zf: ZetaField, which: str, k: int, f: np.ndarray) -> np.ndarray:
    return transfer_matrix(zf, which, k) @ np.asarray(f)


def transfer_row_sums_expected(zf: ZetaField, which: str, k: int) -> np.ndarray:
    """``1 - eta xi`` on the reversed first edge (``S``) or the last edge (``S^*``)."""
    lo = nb_paths(zf.graph, k)
    if which == "S_adjoint":
        return 1 - zf.eta * zf.xi[lo.last_edge]
    return 1 - zf.eta * zf.xi[zf.graph.oriented.reverse[lo.first_edge]]


def _edges(zf: ZetaField, verts: np.ndarray) -> np.ndarray:
    return path_edges(zf.graph, verts)


def r_operator(zf: ZetaField, obs: Observable, n: int, r: int) -> Observable:
    """``R_{n,r} K`` on ``B_{n+k}``: conjugated cavity product before the window, plain after."""
    if not 0 <= r <= n:
        raise ValueError("need 0 <= r <= n")
    k = obs.k
    level = nb_paths(zf.graph, n + k)
    verts = level.vertices
    a = n - r
    val = obs.evaluate(verts[:, a:a + k + 1])
    if n + k >= 1:
        e = _edges(zf, verts)
        rev = zf.graph.oriented.reverse
        z = zf.zeta
        val = val * np.conj(np.prod(z[rev[e[:, :a]]], axis=1)) * np.prod(z[e[:, a + k:]], axis=1)
    return Observable.dense(zf.graph, n + k, val, None, f"R{n},{r}")


def z_operator(zf: ZetaField, obs: Observable, inverse: bool = False) -> Observable:
    """``(Z K)(x_0..x_k) = zeta(x_0 -> x_1) ... zeta(x_{k-1} -> x_k) K``."""
    dense = obs.to_dense()
    if obs.k == 0:
        return dense
    e = _edges(zf, nb_paths(zf.graph, obs.k).vertices)
    prod = np.prod(zf.zeta[e], axis=1)
    vals = dense.values / prod if inverse else dense.values * prod
    return Observable.dense(zf.graph, obs.k, vals, None, ("Zinv" if inverse else "Z") + obs.name)


def m_times(zf: ZetaField, obs: Observable) -> np.ndarray:
    """``(m K)(x_0..x_k) = m_{x_0} K`` as a dense table."""
    dense = obs.to_dense()
    return zf.m[nb_paths(zf.graph, obs.k).vertices[:, 0]] * dense.values


def gamma_inner(zf: ZetaField, a: Observable, b: Observable) -> complex:
    if a.k != b.k:
        raise ValueError("observables of different order")
    g = zf.graph
    av, bv = a.to_dense().values, b.to_dense().values
    if a.k == 0:
        return complex(np.sum(zf.n_gamma ** 2 * np.conj(av) * bv) / g.n)
    level = nb_paths(g, a.k)
    w = zf.weight
    wf = w[g.oriented.reverse[level.first_edge]]
    return complex(np.sum(wf * np.conj(av) * bv * w[level.last_edge]) / g.n)


def _cross_factor(zf: ZetaField, obs: Observable, verts: np.ndarray, e: np.ndarray, p: int) -> np.ndarray:
    """Window factor shared by both sides of the collapsed inner product.

    ``verts`` rows are ``y_0..y_L`` with ``L = p + k``; returns
    ``conj(K(y_0..y_k) prod_{l=k}^{L-1} zeta[e_l]) conj(prod_{l<p} zeta[rev e_l]) K(y_p..y_L)``.
    """
    k = obs.k
    rev = zf.graph.oriented.reverse
    z = zf.zeta
    left = obs.evaluate(verts[:, :k + 1]) * np.prod(z[e[:, k:]], axis=1)
    mid = np.prod(z[rev[e[:, :p]]], axis=1)
    right = obs.evaluate(verts[:, p:])
    return np.conj(left) * np.conj(mid) * right


def collapsed_main(zf: ZetaField, obs: Observable, n: int, r: int, rp: int) -> complex:
    """Main term of ``<R_{n,r} K, R_{n,r'} K>_gamma`` after summing out the outer vertices."""
    _check_rr(n, r, rp, obs.k)
    g = zf.graph
    p = r - rp
    verts = nb_paths(g, p + obs.k).vertices
    e = _edges(zf, verts)
    w = zf.weight
    front = w[g.oriented.reverse[e[:, 0]]]
    back = w[e[:, -1]]
    return complex(np.sum(front * _cross_factor(zf, obs, verts, e, p) * back) / g.n)


def _check_rr(n, r, rp, k):
    if k < 1:
        raise ValueError("the collapsed inner product needs k >= 1")
    if not 0 <= rp <= r <= n:
        raise ValueError("need 0 <= r' <= r <= n")


def collapse_remainder(zf: ZetaField, obs: Observable, n: int, r: int, rp: int) -> complex:
    """``O_{n,r,r'}(eta, K)``: the ``eta``-terms dropped when collapsing the outer sums.

    First sum: paths ``(x_s..x_{n+k})``, ``s = 1..n-r``.  Second sum: paths
    ``(x_{n-r}..x_{s'})``, ``s' = n-r'+k..n+k-1``, carrying the front weight at ``x_{n-r}``.
    """
    _check_rr(n, r, rp, obs.k)
    g = zf.graph
    k = obs.k
    rev = g.oriented.reverse
    z = zf.zeta
    a, b, top = n - r, n - rp + k, n + k
    p = r - rp
    L = p + k
    total = 0j
    for s in range(1, a + 1):
        verts = nb_paths(g, top - s).vertices
        e = _edges(zf, verts)
        i0 = a - s
        front = np.abs(np.prod(z[rev[e[:, :i0]]], axis=1)) ** 2
        back = np.abs(np.prod(z[e[:, i0 + L:]], axis=1)) ** 2 * zf.weight[e[:, -1]]
        cross = _cross_factor(zf, obs, verts[:, i0:i0 + L + 1], e[:, i0:i0 + L], p)
        total += np.sum(front * back * cross)
    for sp_ in range(b, top):
        verts = nb_paths(g, sp_ - a).vertices
        e = _edges(zf, verts)
        front = zf.weight[rev[e[:, 0]]]
        back = np.abs(np.prod(z[e[:, L:]], axis=1)) ** 2
        cross = _cross_factor(zf, obs, verts[:, :L + 1], e[:, :L], p)
        total += np.sum(front * back * cross)
    return complex(zf.eta * total / g.n)


def transfer_form(zf: ZetaField, obs: Observable, r: int, rp: int) -> complex:
    """``(1/N) <S_u^{r-r'} m K, m K>`` in ``l^2(mu_k)`` (conjugate-linear in the first slot)."""
    k = obs.k
    mk = m_times(zf, obs)
    su = transfer_matrix(zf, "Su", k)
    v = mk
    for _ in range(r - rp):
        v = su @ v
    mu = mu_values(zf, nb_paths(zf.graph, k))
    return complex(np.sum(mu * np.conj(v) * mk) / zf.graph.n)


def nb_shift_powers(zf: ZetaField, psi: np.ndarray, count: int, adjoint: bool = False) -> list[np.ndarray]:
    """``[(B zeta)^t tau_+ psi]`` or ``[(B^* (zeta o iota))^t tau_- psi]`` for ``t < count``."""
    g = zf.graph
    o = g.oriented
    if adjoint:
        h = psi[o.origin].astype(complex)
        mult = zf.zeta[o.reverse]
        step = nb_adjoint_apply
    else:
        h = psi[o.terminus].astype(complex)
        mult = zf.zeta
        step = nb_apply
    out = []
    for _ in range(count):
        out.append(h)
        h = step(g, mult * h)
    return out


def eigen_remainder(v: NbQuasiEigenvectors, obs: Observable, zf: ZetaField, n: int, r: int) -> complex:
    """``O_{n,r,j}`` with ``<f*_j, (R_{n,r} K)_B f_j> = <f*_j, K_B f_j> - O_{n,r,j}``.

    Obtained by expanding ``<(B^* iota zeta)^{n-r} f*, K_B (B zeta)^r f>`` with the
    sesquilinear pairing (conjugate-linear in the first slot).
    """
    eta0 = v.gamma.imag
    plus = nb_shift_powers(zf, v.psi, r)
    minus = nb_shift_powers(zf, v.psi, n - r, adjoint=True)
    cplus = sum(plus) if plus else np.zeros_like(v.f)
    cminus = sum(minus) if minus else np.zeros_like(v.f)
    t1 = kb_matrix_element(obs, v.f_star, cplus)
    t2 = kb_matrix_element(obs, cminus, v.f)
    t3 = kb_matrix_element(obs, cminus, cplus)
    return complex(1j * eta0 * t1 - 1j * eta0 * t2 - eta0 ** 2 * t3)
