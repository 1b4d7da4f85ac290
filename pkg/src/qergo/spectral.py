"""Finite-graph operators ``H = A + W`` and ``P = D^{-1} A`` and their spectra."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .ensembles import as_potential
from .errors import EigensolveFailure, RealAxisParameter, SizeCapExceeded
from .graph import Graph

DEFAULT_SIZE_CAP = 5000
DUMP_MAGIC = b"QERGOEIG"
DUMP_VERSION = 1


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and real orthonormal eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray
    residual_tol: float
    max_residual: float = 0.0

    @property
    def n(self) -> int:
        return len(self.values)

    def in_interval(self, interval) -> np.ndarray:
        a, b = interval
        return np.flatnonzero((self.values > a) & (self.values < b))

    def multiplicities(self, atol: float = 1e-8) -> np.ndarray:
        """Size of the eigenvalue cluster each index belongs to."""
        lam = self.values
        breaks = np.flatnonzero(np.diff(lam) > atol)
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks + 1, [len(lam)]])
        out = np.empty(len(lam), dtype=np.int64)
        for s, e in zip(starts, ends):
            out[s:e] = e - s
        return out


def hamiltonian(g: Graph, w=None) -> np.ndarray:
    pot = as_potential(w, g.n)
    h = g.adjacency().toarray()
    h[np.diag_indices(g.n)] = pot.values
    return h


def eigensystem(g: Graph, w=None, tol: float = 1e-10, size_cap: int = DEFAULT_SIZE_CAP) -> EigenSystem:
    """Dense symmetric eigendecomposition of ``H = A + W`` with a residual audit."""
    if g.n > size_cap:
        raise SizeCapExceeded(f"N = {g.n} exceeds the dense-solve cap {size_cap}")
    h = hamiltonian(g, w)
    try:
        lam, vecs = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    scale = max(1.0, float(np.abs(lam).max()))
    res = np.linalg.norm(h @ vecs - vecs * lam, axis=0).max()
    gram = np.abs(vecs.T @ vecs - np.eye(g.n)).max()
    if res > tol * scale or gram > tol * scale:
        raise EigensolveFailure(f"residual {res:.3e}, orthogonality defect {gram:.3e} above {tol:.1e}")
    return EigenSystem(lam, vecs, tol, float(res))


def finite_green(es: EigenSystem, x: int, y: int, z: complex) -> complex:
    """``sum_j psi_j(x) psi_j(y) / (lambda_j - z)``."""
    if complex(z).imag == 0:
        raise RealAxisParameter("the finite Green function needs Im z != 0")
    v = es.vectors
    return complex(np.sum(v[x] * v[y] / (es.values - z)))


def finite_green_matrix(es: EigenSystem, z: complex) -> np.ndarray:
    if complex(z).imag == 0:
        raise RealAxisParameter("the finite Green function needs Im z != 0")
    v = es.vectors
    return (v / (es.values - z)) @ v.T


def laplacian_matrix(g: Graph) -> sp.csr_matrix:
    """``(Pf)(x) = d(x)^{-1} sum_{y ~ x} f(y)``."""
    a = g.adjacency()
    return sp.diags(1.0 / g.degrees) @ a


def dump_eigensystem(es: EigenSystem, path) -> None:
    """Write ``(lambda, Psi)`` as raw little-endian float64 behind a versioned header."""
    with open(path, "wb") as fh:
        fh.write(DUMP_MAGIC)
        fh.write(struct.pack("<IIQd", DUMP_VERSION, 0, es.n, es.residual_tol))
        fh.write(np.ascontiguousarray(es.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(es.vectors, dtype="<f8").tobytes())


def load_eigensystem(path) -> EigenSystem:
    with open(path, "rb") as fh:
        if fh.read(len(DUMP_MAGIC)) != DUMP_MAGIC:
            raise ValueError("not an eigensystem dump")
        version, _, n, tol = struct.unpack("<IIQd", fh.read(24))
        if version != DUMP_VERSION:
            raise ValueError(f"unsupported dump version {version}")
        lam = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        vecs = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
    return EigenSystem(lam, vecs, tol)
