"""Random regular graphs, i.i.d. potentials and checks of the standing assumptions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import EigensolveFailure, GraphError, RejectionBudgetExceeded
from .graph import Graph, build_graph, injectivity_radii

# Fixed stream labels: every random purpose draws from its own Philox stream
# derived from the master seed, so adding a consumer never shifts another.
STREAM_GRAPH = 1
STREAM_POTENTIAL = 2
STREAM_SUBSET = 3
STREAM_POPDYN = 4
STREAM_EXTRA_EDGES = 5
STREAM_OPERANDS = 6

NU_CHOICES = ("uniform", "bernoulli", "discrete")


def rng_stream(seed: int, label: int, *extra: int) -> np.random.Generator:
    """Philox generator for ``(seed, label, *extra)``; platform independent."""
    ss = np.random.SeedSequence(entropy=int(seed) % 2**64, spawn_key=(int(label), *map(int, extra)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class EnsembleConfig:
    n: int
    q_plus_1: int = 3
    epsilon: float = 0.0
    nu: str = "uniform"
    nu_values: tuple[float, ...] = ()
    seed: int = 0
    max_restarts: int = 1000

    def __post_init__(self):
        if self.nu not in NU_CHOICES:
            raise ValueError(f"nu must be one of {NU_CHOICES}")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.nu == "discrete" and not self.nu_values:
            raise ValueError("discrete nu needs a non-empty value list")

    @property
    def nu_bound(self) -> float:
        if self.nu == "discrete":
            return float(np.max(np.abs(self.nu_values)))
        return 1.0

    @property
    def bound(self) -> float:
        return self.epsilon * self.nu_bound

    def to_dict(self) -> dict:
        d = asdict(self)
        d["nu_values"] = list(self.nu_values)
        return d


@dataclass(frozen=True)
class Potential:
    values: np.ndarray
    bound: float = field(default=0.0)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.size and np.abs(v).max() > self.bound + 1e-15:
            raise ValueError("potential exceeds its declared bound")

    @classmethod
    def zero(cls, n: int) -> "Potential":
        return cls(np.zeros(n), 0.0)

    @classmethod
    def of(cls, values) -> "Potential":
        v = np.asarray(values, dtype=float)
        return cls(v, float(np.abs(v).max()) if v.size else 0.0)


def as_potential(w, n: int) -> Potential:
    if w is None:
        return Potential.zero(n)
    if isinstance(w, Potential):
        return w
    return Potential.of(w)


def _pairing_attempt(degrees: np.ndarray, rng: np.random.Generator):
    stubs = np.repeat(np.arange(len(degrees)), degrees)
    rng.shuffle(stubs)
    pairs = stubs.reshape(-1, 2)
    if (pairs[:, 0] == pairs[:, 1]).any():
        return None
    pairs = np.sort(pairs, axis=1)
    key = pairs[:, 0] * len(degrees) + pairs[:, 1]
    if np.unique(key).size != key.size:
        return None
    n = len(degrees)
    adj = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    if connected_components(adj, directed=False)[0] != 1:
        return None
    return pairs


def random_regular(cfg: EnsembleConfig) -> Graph:
    """Pairing model with full restart on loops, multi-edges or disconnection."""
    n, d = cfg.n, cfg.q_plus_1
    if (n * d) % 2:
        raise GraphError(f"N*(q+1) = {n * d} is odd, no perfect pairing exists")
    if n <= d:
        raise GraphError("need N > q+1")
    rng = rng_stream(cfg.seed, STREAM_GRAPH)
    degrees = np.full(n, d)
    for _ in range(cfg.max_restarts):
        pairs = _pairing_attempt(degrees, rng)
        if pairs is not None:
            return build_graph(pairs, n)
    raise RejectionBudgetExceeded(f"no simple connected pairing after {cfg.max_restarts} restarts")


def perturbed_regular(cfg: EnsembleConfig, extra_edges: int, max_degree: int = 6) -> Graph:
    """Random regular graph plus ``extra_edges`` uniformly placed new edges.

    Gives mixed-degree instances with degrees in ``[q+1, max_degree]``.
    """
    g = random_regular(cfg)
    rng = rng_stream(cfg.seed, STREAM_EXTRA_EDGES)
    edges = {tuple(e) for e in g.edge_list().tolist()}
    deg = g.degrees.copy()
    tries = 0
    added = 0
    while added < extra_edges:
        tries += 1
        if tries > 1000 * (extra_edges + 1):
            raise RejectionBudgetExceeded("could not place the requested extra edges")
        u, v = sorted(rng.integers(0, g.n, size=2).tolist())
        if u == v or (u, v) in edges or deg[u] >= max_degree or deg[v] >= max_degree:
            continue
        edges.add((u, v))
        deg[u] += 1
        deg[v] += 1
        added += 1
    return build_graph(sorted(edges), g.n, max_degree=max_degree)


def sample_potential(g: Graph, cfg: EnsembleConfig) -> Potential:
    """I.i.d. values ``epsilon * X`` with ``X ~ nu``, one per vertex."""
    rng = rng_stream(cfg.seed, STREAM_POTENTIAL)
    draws = sample_nu(rng, cfg, g.n)
    # adding 0.0 turns the -0.0 of a zero disorder strength into 0.0
    return Potential(cfg.epsilon * draws + 0.0, cfg.bound)


def sample_nu(rng: np.random.Generator, cfg: EnsembleConfig, size) -> np.ndarray:
    if cfg.nu == "uniform":
        return rng.uniform(-1.0, 1.0, size=size)
    if cfg.nu == "bernoulli":
        return rng.choice(np.array([-1.0, 1.0]), size=size)
    return rng.choice(np.asarray(cfg.nu_values, dtype=float), size=size)


def random_subset(n: int, size: int, seed: int, label: int = 0) -> np.ndarray:
    rng = rng_stream(seed, STREAM_SUBSET, label)
    return np.sort(rng.choice(n, size=size, replace=False))


def walk_spectrum(g: Graph) -> np.ndarray:
    """Eigenvalues of ``P = D^{-1} A`` via the symmetric form ``D^{-1/2} A D^{-1/2}``."""
    a = g.adjacency().toarray()
    s = 1.0 / np.sqrt(g.degrees)
    try:
        return np.linalg.eigvalsh(s[:, None] * a * s[None, :])
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc


def expander_gap(g: Graph) -> float:
    """``1 - max |mu|`` over the walk spectrum with the eigenvalue 1 removed once."""
    mu = walk_spectrum(g)
    if abs(mu[-1] - 1.0) > 1e-8:
        raise EigensolveFailure("top eigenvalue of P is not 1")
    rest = mu[:-1]
    return float(1.0 - np.abs(rest).max())


def bst_profile(g: Graph, r_max: int) -> np.ndarray:
    """Entry ``r-1`` is the fraction of vertices whose injectivity radius is below ``r``."""
    if r_max < 1:
        raise ValueError("r_max must be at least 1")
    rho = injectivity_radii(g)
    return np.array([(rho < r).mean() for r in range(1, r_max + 1)])

