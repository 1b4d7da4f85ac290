"""Finite graphs, oriented edges and non-backtracking paths.

Vertices are dense integers ``0..N-1``.  Oriented edges are numbered by their
position in the CSR neighbour array, so edge ``e`` goes from ``origin[e]`` to
``terminus[e]`` and edges leaving a vertex are contiguous and sorted by
terminus.  With this numbering the lexicographic order of edge sequences
coincides with the lexicographic order of vertex sequences, which is what
makes the path levels below cheap to index.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import (
    DegreeOutOfRange,
    DisconnectedGraph,
    GraphError,
    MultiEdge,
    PathBudgetExceeded,
    SelfLoop,
)

DEFAULT_PATH_CAP = 10**8


@dataclass(frozen=True)
class OrientedEdgeSet:
    count: int
    origin: np.ndarray
    terminus: np.ndarray
    reverse: np.ndarray


@dataclass
class PathLevel:
    """All non-backtracking paths of length ``k`` in lexicographic order.

    ``parent`` and ``tail`` index the paths obtained by dropping the last,
    respectively the first, vertex; both point into level ``k-1`` (vertices
    when ``k == 1``).  ``child_start`` is filled in once level ``k+1`` exists.
    """

    k: int
    vertices: np.ndarray
    first_edge: np.ndarray | None
    last_edge: np.ndarray | None
    parent: np.ndarray | None
    tail: np.ndarray | None
    child_start: np.ndarray | None = None

    def __len__(self) -> int:
        return self.vertices.shape[0]


class Graph:
    """Immutable simple connected graph in CSR form."""

    def __init__(self, n: int, indptr: np.ndarray, indices: np.ndarray):
        self.n = int(n)
        self.indptr = indptr
        self.indices = indices
        self.degrees = np.diff(indptr)
        origin = np.repeat(np.arange(self.n), self.degrees)
        terminus = indices.copy()
        # reverse of (u, v) is the slot of u inside the row of v
        key = terminus * self.n + origin
        reverse = np.searchsorted(origin * self.n + terminus, key)
        self.oriented = OrientedEdgeSet(len(indices), origin, terminus, reverse)
        for arr in (self.indptr, self.indices, self.degrees, origin, terminus, reverse):
            arr.setflags(write=False)
        self._levels: list[PathLevel] = []
        self._cache: dict = {}

    @property
    def edge_count(self) -> int:
        return len(self.indices) // 2

    @property
    def max_degree(self) -> int:
        return int(self.degrees.max())

    def neighbors(self, x: int) -> np.ndarray:
        return self.indices[self.indptr[x]:self.indptr[x + 1]]

    def edge_id(self, u: int, v: int) -> int:
        lo, hi = self.indptr[u], self.indptr[u + 1]
        pos = lo + np.searchsorted(self.indices[lo:hi], v)
        if pos >= hi or self.indices[pos] != v:
            raise KeyError(f"({u}, {v}) is not an edge")
        return int(pos)

    def edge_list(self) -> np.ndarray:
        o = self.oriented
        keep = o.origin < o.terminus
        return np.column_stack([o.origin[keep], o.terminus[keep]])

    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))

    def to_text(self) -> str:
        edges = self.edge_list()
        lines = [f"{self.n} {len(edges)}"]
        lines += [f"{u} {v}" for u, v in edges]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, Graph)
            and self.n == other.n
            and np.array_equal(self.indptr, other.indptr)
            and np.array_equal(self.indices, other.indices)
        )

    __hash__ = object.__hash__

    def __repr__(self) -> str:
        return f"Graph(N={self.n}, |E|={self.edge_count}, degrees={self.degrees.min()}..{self.max_degree})"


def build_graph(
    edges: Iterable[tuple[int, int]],
    n: int,
    min_degree: int = 3,
    max_degree: int | None = None,
) -> Graph:
    """Validate an undirected edge list and return the canonical graph.

    ``min_degree`` defaults to 3, the standing assumption of the whole
    package; pass a smaller value to build auxiliary objects such as
    truncated trees.
    """
    arr = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges, dtype=np.int64)
    if arr.size == 0:
        raise GraphError("edge list is empty")
    arr = arr.reshape(-1, 2)
    if n <= 0:
        raise GraphError("N must be positive")
    if arr.min() < 0 or arr.max() >= n:
        raise GraphError(f"vertex index outside [0, {n})")
    loops = arr[:, 0] == arr[:, 1]
    if loops.any():
        raise SelfLoop(f"self-loop at vertex {int(arr[loops][0, 0])}")
    canon = np.sort(arr, axis=1)
    uniq, counts = np.unique(canon, axis=0, return_counts=True)
    if (counts > 1).any():
        u, v = uniq[counts > 1][0]
        raise MultiEdge(f"edge ({u}, {v}) appears {counts[counts > 1][0]} times")
    both = np.vstack([uniq, uniq[:, ::-1]])
    order = np.lexsort((both[:, 1], both[:, 0]))
    both = both[order]
    degrees = np.bincount(both[:, 0], minlength=n)
    low = np.flatnonzero(degrees < min_degree)
    if low.size:
        x = int(low[0])
        raise DegreeOutOfRange(f"vertex {x} has degree {degrees[x]} < {min_degree}")
    if max_degree is not None and degrees.max() > max_degree:
        x = int(np.argmax(degrees))
        raise DegreeOutOfRange(f"vertex {x} has degree {degrees[x]} > {max_degree}")
    indptr = np.concatenate([[0], np.cumsum(degrees)]).astype(np.int64)
    indices = both[:, 1].astype(np.int64)
    adj = sp.csr_matrix((np.ones(len(indices)), indices, indptr), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedGraph(f"graph has {ncomp} connected components")
    return Graph(n, indptr, indices)


def oriented_edges(g: Graph) -> OrientedEdgeSet:
    return g.oriented


def nb_successors(g: Graph, e: int) -> np.ndarray:
    """Oriented edges ``e'`` with ``o(e') = t(e)`` and ``t(e') != o(e)``."""
    o = g.oriented
    t = o.terminus[e]
    out = np.arange(g.indptr[t], g.indptr[t + 1])
    return out[out != o.reverse[e]]


def nb_apply(g: Graph, h: np.ndarray) -> np.ndarray:
    """Non-backtracking operator: ``(Bh)(e) = sum over successors e' of h(e')``."""
    o = g.oriented
    out_sum = np.add.reduceat(h, g.indptr[:-1])
    return out_sum[o.terminus] - h[o.reverse]


def nb_adjoint_apply(g: Graph, h: np.ndarray) -> np.ndarray:
    """Adjoint of :func:`nb_apply`: sums ``h`` over the edges feeding into ``e``."""
    o = g.oriented
    in_sum = np.add.reduceat(h[o.reverse], g.indptr[:-1])
    return in_sum[o.origin] - h[o.reverse]


def count_nb_paths(g: Graph, k: int, cap: int | None = None) -> int:
    """``|B_k|`` computed by dynamic programming, without enumeration."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return g.n
    c = np.ones(g.oriented.count, dtype=np.int64)
    for _ in range(k - 1):
        c = nb_apply(g, c)
        if cap is not None and c.sum() > cap:
            raise PathBudgetExceeded(f"|B_{k}| exceeds cap {cap}")
    total = int(c.sum())
    if cap is not None and total > cap:
        raise PathBudgetExceeded(f"|B_{k}| = {total} exceeds cap {cap}")
    return total


def _extend(g: Graph, vertices: np.ndarray, last_edge: np.ndarray):
    """Append every non-backtracking continuation to each path, in order."""
    o = g.oriented
    t = o.terminus[last_edge]
    cnt = g.degrees[t] - 1
    starts = np.concatenate([[0], np.cumsum(cnt)[:-1]])
    rep = np.repeat(np.arange(len(last_edge)), cnt)
    r = np.arange(rep.size) - starts[rep]
    revpos = o.reverse[last_edge] - g.indptr[t]
    pos = r + (r >= revpos[rep])
    new_edge = g.indptr[t[rep]] + pos
    new_vertices = np.column_stack([vertices[rep], o.terminus[new_edge]])
    return rep, r, new_edge, new_vertices, starts


def nb_paths(g: Graph, k: int, cap: int = DEFAULT_PATH_CAP) -> PathLevel:
    """Materialise ``B_k`` (cached on the graph, together with all lower levels)."""
    if k < 0:
        raise ValueError("k must be non-negative")
    levels = g._levels
    if not levels:
        o = g.oriented
        levels.append(PathLevel(0, np.arange(g.n)[:, None], None, None, None, None, g.indptr[:-1].copy()))
        idx = np.arange(o.count)
        levels.append(PathLevel(1, np.column_stack([o.origin, o.terminus]), idx, idx, o.origin.copy(), o.terminus.copy()))
    while len(levels) <= k:
        count_nb_paths(g, len(levels), cap)
        prev = levels[-1]
        rep, r, new_edge, new_vertices, starts = _extend(g, prev.vertices, prev.last_edge)
        prev.child_start = starts
        grand = levels[-2]
        p2 = prev.tail[rep]
        if grand.k == 0:
            tail = new_edge
        else:
            tail = grand.child_start[p2] + r
        levels.append(PathLevel(prev.k + 1, new_vertices, prev.first_edge[rep], new_edge, rep, tail))
    if len(levels[k]) > cap:
        raise PathBudgetExceeded(f"|B_{k}| = {len(levels[k])} exceeds cap {cap}")
    return levels[k]


def enumerate_nb_paths(g: Graph, k: int, cap: int = DEFAULT_PATH_CAP, block: int = 256) -> Iterator[tuple[int, ...]]:
    """Stream ``B_k`` as vertex tuples in lexicographic order.

    Paths are generated in blocks of starting vertices so memory stays
    bounded by the block size rather than by ``|B_k|``.
    """
    count_nb_paths(g, k, cap)
    for lo in range(0, g.n, block):
        for verts in _block_paths(g, k, np.arange(lo, min(lo + block, g.n))):
            yield tuple(int(v) for v in verts)


def _block_paths(g: Graph, k: int, starts: np.ndarray) -> np.ndarray:
    if k == 0:
        return starts[:, None]
    lo = g.indptr[starts]
    hi = g.indptr[starts + 1]
    edges = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)])
    o = g.oriented
    verts = np.column_stack([o.origin[edges], o.terminus[edges]])
    last = edges
    for _ in range(k - 1):
        _, _, last, verts, _ = _extend(g, verts, last)
    return verts


def iter_path_blocks(g: Graph, k: int, block: int = 256) -> Iterator[np.ndarray]:
    """Vertex arrays of ``B_k`` chunked by starting vertex, in global order."""
    for lo in range(0, g.n, block):
        yield _block_paths(g, k, np.arange(lo, min(lo + block, g.n)))


def path_edges(g: Graph, vertices: np.ndarray) -> np.ndarray:
    """Oriented-edge indices along each row of a vertex-sequence array."""
    vertices = np.atleast_2d(vertices)
    key = vertices[:, :-1] * g.n + vertices[:, 1:]
    sorted_keys = g.oriented.origin * g.n + g.oriented.terminus
    e = np.searchsorted(sorted_keys, key)
    found = sorted_keys[np.minimum(e, len(sorted_keys) - 1)] == key
    if not found.all():
        raise GraphError("consecutive vertices are not adjacent")
    return e


def is_nb_path(g: Graph, verts) -> bool:
    verts = list(verts)
    for a, b in zip(verts, verts[1:]):
        if b not in set(g.neighbors(a).tolist()):
            return False
    return all(verts[i + 1] != verts[i - 1] for i in range(1, len(verts) - 1))


def distances_from(g: Graph, sources) -> np.ndarray:
    d = shortest_path(g.adjacency(), method="D", unweighted=True, indices=sources)
    return d.astype(np.int64)


def _radius_from_distances(g: Graph, dist: np.ndarray) -> int:
    ecc = int(dist.max())
    nodes = np.cumsum(np.bincount(dist, minlength=ecc + 1))
    edges = g.edge_list()
    level = np.maximum(dist[edges[:, 0]], dist[edges[:, 1]])
    inner = np.cumsum(np.bincount(level, minlength=ecc + 1))
    cyclic = np.flatnonzero(inner > nodes - 1)
    return ecc if cyclic.size == 0 else int(cyclic[0]) - 1


def injectivity_radius(g: Graph, x: int) -> int:
    """Largest ``r`` such that the subgraph induced on the closed ``r``-ball is acyclic.

    A connected induced ball is a tree exactly when it carries
    ``|ball| - 1`` edges, which is what is checked radius by radius.
    """
    return _radius_from_distances(g, distances_from(g, [x])[0])


def injectivity_radii(g: Graph, chunk: int = 512) -> np.ndarray:
    out = np.empty(g.n, dtype=np.int64)
    for lo in range(0, g.n, chunk):
        idx = np.arange(lo, min(lo + chunk, g.n))
        dist = distances_from(g, idx)
        for row, x in enumerate(idx):
            out[x] = _radius_from_distances(g, dist[row])
    return out


def format_graph(g: Graph) -> str:
    return g.to_text()


def parse_graph(text: str, min_degree: int = 3) -> Graph:
    lines = [ln.split() for ln in text.strip().splitlines() if ln.strip()]
    n, m = int(lines[0][0]), int(lines[0][1])
    edges = [(int(a), int(b)) for a, b in lines[1:]]
    if len(edges) != m:
        raise GraphError(f"header announces {m} edges, found {len(edges)}")
    return build_graph(edges, n, min_degree=min_degree)


def write_graph(g: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(g.to_text())


def read_graph(path, min_degree: int = 3) -> Graph:
    with open(path) as fh:
        return parse_graph(fh.read(), min_degree=min_degree)


def complete_graph(n: int) -> Graph:
    return build_graph([(i, j) for i in range(n) for j in range(i + 1, n)], n)


def petersen_graph() -> Graph:
    outer = [(i, (i + 1) % 5) for i in range(5)]
    spokes = [(i, i + 5) for i in range(5)]
    inner = [(5 + i, 5 + (i + 2) % 5) for i in range(5)]
    return build_graph(outer + spokes + inner, 10)


def complete_bipartite(a: int, b: int) -> Graph:
    return build_graph([(i, a + j) for i in range(a) for j in range(b)], a + b)


def regular_tree(q_plus_1: int, depth: int) -> Graph:
    """Ball of radius ``depth`` in the ``q_plus_1``-regular tree, rooted at 0."""
    edges, frontier, nxt = [], [0], 1
    for level in range(depth):
        new = []
        for v in frontier:
            for _ in range(q_plus_1 if level == 0 else q_plus_1 - 1):
                edges.append((v, nxt))
                new.append(nxt)
                nxt += 1
        frontier = new
    return build_graph(edges, nxt, min_degree=1)
