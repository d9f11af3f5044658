"""Undirected graphs, BFS layering, test-instance generators and text I/O."""

from __future__ import annotations

from collections import deque
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Graph",
    "GraphError",
    "GraphFormatError",
    "DisconnectedGraphError",
    "LayerDecomposition",
    "Embedding",
    "bfs_distances",
    "bfs_layers",
    "gen_graph",
    "GRAPH_FAMILIES",
    "embed_hypergraph",
    "load_graph",
    "save_graph",
    "parse_generator_spec",
]


class GraphError(ValueError):
    pass


class GraphFormatError(GraphError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DisconnectedGraphError(GraphError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"graph is disconnected: node {node} is unreachable")


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph over dense integer ids ``0..n-1``.

    ``adjacency[v]`` is the sorted tuple of neighbours of ``v``.
    """

    n: int
    adjacency: tuple[tuple[int, ...], ...]
    _csr: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise GraphError("a graph needs at least one node")
        if len(self.adjacency) != self.n:
            raise GraphError("adjacency length does not match n")
        for v, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise GraphError(f"neighbours of {v} must be sorted and unique")
            for u in nbrs:
                if not 0 <= u < self.n:
                    raise GraphError(f"neighbour {u} of {v} out of range")
                if u == v:
                    raise GraphError(f"self-loop at {v}")
                if v not in self.adjacency[u]:
                    raise GraphError(f"asymmetric adjacency between {v} and {u}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> Graph:
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise GraphError(f"self-loop at {u}")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs))

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def m(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def is_connected(self) -> bool:
        return all(d >= 0 for d in bfs_distances(self, 0))

    def require_connected(self) -> None:
        dist = bfs_distances(self, 0)
        for v, d in enumerate(dist):
            if d < 0:
                raise DisconnectedGraphError(v)

    def csr(self):
        """Cached scipy CSR adjacency matrix (float32)."""
        if self._csr is None:
            from scipy.sparse import csr_matrix

            indptr = np.zeros(self.n + 1, dtype=np.int64)
            indptr[1:] = np.cumsum([len(a) for a in self.adjacency])
            indices = np.fromiter(
                (u for a in self.adjacency for u in a), dtype=np.int64, count=int(indptr[-1])
            )
            data = np.ones(len(indices), dtype=np.float32)
            object.__setattr__(self, "_csr", csr_matrix((data, indices, indptr), shape=(self.n, self.n)))
        return self._csr


@dataclass(frozen=True)
class LayerDecomposition:
    source: int
    dist: tuple[int, ...]
    d_max: int
    layers: tuple[frozenset[int], ...]

    def layer_of(self, v: int) -> int:
        return self.dist[v]


def bfs_distances(g: Graph, s: int) -> list[int]:
    """Hop distances from ``s``; unreachable nodes get -1."""
    dist = [-1] * g.n
    dist[s] = 0
    queue = deque([s])
    while queue:
        v = queue.popleft()
        for u in g.adjacency[v]:
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def bfs_layers(g: Graph, s: int) -> LayerDecomposition:
    if not 0 <= s < g.n:
        raise GraphError(f"source {s} out of range")
    dist = bfs_distances(g, s)
    for v, d in enumerate(dist):
        if d < 0:
            raise DisconnectedGraphError(v)
    d_max = max(dist)
    layers: list[set[int]] = [set() for _ in range(d_max + 1)]
    for v, d in enumerate(dist):
        layers[d].add(v)
    return LayerDecomposition(s, tuple(dist), d_max, tuple(frozenset(x) for x in layers))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

GRAPH_FAMILIES = ("path", "cycle", "grid", "random_gnp", "layered_random")
_GNP_ATTEMPTS = 100


def _path(n: int) -> Graph:
    if n < 1:
        raise GraphError("path needs n >= 1")
    return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def _cycle(n: int) -> Graph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def _grid(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise GraphError("grid needs rows, cols >= 1")
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return Graph.from_edges(rows * cols, edges)


def _gnp(n: int, p: float, seed: int) -> Graph:
    if n < 1 or not 0.0 <= p <= 1.0:
        raise GraphError("random_gnp needs n >= 1 and 0 <= p <= 1")
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(_GNP_ATTEMPTS):
        rng = np.random.default_rng([seed, attempt])
        keep = rng.random(len(iu)) < p
        g = Graph.from_edges(n, zip(iu[keep].tolist(), ju[keep].tolist()))
        if g.is_connected():
            return g
    raise GraphError(f"random_gnp(n={n}, p={p}) not connected after {_GNP_ATTEMPTS} attempts")


def _layered(layers: int, width: int, p: float, seed: int) -> Graph:
    """Random layered graph: node 0 alone in layer 0, then ``layers`` layers of
    1..width nodes. Each node gets one random parent in the previous layer plus
    extra edges to the previous and the same layer with probability ``p``.
    """
    if layers < 1 or width < 1 or not 0.0 <= p <= 1.0:
        raise GraphError("layered_random needs layers, width >= 1 and 0 <= p <= 1")
    rng = np.random.default_rng(seed)
    groups = [[0]]
    n = 1
    for _ in range(layers):
        size = int(rng.integers(1, width + 1))
        groups.append(list(range(n, n + size)))
        n += size
    edges = set()
    for prev, cur in zip(groups, groups[1:]):
        for v in cur:
            edges.add((int(rng.choice(prev)), v))
            for u in prev:
                if rng.random() < p:
                    edges.add((u, v))
        for a in range(len(cur)):
            for b in range(a + 1, len(cur)):
                if rng.random() < p:
                    edges.add((cur[a], cur[b]))
    return Graph.from_edges(n, edges)


def gen_graph(family: str, params: dict | None = None, seed: int = 0) -> Graph:
    """Deterministic test-instance generator.

    Families and their parameters: ``path(n)``, ``cycle(n)``, ``grid(rows, cols)``,
    ``random_gnp(n, p)``, ``layered_random(layers, width, p)``.
    """
    params = dict(params or {})
    try:
        if family == "path":
            return _path(int(params["n"]))
        if family == "cycle":
            return _cycle(int(params["n"]))
        if family == "grid":
            return _grid(int(params["rows"]), int(params.get("cols", params["rows"])))
        if family == "random_gnp":
            return _gnp(int(params["n"]), float(params["p"]), seed)
        if family == "layered_random":
            return _layered(
                int(params["layers"]), int(params["width"]), float(params.get("p", 0.3)), seed
            )
    except KeyError as exc:
        raise GraphError(f"{family}: missing parameter {exc.args[0]!r}") from None
    raise GraphError(f"unknown graph family {family!r}")


_FAMILY_ALIASES = {"gnp": "random_gnp", "layered": "layered_random"}


def parse_generator_spec(spec: str) -> tuple[str, dict[str, str]]:
    """Parse ``"family:key=val,key=val"`` (e.g. ``"random_gnp:n=50,p=0.1"``)."""
    family, _, rest = spec.partition(":")
    family = _FAMILY_ALIASES.get(family.strip(), family.strip())
    params: dict[str, str] = {}
    for item in filter(None, (x.strip() for x in rest.split(","))):
        key, eq, value = item.partition("=")
        if not eq:
            raise GraphError(f"bad generator parameter {item!r} in {spec!r}")
        params[key.strip()] = value.strip()
    if family not in GRAPH_FAMILIES:
        raise GraphError(f"unknown graph family {family!r}")
    return family, params


# ---------------------------------------------------------------------------
# hypergraph embedding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Embedding:
    """Node bookkeeping for :func:`embed_hypergraph`.

    ``vertex_node[u]`` / ``edge_node[e]`` give graph nodes, ``role`` maps each graph
    node back to ``("source", None)``, ``("vertex", u)``, ``("edge", e)`` or
    ``("dummy", None)``. Empty hyperedges are listed in ``empty_edges``.
    """

    source: int
    vertex_node: tuple[int, ...]
    edge_node: tuple[int, ...]
    dummy: int | None
    empty_edges: frozenset[int]
    role: tuple[tuple[str, int | None], ...]


def embed_hypergraph(h) -> tuple[Graph, Embedding]:
    """Embed a hypergraph as a three-layer graph rooted at a fresh source.

    Layer 1 holds the vertices, layer 2 one node per hyperedge adjacent to the
    hyperedge's members. Empty hyperedges hang off a dummy layer-1 node.
    """
    if h.n_vertices < 1:
        raise GraphError("hypergraph needs at least one vertex")
    source = 0
    vertex_node = tuple(range(1, h.n_vertices + 1))
    empty = frozenset(e for e, members in enumerate(h.edges) if not members)
    nxt = h.n_vertices + 1
    dummy = None
    if empty:
        dummy = nxt
        nxt += 1
    edge_node = tuple(range(nxt, nxt + len(h.edges)))
    n = nxt + len(h.edges)
    edges = [(source, x) for x in vertex_node]
    role: list[tuple[str, int | None]] = [("source", None)]
    role += [("vertex", u) for u in range(h.n_vertices)]
    if dummy is not None:
        edges.append((source, dummy))
        role.append(("dummy", None))
    for e, members in enumerate(h.edges):
        role.append(("edge", e))
        if members:
            edges += [(vertex_node[u], edge_node[e]) for u in members]
        else:
            edges.append((dummy, edge_node[e]))
    g = Graph.from_edges(n, edges)
    return g, Embedding(source, vertex_node, edge_node, dummy, empty, tuple(role))


# ---------------------------------------------------------------------------
# text format: "n m" header then "u v" per edge; '#' comments, blank lines ok
# ---------------------------------------------------------------------------


def _content_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((lineno, line))
    return out


def _ints(line: str, lineno: int, count: int | None = None) -> list[int]:
    parts = line.split()
    if count is not None and len(parts) != count:
        raise GraphFormatError(f"expected {count} integers, got {line!r}", lineno)
    try:
        return [int(x) for x in parts]
    except ValueError:
        raise GraphFormatError(f"non-integer token in {line!r}", lineno) from None


def load_graph(text: str) -> Graph:
    lines = _content_lines(text)
    if not lines:
        raise GraphFormatError("empty graph file")
    lineno, header = lines[0]
    n, m = _ints(header, lineno, 2)
    if n < 1 or m < 0:
        raise GraphFormatError(f"invalid header {header!r}", lineno)
    body = lines[1:]
    if len(body) != m:
        raise GraphFormatError(f"header announces {m} edges, found {len(body)}", lineno)
    seen: set[tuple[int, int]] = set()
    for lineno, line in body:
        u, v = _ints(line, lineno, 2)
        for x in (u, v):
            if not 0 <= x < n:
                raise GraphFormatError(f"id {x} out of range [0, {n})", lineno)
        if u == v:
            raise GraphFormatError(f"self-loop at {u}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise GraphFormatError(f"duplicate edge {key[0]} {key[1]}", lineno)
        seen.add(key)
    return Graph.from_edges(n, seen)


def save_graph(g: Graph) -> str:
    edges = g.edges()
    lines = [f"{g.n} {len(edges)}"] + [f"{u} {v}" for u, v in edges]
    return "\n".join(lines) + "\n"

