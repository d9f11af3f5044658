"""Hypergraph bipartite decomposition (HBD).

An HBD solution colours every non-empty hyperedge ``e`` with ``c(e)`` in ``[k]``
and gives every vertex ``u`` a colour set ``cs(u)`` so that exactly one member
of ``e`` carries ``c(e)``. Colours are 1-based indices ``epoch * T_iter + iteration``
so an all-zero beep word always means "no colour".
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Hypergraph",
    "HBDParams",
    "HBDSolution",
    "Violation",
    "color_index",
    "color_pair",
    "color_word",
    "decode_word",
    "solve_hbd_abstract",
    "verify_hbd",
    "witnesses",
    "palette_stats",
    "load_hypergraph",
    "save_hypergraph",
    "HypergraphFormatError",
    "random_hypergraph",
]

VIOLATION_KINDS = ("uncolored-nonempty", "colored-empty", "zero-witnesses", "multiple-witnesses")


class HypergraphFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Hypergraph:
    n_vertices: int
    edges: tuple[frozenset[int], ...]

    def __post_init__(self) -> None:
        if self.n_vertices < 0:
            raise ValueError("n_vertices must be non-negative")
        for e, members in enumerate(self.edges):
            for u in members:
                if not 0 <= u < self.n_vertices:
                    raise ValueError(f"hyperedge {e}: vertex {u} out of range")

    @classmethod
    def from_lists(cls, n_vertices: int, edges: Iterable[Iterable[int]]) -> Hypergraph:
        out = []
        for e, members in enumerate(edges):
            members = list(members)
            if len(set(members)) != len(members):
                raise ValueError(f"hyperedge {e} has duplicate members")
            out.append(frozenset(members))
        return cls(n_vertices, tuple(out))

    @property
    def size(self) -> int:
        """Combinatorial size |V| + |E|."""
        return self.n_vertices + len(self.edges)


@dataclass(frozen=True)
class HBDParams:
    """Schedule constants for a size bound ``N``.

    ``c1`` scales iterations per epoch, ``c2`` sub-iterations per iteration (the
    latter only matters for the beeping implementation).
    """

    N: int
    c1: float = 4.0
    c2: float = 4.0

    def __post_init__(self) -> None:
        if self.N < 2:
            raise ValueError("N must be at least 2")
        if self.c1 < 1 or self.c2 < 1:
            raise ValueError("c1 and c2 must be at least 1")

    @property
    def epochs(self) -> int:
        return int(math.floor(math.log2(self.N))) + 1

    @property
    def iterations(self) -> int:
        return int(math.ceil(self.c1 * math.log2(self.N)))

    @property
    def sub_iterations(self) -> int:
        return int(math.ceil(self.c2 * math.log2(self.N)))

    @property
    def k(self) -> int:
        return self.epochs * self.iterations

    @property
    def word_width(self) -> int:
        return int(math.ceil(math.log2(self.k + 1)))

    @property
    def subphase_rounds(self) -> int:
        """Rounds of one beeping HBD invocation: 2 rounds per sub-iteration."""
        return self.epochs * self.iterations * self.sub_iterations * 2


@dataclass(frozen=True)
class HBDSolution:
    edge_color: tuple[int | None, ...]
    vertex_colorset: tuple[frozenset[int], ...]
    k: int
    iterations: int


@dataclass(frozen=True)
class Violation:
    edge: int
    kind: str


def color_index(epoch: int, iteration: int, iterations: int) -> int:
    if not 1 <= iteration <= iterations or epoch < 0:
        raise ValueError(f"invalid colour ({epoch}, {iteration})")
    return epoch * iterations + iteration


def color_pair(index: int, iterations: int) -> tuple[int, int]:
    if index < 1:
        raise ValueError(f"invalid colour index {index}")
    epoch, j = divmod(index - 1, iterations)
    return epoch, j + 1


def color_word(index: int, width: int) -> tuple[int, ...]:
    """Fixed-width MSB-first binary of a 1-based colour index."""
    if not 1 <= index <= 2**width - 1:
        raise ValueError(f"colour index {index} not encodable in {width} bits")
    return tuple((index >> (width - 1 - b)) & 1 for b in range(width))


def decode_word(bits: Sequence[int]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | (1 if b else 0)
    return value


def _incidence(h: Hypergraph):
    from scipy.sparse import csr_matrix

    rows, cols = [], []
    for e, members in enumerate(h.edges):
        for u in members:
            rows.append(e)
            cols.append(u)
    data = np.ones(len(rows), dtype=np.int32)
    return csr_matrix((data, (rows, cols)), shape=(len(h.edges), h.n_vertices))


def solve_hbd_abstract(h: Hypergraph, params: HBDParams, seed=None) -> HBDSolution:
    """Exponential-backoff colouring.

    In iteration ``(i, j)`` every vertex joins colour ``(i, j)`` with probability
    ``2**-i``; each still-uncoloured hyperedge takes the colour when exactly one of
    its members joined. Hyperedges may stay uncoloured (``None``) with small
    probability; nothing is retried.
    """
    rng = np.random.default_rng(seed)
    inc = _incidence(h)
    n_edges = len(h.edges)
    edge_color: list[int | None] = [None] * n_edges
    uncolored = np.ones(n_edges, dtype=bool)
    joined: list[list[int]] = [[] for _ in range(h.n_vertices)]
    T = params.iterations
    for i in range(params.epochs):
        p = 2.0**-i
        for j in range(1, T + 1):
            x = rng.random(h.n_vertices) < p
            idx = color_index(i, j, T)
            for u in np.flatnonzero(x):
                joined[u].append(idx)
            if not uncolored.any():
                continue
            hits = inc @ x.astype(np.int32)
            newly = np.flatnonzero(uncolored & (hits == 1))
            for e in newly:
                edge_color[e] = idx
            uncolored[newly] = False
    sol = HBDSolution(tuple(edge_color), tuple(frozenset(c) for c in joined), params.k, T)
    for e, c in enumerate(sol.edge_color):
        if c is not None:
            assert len(witnesses(h, sol, e)) == 1, "colouring without a unique witness"
    return sol


def witnesses(h: Hypergraph, sol: HBDSolution, e: int) -> list[int]:
    c = sol.edge_color[e]
    if c is None:
        return []
    return sorted(u for u in h.edges[e] if c in sol.vertex_colorset[u])


def verify_hbd(h: Hypergraph, sol: HBDSolution) -> list[Violation]:
    """Every constraint violation, one entry per offending hyperedge; empty means feasible."""
    if len(sol.edge_color) != len(h.edges) or len(sol.vertex_colorset) != h.n_vertices:
        raise ValueError("solution shape does not match hypergraph")
    out = []
    for e, members in enumerate(h.edges):
        c = sol.edge_color[e]
        if c is None:
            if members:
                out.append(Violation(e, "uncolored-nonempty"))
            continue
        if not members:
            out.append(Violation(e, "colored-empty"))
            continue
        count = len(witnesses(h, sol, e))
        if count == 0:
            out.append(Violation(e, "zero-witnesses"))
        elif count > 1:
            out.append(Violation(e, "multiple-witnesses"))
    return out


def palette_stats(sol: HBDSolution, h: Hypergraph) -> dict:
    """Palette usage of a solution: epochs/indices used and the uncoloured share."""
    used = [c for c in sol.edge_color if c is not None]
    epochs = Counter(color_pair(c, sol.iterations)[0] for c in used)
    nonempty = sum(1 for members in h.edges if members)
    uncolored = sum(1 for e, members in enumerate(h.edges) if members and sol.edge_color[e] is None)
    return {
        "k": sol.k,
        "max_epoch_used": max(epochs) if epochs else 0,
        "max_index_used": max(used) if used else 0,
        "epoch_histogram": {int(i): int(c) for i, c in sorted(epochs.items())},
        "fraction_uncolored": uncolored / nonempty if nonempty else 0.0,
    }


def load_hypergraph(text: str) -> Hypergraph:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append((lineno, line))
    if not lines:
        raise HypergraphFormatError("empty hypergraph file")

    def ints(lineno, line):
        try:
            return [int(x) for x in line.split()]
        except ValueError:
            raise HypergraphFormatError(f"line {lineno}: non-integer token in {line!r}") from None

    lineno, header = lines[0]
    head = ints(lineno, header)
    if len(head) != 2 or head[0] < 0 or head[1] < 0:
        raise HypergraphFormatError(f"line {lineno}: bad header {header!r}")
    nv, ne = head
    if len(lines) - 1 != ne:
        raise HypergraphFormatError(f"header announces {ne} hyperedges, found {len(lines) - 1}")
    edges = []
    for lineno, line in lines[1:]:
        vals = ints(lineno, line)
        if not vals or vals[0] != len(vals) - 1:
            raise HypergraphFormatError(f"line {lineno}: degree does not match member count")
        members = vals[1:]
        if any(not 0 <= u < nv for u in members):
            raise HypergraphFormatError(f"line {lineno}: vertex id out of range [0, {nv})")
        if len(set(members)) != len(members):
            raise HypergraphFormatError(f"line {lineno}: duplicate member")
        edges.append(frozenset(members))
    return Hypergraph(nv, tuple(edges))


def save_hypergraph(h: Hypergraph) -> str:
    lines = [f"{h.n_vertices} {len(h.edges)}"]
    for members in h.edges:
        lines.append(" ".join(str(x) for x in [len(members), *sorted(members)]))
    return "\n".join(lines) + "\n"


def random_hypergraph(n_vertices: int, n_edges: int, max_rank: int, seed=None) -> Hypergraph:
    """Hyperedges with ranks uniform in ``0..max_rank`` (capped at ``n_vertices``)."""
    rng = np.random.default_rng(seed)
    edges = []
    for _ in range(n_edges):
        r = int(rng.integers(0, min(max_rank, n_vertices) + 1))
        edges.append(frozenset(int(u) for u in rng.choice(n_vertices, size=r, replace=False)))
    return Hypergraph(n_vertices, tuple(edges))
