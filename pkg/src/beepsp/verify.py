"""Brute-force oracles for every phase postcondition.

Everything here works from BFS distances and set arithmetic on the ground-truth
graph; nothing calls into the protocol code, so agreement is evidence.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .graph import Graph, bfs_distances, bfs_layers
from .hbd import HBDParams

__all__ = [
    "Verdict",
    "SPMembership",
    "compute_sp_sets",
    "check_single_path",
    "check_spt",
    "check_wakeup",
    "check_theorem5_conditions",
    "check_round_formulas",
    "check_lemma8",
    "check_lemma9",
]


@dataclass
class Verdict:
    name: str
    ok: bool = True
    violations: list[str] = field(default_factory=list)

    def fail(self, message: str) -> Verdict:
        self.ok = False
        self.violations.append(message)
        return self

    @property
    def reason(self) -> str | None:
        return self.violations[0] if self.violations else None

    def to_dict(self) -> dict[str, Any]:
        return {"ok": self.ok, "reason": self.reason, "violations": self.violations[:20]}

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class SPMembership:
    """``sp[i]`` is SP_i for ``i`` in ``1..d_max``."""

    dist: tuple[int, ...]
    d_max: int
    sp: Mapping[int, frozenset[int]]

    def bits(self, v: int) -> tuple[int, ...]:
        return tuple(int(v in self.sp[i]) for i in range(1, self.d_max + 1))

    def union(self, J: Iterable[int]) -> frozenset[int]:
        out: set[int] = set()
        for j in J:
            out |= self.sp.get(j, frozenset())
        return frozenset(out)


def compute_sp_sets(g: Graph, s: int, Y: Iterable[int]) -> SPMembership:
    """v ∈ SP_i iff d(s, v) + d(v, y) = i for some destination y with d(s, y) = i."""
    lay = bfs_layers(g, s)
    dist = np.asarray(lay.dist)
    members: dict[int, set[int]] = {i: set() for i in range(1, lay.d_max + 1)}
    for y in sorted(set(Y)):
        i = int(dist[y])
        if i == 0:
            continue
        dy = np.asarray(bfs_distances(g, y))
        members[i].update(int(v) for v in np.flatnonzero(dist + dy == i))
    return SPMembership(tuple(int(d) for d in dist), lay.d_max, {i: frozenset(m) for i, m in members.items()})


def _targets(dist: Sequence[int], Y: Iterable[int], J: Iterable[int]) -> frozenset[int]:
    J = set(J)
    return frozenset(y for y in Y if dist[y] in J)


def check_single_path(g: Graph, s: int, Y: Iterable[int], J: Iterable[int], z: Sequence[int]) -> Verdict:
    """The 1-nodes must be one node per layer 0..d(s, y) for a target y, consecutive ones adjacent."""
    out = Verdict("single_path")
    dist = bfs_layers(g, s).dist
    YJ = _targets(dist, Y, J)
    ones = [v for v in range(g.n) if z[v]]
    if s not in ones:
        return out.fail("source not selected")
    by_layer: dict[int, list[int]] = {}
    for v in ones:
        by_layer.setdefault(dist[v], []).append(v)
    m = max(by_layer)
    for i in range(m + 1):
        nodes = by_layer.get(i, [])
        if len(nodes) != 1:
            return out.fail(f"layer {i} has {len(nodes)} selected nodes")
    for i in range(1, m + 1):
        if by_layer[i - 1][0] not in g.neighbors(by_layer[i][0]):
            return out.fail(f"selected nodes in layers {i - 1} and {i} are not adjacent")
    end = by_layer[m][0]
    if end not in YJ:
        return out.fail(f"path ends at node {end}, which is not a target destination")
    return out


def _forest_violations(
    g: Graph, dist: Sequence[int], Z: set[int], YJ: frozenset[int], lo: int, hi: int
) -> list[str]:
    """Selected nodes in layers lo..hi must be a union of layer-monotone shortest paths
    from targets down to layer lo: every node above lo has a selected parent and the
    parent layers can be chosen so that every non-target node gets a child."""
    problems = []
    layer: dict[int, list[int]] = {}
    for v in Z:
        if lo <= dist[v] <= hi:
            layer.setdefault(dist[v], []).append(v)
    for x in range(lo + 1, hi + 1):
        for v in layer.get(x, []):
            if not any(u in Z and dist[u] == x - 1 for u in g.neighbors(v)):
                problems.append(f"node {v} (layer {x}) has no selected neighbour one layer closer")
    for x in range(lo, hi + 1):
        parents = sorted(v for v in layer.get(x, []) if v not in YJ)
        if not parents:
            continue
        children = sorted(layer.get(x + 1, []))
        col = {v: i for i, v in enumerate(children)}
        rows, cols = [], []
        for r, v in enumerate(parents):
            for u in g.neighbors(v):
                if u in col:
                    rows.append(r)
                    cols.append(col[u])
        if not children:
            problems.append(f"non-target node(s) {parents[:3]} in layer {x} lie on no path to a target")
            continue
        bi = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(len(parents), len(children)))
        match = maximum_bipartite_matching(bi, perm_type="column")
        stray = [parents[r] for r in np.flatnonzero(match < 0)]
        if stray:
            problems.append(f"node(s) {stray[:3]} in layer {x} cannot each keep a distinct child (stray branch)")
    return problems


def check_spt(g: Graph, s: int, Y: Iterable[int], J: Iterable[int], z: Sequence[int]) -> Verdict:
    """The 1-nodes must form a Y_J-spanning shortest-path tree rooted at ``s`` with no stray branches."""
    out = Verdict("spt")
    dist = bfs_layers(g, s).dist
    YJ = _targets(dist, Y, J)
    Z = {v for v in range(g.n) if z[v]}
    if s not in Z:
        out.fail("source not selected")
    missing = sorted(YJ - Z)
    if missing:
        out.fail(f"target destinations not spanned: {missing[:5]}")
    if not Z:
        return out
    for msg in _forest_violations(g, dist, Z, YJ, 0, max(dist[v] for v in Z)):
        out.fail(msg)
    return out


def check_lemma8(
    g: Graph, s: int, Y: Iterable[int], J: Iterable[int], activation_iter: Sequence[int | None]
) -> Verdict:
    """After every iteration l, active nodes form a shortest path from s to a node of
    SP_J in layer l, or to a target destination in an earlier layer."""
    out = Verdict("lemma8")
    J = frozenset(J)
    if not J:
        return out
    sp = compute_sp_sets(g, s, Y)
    dist = sp.dist
    spj = sp.union(J)
    YJ = _targets(dist, Y, J)
    for ell in range(0, max(J) + 1):
        active = [v for v, it in enumerate(activation_iter) if it is not None and it <= ell]
        layers: dict[int, list[int]] = {}
        for v in active:
            layers.setdefault(dist[v], []).append(v)
        if not layers or 0 not in layers:
            return out.fail(f"iteration {ell}: source not active")
        m = max(layers)
        bad = [i for i in range(m + 1) if len(layers.get(i, [])) != 1]
        if bad:
            return out.fail(f"iteration {ell}: layer {bad[0]} has {len(layers.get(bad[0], []))} active nodes")
        if any(layers[i - 1][0] not in g.neighbors(layers[i][0]) for i in range(1, m + 1)):
            return out.fail(f"iteration {ell}: active nodes are not a path")
        end = layers[m][0]
        if m == ell:
            if end not in spj:
                return out.fail(f"iteration {ell}: endpoint {end} not in SP_J")
        elif m > ell or end not in YJ:
            return out.fail(f"iteration {ell}: path stopped at layer {m} without reaching a target")
    return out


def check_lemma9(
    g: Graph, s: int, Y: Iterable[int], J: Iterable[int], activation_iter: Sequence[int | None]
) -> Verdict:
    """After every iteration l, active nodes in layers >= j_max - l form a forest of
    shortest paths from the targets there to roots in SP_J ∩ L_{j_max - l}."""
    out = Verdict("lemma9")
    J = frozenset(J)
    if not J:
        return out
    sp = compute_sp_sets(g, s, Y)
    dist = sp.dist
    spj = sp.union(J)
    YJ = _targets(dist, Y, J)
    j_max = max(J)
    for ell in range(0, j_max + 1):
        lo = j_max - ell
        Z = {v for v, it in enumerate(activation_iter) if it is not None and it <= ell}
        early = sorted(v for v in Z if dist[v] < lo and v not in YJ)
        if early:
            out.fail(f"iteration {ell}: nodes {early[:3]} active below layer {lo}")
        missing = sorted(y for y in YJ if dist[y] >= lo and y not in Z)
        if missing:
            out.fail(f"iteration {ell}: targets {missing[:3]} not active")
        roots = sorted(v for v in Z if dist[v] == lo and v not in spj)
        if roots:
            out.fail(f"iteration {ell}: roots {roots[:3]} outside SP_J")
        for msg in _forest_violations(g, dist, Z, YJ, lo, j_max):
            out.fail(f"iteration {ell}: {msg}")
        if not out.ok:
            return out
    return out


def check_wakeup(
    g: Graph,
    s: int,
    Y: Iterable[int],
    knowledge: Sequence[Any],
    phase_starts: Mapping[str, Sequence[int | None]] | None = None,
) -> Verdict:
    """Learned distances, eccentricity, sp arrays and the source's three-silent round
    against the oracle; all nodes must leave each synchronised subphase together."""
    out = Verdict("wakeup")
    sp = compute_sp_sets(g, s, Y)
    for v, kn in enumerate(knowledge):
        if kn.d_v != sp.dist[v]:
            out.fail(f"node {v}: learned distance {kn.d_v}, true {sp.dist[v]}")
        if kn.d_max != sp.d_max:
            out.fail(f"node {v}: learned d_max {kn.d_max}, true {sp.d_max}")
        elif tuple(kn.sp) != sp.bits(v):
            out.fail(f"node {v}: sp {tuple(kn.sp)} but oracle {sp.bits(v)}")
    est = knowledge[s].estimate
    if est is not None:
        if est.r is None or est.r % 3 or est.r // 3 - 1 != sp.d_max:
            out.fail(f"source three-silent round r={est.r} inconsistent with d_max={sp.d_max}")
    if phase_starts is not None:
        for tag in ("wakeup.3", "wakeup.4"):
            starts = set(phase_starts.get(tag, [None]))
            if len(starts) != 1 or None in starts:
                out.fail(f"nodes start {tag} in different rounds: {sorted(x for x in starts if x)[:5]}")
        ends = set()
        for v in range(g.n):
            nxt = [phase_starts.get(t, [None] * g.n)[v] for t in ("pre.out0", "end")]
            ends.add(next((x for x in nxt if x is not None), None))
        if len(ends) != 1 or None in ends:
            out.fail("nodes do not end the wake-up phase in the same round")
    return out


def check_theorem5_conditions(
    g: Graph, s: int, spj: Iterable[int], knowledge: Sequence[Any], k: int | None = None
) -> Verdict:
    """The four preprocessing conditions over the SP_J-induced layered graph."""
    out = Verdict("theorem5")
    dist = bfs_layers(g, s).dist
    members = frozenset(spj)

    def nbrs(v: int, layer: int) -> list[int]:
        return [u for u in g.neighbors(v) if u in members and dist[u] == layer]

    for v in sorted(members):
        kn = knowledge[v]
        i = dist[v]
        outward = nbrs(v, i + 1)
        inward = nbrs(v, i - 1)
        for name, c in (("c_out", kn.c_out), ("c_in", kn.c_in)):
            if c is not None and (c < 1 or (k is not None and c > k)):
                out.fail(f"node {v}: {name}={c} outside the palette")
        if (kn.c_out is None) != (not outward):
            out.fail(f"node {v}: condition 1 (c_out={kn.c_out}, {len(outward)} outward SP_J neighbours)")
        if (kn.c_in is None) != (i == 0):
            out.fail(f"node {v}: condition 2 (c_in={kn.c_in} at layer {i})")
        if kn.c_out is not None:
            hits = [u for u in outward if kn.c_out in knowledge[u].cs_out]
            if len(hits) != 1:
                out.fail(f"node {v}: condition 3 ({len(hits)} outward witnesses)")
        if kn.c_in is not None:
            hits = [u for u in inward if kn.c_in in knowledge[u].cs_in]
            if len(hits) != 1:
                out.fail(f"node {v}: condition 4 ({len(hits)} inward witnesses)")
    return out


def check_round_formulas(
    rounds: Mapping[str, int], params: HBDParams, d_max: int, J: Iterable[int], task: str
) -> Verdict:
    """Exact phase lengths implied by the schedule structure."""
    out = Verdict("round_formulas")
    J = frozenset(J)
    expected = {"wakeup.3": 3 * (4 * d_max - 2)}
    if J:
        j_max = max(J)
        expected["preprocessing"] = 6 * params.epochs * params.iterations * params.sub_iterations * 2
        expected["construction"] = j_max * (params.word_width if task == "single" else params.k)
    else:
        expected["preprocessing"] = 0
        expected["construction"] = 0
    for key, want in expected.items():
        got = rounds.get(key)
        if got != want:
            out.fail(f"{key}: expected {want} rounds, measured {got}")
    return out
