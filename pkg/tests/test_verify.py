import itertools
import random

import pytest

from beepsp.experiment import run_instance
from beepsp.graph import Graph, bfs_distances, gen_graph
from beepsp.hbd import HBDParams
from beepsp.protocol import ProtocolConfig
from beepsp.verify import (
    check_round_formulas,
    check_single_path,
    check_spt,
    check_theorem5_conditions,
    compute_sp_sets,
)

PATH3 = gen_graph("path", {"n": 3})
DIAMOND = Graph.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])
FORK = Graph.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 4)])  # s; a, b; y1, y2


def test_sp_sets():
    sp = compute_sp_sets(PATH3, 0, {2})
    assert sp.sp[2] == {0, 1, 2} and sp.sp[1] == frozenset()
    assert compute_sp_sets(gen_graph("cycle", {"n": 4}), 0, {2}).sp[2] == {0, 1, 2, 3}
    empty = compute_sp_sets(PATH3, 0, set())
    assert all(not m for m in empty.sp.values())
    assert sp.union({1, 2}) == {0, 1, 2}
    assert sp.bits(1) == (0, 1)


def test_single_path_examples():
    assert check_single_path(PATH3, 0, {2}, {2}, [1, 1, 1])
    v = check_single_path(DIAMOND, 0, {3}, {2}, [1, 1, 1, 1])
    assert not v and "layer 1" in v.reason
    assert not check_single_path(PATH3, 0, {2}, {2}, [0, 1, 1])
    assert not check_single_path(PATH3, 0, {2}, {2}, [1, 1, 0])
    assert not check_single_path(PATH3, 0, {2}, {1}, [1, 1, 1])


def test_spt_examples():
    assert check_spt(FORK, 0, {3, 4}, {2}, [1] * 5)
    stray = Graph.from_edges(6, FORK.edges() + [(0, 5)])
    v = check_spt(stray, 0, {3, 4}, {2}, [1] * 6)
    assert not v and "stray" in v.reason
    v = check_spt(FORK, 0, {3, 4}, {2}, [1, 1, 1, 1, 0])
    assert not v and "not spanned" in v.reason


def test_round_formulas():
    p = HBDParams(64)
    assert 6 * p.epochs * p.iterations * p.sub_iterations * 2 == 48384
    good = {"wakeup.3": 54, "preprocessing": 48384, "construction": 3 * p.word_width}
    assert check_round_formulas(good, p, 5, {3}, "single")
    assert not check_round_formulas({**good, "wakeup.3": 53}, p, 5, {3}, "single")
    assert check_round_formulas({**good, "construction": 3 * p.k}, p, 5, {3}, "tree")
    assert check_round_formulas({"wakeup.3": 54, "preprocessing": 0, "construction": 0}, p, 5, set(), "single")


def test_theorem5_checker_fault_injection():
    c = ProtocolConfig.make(3)
    _, run = run_instance(PATH3, 0, {2}, None, c, seed=0)
    kn = run.knowledge
    assert check_theorem5_conditions(PATH3, 0, {0, 1, 2}, kn, c.hbd.k)
    assert kn[0].c_in is None
    kn[1].cs_out = frozenset()
    v = check_theorem5_conditions(PATH3, 0, {0, 1, 2}, kn, c.hbd.k)
    assert not v and any("condition 3" in m for m in v.violations)
    kn[0].c_in = 1
    v = check_theorem5_conditions(PATH3, 0, {0, 1, 2}, kn, c.hbd.k)
    assert any("condition 2" in m for m in v.violations)


# -- oracle meta-test: exhaustive enumeration on small graphs -------------------


def shortest_paths(g, s, t):
    dist = bfs_distances(g, s)

    def walk(v):
        if v == s:
            yield [s]
            return
        for u in g.neighbors(v):
            if dist[u] == dist[v] - 1:
                for p in walk(u):
                    yield p + [v]

    return list(walk(t))


def brute_single(g, s, YJ, Z):
    return any(set(p) == Z for y in YJ for p in shortest_paths(g, s, y))


def brute_spt(g, s, YJ, Z):
    if s not in Z or not YJ <= Z:
        return False
    dist = bfs_distances(g, s)
    others = sorted(Z - {s})
    choices = [[u for u in g.neighbors(v) if u in Z and dist[u] == dist[v] - 1] for v in others]
    for parents in itertools.product(*choices):
        has_child = {p for p in parents}
        if all(v in has_child or v in YJ for v in Z):
            return True
    return False


def small_graphs(count, seed=0):
    rnd = random.Random(seed)
    for _ in range(count):
        n = rnd.randint(2, 8)
        edges = {(rnd.randrange(v), v) for v in range(1, n)}
        edges |= {(u, v) for u in range(n) for v in range(u + 1, n) if rnd.random() < 0.3}
        yield Graph.from_edges(n, edges)


@pytest.mark.parametrize("seed", range(4))
def test_oracles_match_exhaustive_enumeration(seed):
    rnd = random.Random(100 + seed)
    for g in small_graphs(12, seed):
        dist = bfs_distances(g, 0)
        Y = set(rnd.sample(range(1, g.n), rnd.randint(1, g.n - 1)))
        J = {dist[y] for y in Y if rnd.random() < 0.7} or {dist[min(Y)]}
        YJ = {y for y in Y if dist[y] in J}
        for mask in range(1, 2**g.n):
            z = [(mask >> v) & 1 for v in range(g.n)]
            Z = {v for v in range(g.n) if z[v]}
            assert bool(check_single_path(g, 0, Y, J, z)) == brute_single(g, 0, YJ, Z), (g, Y, J, z)
            assert bool(check_spt(g, 0, Y, J, z)) == brute_spt(g, 0, YJ, Z), (g, Y, J, z)
