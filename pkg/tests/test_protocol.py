import numpy as np
import pytest

from beepsp.experiment import run_instance
from beepsp.graph import Graph, bfs_layers, embed_hypergraph, gen_graph
from beepsp.hbd import HBDParams, Hypergraph
from beepsp.primitives import BEEP, IDLE, LISTEN
from beepsp.protocol import (
    DistancePolicy,
    ProtocolConfig,
    apply_policy,
    beeping_hbd_edge,
    beeping_hbd_vertex,
    hbd_role,
    run_full_protocol,
)
from beepsp.sim import Context, FragmentProgram, run_simulation
from beepsp.verify import check_theorem5_conditions, compute_sp_sets

PATH3 = gen_graph("path", {"n": 3})
DIAMOND = Graph.from_edges(4, [(0, 1), (0, 2), (1, 3), (2, 3)])  # s=0, a=1, b=2, y=3


def cfg(n, task="single", policy="all"):
    return ProtocolConfig.make(max(n, 2), task, policy)


# -- policies -----------------------------------------------------------------


def test_apply_policy():
    assert apply_policy(DistancePolicy.parse("min"), {2, 5}) == {2}
    assert apply_policy(DistancePolicy.parse("max"), {2, 5}) == {5}
    assert apply_policy(DistancePolicy.parse("all"), {3}) == {3}
    assert apply_policy(DistancePolicy.parse("fixed:7"), {2, 5}) == frozenset()
    assert apply_policy(DistancePolicy.parse("fixed:2,7"), {2, 5}) == {2}
    assert str(DistancePolicy.parse("fixed:5,2")) == "fixed:2,5"
    with pytest.raises(ValueError):
        DistancePolicy.parse("median")
    with pytest.raises(ValueError):
        DistancePolicy.parse("fixed:a")


def test_hbd_roles_pair_layers():
    # out: lower layer listens (edge side); in: upper layer listens
    assert hbd_role("out", 0, 0, 2) == "edge" and hbd_role("out", 0, 1, 2) == "vertex"
    assert hbd_role("in", 0, 0, 2) == "vertex" and hbd_role("in", 0, 1, 2) == "edge"
    assert hbd_role("out", 2, 2, 2) is None  # no layer above d_max
    assert hbd_role("out", 1, 2, 5) == "vertex" and hbd_role("out", 1, 0, 5) is None


def test_input_validation():
    c = cfg(3)
    for args in [(0, {0}), (0, set()), (5, {1}), (0, {7})]:
        with pytest.raises(ValueError):
            run_full_protocol(PATH3, args[0], args[1], None, c)
    with pytest.raises(ValueError):
        run_full_protocol(PATH3, 0, {2}, {1: 1}, c)  # schedule must name destinations
    with pytest.raises(ValueError):
        run_full_protocol(PATH3, 0, {2}, {2: 3}, c)  # earliest wake-up must be round 1
    with pytest.raises(ValueError):
        run_full_protocol(gen_graph("path", {"n": 5}), 0, {4}, None, ProtocolConfig.make(3))
    with pytest.raises(ValueError):
        run_full_protocol(Graph.from_edges(3, [(0, 1)]), 0, {1}, None, c)


# -- wake-up ------------------------------------------------------------------


def test_wakeup_three_path():
    run = run_full_protocol(PATH3, 0, {2}, None, cfg(3), wakeup_only=True)
    kn = run.knowledge
    assert [k.d_v for k in kn] == [0, 1, 2]
    assert {k.d_max for k in kn} == {2}
    assert kn[0].occupied == {2} and kn[0].J == {2}
    assert all(k.in_spj for k in kn)
    assert kn[0].estimate.r == 9
    assert run.rounds["wakeup.3"] == 3 * (4 * 2 - 2)


def test_wakeup_four_cycle_opposite():
    run = run_full_protocol(gen_graph("cycle", {"n": 4}), 0, {2}, None, cfg(4), wakeup_only=True)
    assert all(k.sp == (0, 1) for k in run.knowledge)
    assert all(k.in_spj for k in run.knowledge)


def test_wakeup_star():
    g = Graph.from_edges(6, [(0, v) for v in range(1, 6)])
    run = run_full_protocol(g, 0, {1, 2, 3}, {1: 1, 2: 4, 3: 9}, cfg(6), wakeup_only=True)
    kn = run.knowledge
    assert kn[0].occupied == {1} and kn[0].J == {1}
    assert [k.in_spj for k in kn] == [True, True, True, True, False, False]
    starts = run.phase_starts["wakeup.4"]
    assert len(set(starts)) == 1


def test_late_wake_event_is_ignored():
    g = gen_graph("path", {"n": 6})
    run = run_full_protocol(g, 0, {2, 5}, {5: 1, 2: 400}, cfg(6), wakeup_only=True)
    assert run.failure is None
    assert run.trace.wake_round[2] < 400


# -- beeping HBD gadgets ------------------------------------------------------


def run_gadget(n_beepers, seed, params=HBDParams(4)):
    h = Hypergraph.from_lists(max(1, n_beepers), [list(range(n_beepers))] if n_beepers else [[0]])
    g, emb = embed_hypergraph(h)

    def silent(ctx):
        yield np.full(params.subphase_rounds, IDLE, dtype=np.int8)

    progs = []
    for v in range(g.n):
        role = emb.role[v][0]
        if role == "vertex" and n_beepers:
            progs.append(FragmentProgram(lambda c: beeping_hbd_vertex(params, c.rng), Context()))
        elif role == "edge":
            progs.append(FragmentProgram(lambda c: beeping_hbd_edge(params), Context()))
        else:
            progs.append(FragmentProgram(silent, Context()))
    tr = run_simulation(g, progs, {v: 1 for v in range(g.n)}, params.subphase_rounds + 1, seed)
    return tr.outputs[emb.edge_node[0]], [tr.outputs[x] for x in emb.vertex_node]


def test_single_beeper_always_colors_first_iteration():
    for seed in range(50):
        color, (cs,) = run_gadget(1, seed)
        assert color == 1 and 1 in cs


def test_no_beeper_never_colors():
    for seed in range(10):
        assert run_gadget(0, seed)[0] is None


def test_two_beepers_rarely_falsely_colored():
    params = HBDParams(4)
    false = sum(run_gadget(2, seed, params)[0] == 1 for seed in range(400))
    assert false / 400 <= 2.0**-params.sub_iterations + 0.03


# -- full pipeline ------------------------------------------------------------


def test_three_path_single():
    summary, run = run_instance(PATH3, 0, {2}, None, cfg(3), seed=1)
    assert summary.success, summary.failure_reason
    assert run.z == [1, 1, 1]
    kn = run.knowledge
    assert kn[0].c_out in kn[1].cs_out and kn[1].c_out in kn[2].cs_out
    assert kn[2].c_in in kn[1].cs_in and kn[1].c_in in kn[0].cs_in
    assert kn[0].c_in is None and kn[2].c_out is None
    assert run.rounds["construction"] == 2 * cfg(3).hbd.word_width


def test_preprocessing_round_count():
    run = run_full_protocol(PATH3, 0, {2}, None, cfg(3), seed=2)
    p = cfg(3).hbd
    assert run.rounds["preprocessing"] == 6 * p.epochs * p.iterations * p.sub_iterations * 2


def test_diamond_single_and_in_witness():
    for seed in range(5):
        summary, run = run_instance(DIAMOND, 0, {3}, None, cfg(4), seed=seed)
        assert summary.success, summary.failure_reason
        assert run.z[0] == run.z[3] == 1 and run.z[1] + run.z[2] == 1
        c = run.knowledge[3].c_in
        assert sum(c in run.knowledge[v].cs_in for v in (1, 2)) == 1


def test_destination_stops_early_path():
    # y1 at layer 1, y3 at layer 3 (path behind y1 only through another branch)
    g = Graph.from_edges(5, [(0, 1), (0, 2), (2, 3), (3, 4)])
    for seed in range(5):
        summary, run = run_instance(g, 0, {1, 4}, None, cfg(5, policy="fixed:1,3"), seed=seed)
        assert summary.success, summary.failure_reason
        assert run.z in ([1, 1, 0, 0, 0], [1, 0, 1, 1, 1])


def test_tree_star_of_paths():
    g = Graph.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 4)])
    summary, run = run_instance(g, 0, {3, 4}, None, cfg(5, "tree"), seed=3)
    assert summary.success, summary.failure_reason
    assert run.z == [1] * 5
    assert run.rounds["construction"] == 2 * cfg(5).hbd.k


def test_tree_diamond_with_tail():
    g = Graph.from_edges(5, [(0, 1), (0, 2), (1, 3), (2, 3), (3, 4)])
    summary, run = run_instance(g, 0, {4}, None, cfg(5, "tree"), seed=0)
    assert summary.success, summary.failure_reason
    assert sum(run.z) == 4


def test_tree_k23_two_destinations_share_layer():
    g = Graph.from_edges(6, [(0, 1), (0, 2)] + [(a, b) for a in (1, 2) for b in (3, 4, 5)])
    summary, run = run_instance(g, 0, {3, 4}, None, cfg(6, "tree"), seed=5)
    assert summary.success, summary.failure_reason
    spj = compute_sp_sets(g, 0, {3, 4}).union(run.J)
    assert check_theorem5_conditions(g, 0, spj, run.knowledge, cfg(6).hbd.k)


def test_empty_target_set_skips_construction():
    summary, run = run_instance(PATH3, 0, {2}, None, cfg(3, policy="fixed:1"), seed=0)
    assert summary.success
    assert run.z == [0, 0, 0]
    assert run.rounds["preprocessing"] == 0 and run.rounds["construction"] == 0


def test_no_cross_pair_interference():
    g = gen_graph("path", {"n": 10})
    run = run_full_protocol(g, 0, {9}, None, cfg(10), seed=4)
    assert run.failure is None
    tr, dist = run.trace, bfs_layers(g, 0).dist
    lo, hi = min(run.phase_starts["pre.out0"]), min(run.phase_starts["path"]) - 1
    for r in range(lo, hi + 1):
        beepers = np.flatnonzero(tr.actions[r - 1] == BEEP)
        listeners = np.flatnonzero(tr.actions[r - 1] == LISTEN)
        tag = tr.tag_at(int(listeners[0]), r) if len(listeners) else None
        for v in listeners:
            for u in beepers:
                if u in g.neighbors(v):
                    want = dist[v] + 1 if tag.startswith("pre.out") else dist[v] - 1
                    assert dist[u] == want, (r, v, u)


def test_random_tree_runs():
    ok = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        g = gen_graph("random_gnp", {"n": 20, "p": 0.2}, seed)
        Y = set(int(x) for x in rng.choice(np.arange(1, 20), size=3, replace=False))
        summary, _ = run_instance(g, 0, Y, None, cfg(20, "tree"), seed=seed, conformance=False)
        ok += summary.success
    assert ok >= 99


def test_determinism():
    a = run_full_protocol(DIAMOND, 0, {3}, None, cfg(4), seed=7)
    b = run_full_protocol(DIAMOND, 0, {3}, None, cfg(4), seed=7)
    assert np.array_equal(a.trace.actions, b.trace.actions) and a.z == b.z
