import numpy as np
import pytest

from beepsp.graph import bfs_layers, gen_graph
from beepsp.primitives import (
    BEEP,
    beep_wave_broadcast,
    broadcast_rounds,
    diameter_word_width,
    estimate_diameter,
    reverse_beep_wave,
    triplet_simulate,
)
from beepsp.sim import Context, FragmentProgram, check_conformance, run_simulation


def run_all(g, factories, max_rounds=100_000):
    progs = [FragmentProgram(f, Context()) for f in factories]
    sched = {v: 1 for v in range(g.n)}
    tr = run_simulation(g, progs, sched, max_rounds)
    assert check_conformance(tr, g, sched) == []
    return tr


def broadcast(n, message):
    g = gen_graph("path", {"n": n})
    d_max = n - 1
    fac = [
        (lambda c, v=v: beep_wave_broadcast(message if v == 0 else None, v, len(message), d_max))
        for v in range(n)
    ]
    return run_all(g, fac)


@pytest.mark.parametrize("n, message", [(3, (1,)), (5, (1, 0, 1)), (4, (0, 0, 0)), (6, (1, 1, 0, 1))])
def test_beep_wave_broadcast(n, message):
    tr = broadcast(n, message)
    assert all(out == message for out in tr.outputs)
    assert all(f == broadcast_rounds(len(message), n - 1) for f in tr.finish_round)
    if not any(message):
        assert tr.beep_count() == 0


def test_broadcast_relays_one_hop_per_slot():
    tr = broadcast(3, (1,))
    beeps = sorted((int(r) + 1, int(v)) for r, v in zip(*np.nonzero(tr.actions == BEEP)))
    assert beeps == [(1, 0), (2, 1), (3, 2)]


def reverse(n, initiators):
    g = gen_graph("path", {"n": n})
    triplets = 4 * (n - 1) - 2
    fac = [(lambda c, v=v: reverse_beep_wave(v, triplets, frozenset(initiators.get(v, ())))) for v in range(n)]
    return run_all(g, fac)


def test_reverse_wave_three_path():
    tr = reverse(3, {2: {1}})
    kinds = [[(e.triplet, e.kind) for e in out] for out in tr.outputs]
    assert kinds == [[(3, "relay")], [(2, "relay")], [(1, "initiate")]]


def test_reverse_wave_ignores_inner_layer():
    tr = reverse(3, {0: {1}})
    assert tr.outputs[1] == [] and tr.outputs[2] == []


def test_pipelined_reverse_waves_stay_separated():
    tr = reverse(10, {9: {1, 4}})
    assert [e.triplet for e in tr.outputs[0]] == [10, 13]
    for t in range(tr.rounds // 3):
        beepers = np.flatnonzero((tr.actions[3 * t : 3 * t + 3] == BEEP).any(axis=0))
        for a in beepers:
            for b in beepers:
                assert a == b or abs(int(a) - int(b)) >= 3


def estimate(g, s=0):
    width = diameter_word_width(g.n)
    fac = [(lambda c, v=v: triplet_simulate(estimate_diameter(v == s, width))) for v in range(g.n)]
    return run_all(g, fac)


def test_estimate_diameter_three_path():
    tr = estimate(gen_graph("path", {"n": 3}))
    src = tr.outputs[0]
    assert (src.r, src.d_max, src.violations) == (9, 2, [])
    assert [o.d_v for o in tr.outputs] == [0, 1, 2]
    assert {o.d_max for o in tr.outputs} == {2}


def test_estimate_diameter_two_path():
    tr = estimate(gen_graph("path", {"n": 2}))
    assert tr.outputs[1].d_v == 1
    assert tr.outputs[0].d_max == 1 and tr.outputs[0].r == 6


@pytest.mark.parametrize("seed", range(5))
def test_estimate_diameter_random_graph_finishes_together(seed):
    g = gen_graph("random_gnp", {"n": 30, "p": 0.12}, seed)
    s = seed % g.n
    tr = estimate(g, s)
    lay = bfs_layers(g, s)
    assert [o.d_v for o in tr.outputs] == list(lay.dist)
    assert {o.d_max for o in tr.outputs} == {lay.d_max}
    assert len({int(f) for f in tr.finish_round}) == 1
    assert all(not o.violations for o in tr.outputs)
