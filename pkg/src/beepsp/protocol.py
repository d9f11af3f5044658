"""The three-phase shortest-path pipeline as beeping-model node programs.

Every node runs the same program; the only inputs are whether it is the source,
whether it is a destination, and the shared :class:`ProtocolConfig`. Phases:

* wake-up (four subphases): synchronisation wave, triplet-simulated diameter
  estimation, pipelined reverse waves computing ``sp_v``, broadcast of ``J``;
* preprocessing: six beeping-HBD subphases producing ``c_out/cs_out/c_in/cs_in``;
* construction: a single path grown outward, or a tree grown inward.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .graph import Graph, bfs_layers
from .hbd import HBDParams, color_word, decode_word
from .primitives import (
    BEEP,
    IDLE,
    LISTEN,
    DiameterEstimate,
    beep_wave_broadcast,
    broadcast_rounds,
    diameter_word_width,
    estimate_diameter,
    hit_index,
    plan,
    reverse_beep_wave,
    triplet_simulate,
    watched,
)
from .sim import FragmentProgram, Observation, SimulationTimeout, Trace, WakeSchedule, run_simulation

__all__ = [
    "DistancePolicy",
    "apply_policy",
    "ProtocolConfig",
    "NodeKnowledge",
    "NodeContext",
    "ProtocolRun",
    "PREPROCESSING_SUBPHASES",
    "hbd_role",
    "wakeup",
    "beeping_hbd_vertex",
    "beeping_hbd_edge",
    "preprocessing",
    "single_path",
    "tree",
    "make_node_program",
    "run_full_protocol",
    "round_budget",
]

TASKS = ("single", "tree")
PREPROCESSING_SUBPHASES = (("out", 0), ("in", 0), ("out", 1), ("in", 1), ("out", 2), ("in", 2))


def _idle(rounds: int) -> np.ndarray:
    return np.full(rounds, IDLE, dtype=np.int8)


def _listen(rounds: int) -> np.ndarray:
    return np.full(rounds, LISTEN, dtype=np.int8)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DistancePolicy:
    """Source-private map from occupied layer indices ``I`` to targets ``J ⊆ I``."""

    kind: str
    fixed: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        if self.kind not in ("min", "max", "all", "fixed"):
            raise ValueError(f"unknown distance policy {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> DistancePolicy:
        text = text.strip().lower()
        if text.startswith("fixed:"):
            body = text.split(":", 1)[1]
            try:
                values = frozenset(int(x) for x in body.split(",") if x.strip())
            except ValueError:
                raise ValueError(f"bad fixed policy {text!r}") from None
            return cls("fixed", values)
        return cls(text)

    def __str__(self) -> str:
        if self.kind == "fixed":
            return "fixed:" + ",".join(str(x) for x in sorted(self.fixed))
        return self.kind

    def apply(self, occupied: Iterable[int]) -> frozenset[int]:
        I = frozenset(occupied)
        if not I:
            return frozenset()
        if self.kind == "min":
            return frozenset({min(I)})
        if self.kind == "max":
            return frozenset({max(I)})
        if self.kind == "all":
            return I
        return self.fixed & I


def apply_policy(policy: DistancePolicy, occupied: Iterable[int]) -> frozenset[int]:
    return policy.apply(occupied)


@dataclass(frozen=True)
class ProtocolConfig:
    N: int
    hbd: HBDParams
    task: str = "single"
    policy: DistancePolicy = DistancePolicy("all")

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ValueError(f"task must be one of {TASKS}")
        if self.hbd.N != self.N:
            raise ValueError("HBD parameters must use the same size bound N")

    @classmethod
    def make(cls, N: int, task: str = "single", policy: str | DistancePolicy = "all", c1: float = 4.0, c2: float = 4.0):
        if isinstance(policy, str):
            policy = DistancePolicy.parse(policy)
        return cls(N, HBDParams(N, c1, c2), task, policy)

    @property
    def diameter_width(self) -> int:
        return diameter_word_width(self.N)


@dataclass
class NodeKnowledge:
    """What one node knows; filled in phase by phase."""

    is_source: bool
    is_destination: bool
    d_v: int | None = None
    d_max: int | None = None
    sp: tuple[int, ...] = ()
    J: frozenset[int] = frozenset()
    in_spj: bool = False
    c_out: int | None = None
    c_in: int | None = None
    cs_out: frozenset[int] = frozenset()
    cs_in: frozenset[int] = frozenset()
    z: int = 0
    # last local round of the window that activated the node; initially active nodes
    # get the round before the construction phase
    activated_at: int | None = None
    estimate: DiameterEstimate | None = None
    occupied: frozenset[int] | None = None  # I, known to the source only
    marks: dict[str, int] = field(default_factory=dict)  # local round at which each phase starts
    violations: list[str] = field(default_factory=list)

    @property
    def in_target(self) -> bool:
        """Destination in a target layer (member of Y_J)."""
        return self.is_destination and self.d_v in self.J


@dataclass
class NodeContext:
    knowledge: NodeKnowledge
    config: ProtocolConfig
    wakeup_only: bool = False
    rng: np.random.Generator | None = None
    tag: str = ""
    local: int = 0

    def enter(self, tag: str) -> None:
        self.tag = tag
        self.knowledge.marks[tag] = self.local


# ---------------------------------------------------------------------------
# wake-up
# ---------------------------------------------------------------------------


def wakeup(ctx: NodeContext):
    """All four wake-up subphases; returns whether the node belongs to SP_J."""
    k = ctx.knowledge
    ctx.enter("wakeup.1")
    yield plan(BEEP, IDLE)
    if k.is_source:
        yield plan(IDLE, BEEP, IDLE, IDLE)
    else:
        while True:  # listen until the synchronisation beep
            watch = np.ones(64, dtype=bool)
            obs = yield watched(_listen(64), watch)
            if hit_index(obs, watch) is not None:
                break
        yield plan(BEEP, IDLE, IDLE)

    ctx.enter("wakeup.2")
    est = yield from triplet_simulate(estimate_diameter(k.is_source, ctx.config.diameter_width))
    k.estimate = est
    k.violations.extend(est.violations)
    k.d_v, k.d_max = est.d_v, est.d_max
    if k.d_max > k.d_v:
        yield _idle(k.d_max - k.d_v)

    ctx.enter("wakeup.3")
    d, d_max = k.d_v, k.d_max
    initiate = {3 * (d - 1) + 1} if k.is_destination and d >= 1 else set()
    events = yield from reverse_beep_wave(d, 4 * d_max - 2, initiate)
    sp = [0] * d_max
    if initiate:
        sp[d - 1] = 1
    for ev in events:
        if ev.kind != "relay":
            continue
        num = ev.triplet + 2 + d
        if num % 4 or not 1 <= num // 4 <= d_max:
            k.violations.append(f"relay in triplet {ev.triplet} maps to no layer index")
            continue
        sp[num // 4 - 1] = 1
    k.sp = tuple(sp)

    ctx.enter("wakeup.4")
    message = None
    if k.is_source:
        k.occupied = frozenset(i + 1 for i, bit in enumerate(sp) if bit)
        J = apply_policy(ctx.config.policy, k.occupied)
        message = tuple(int(i in J) for i in range(1, d_max + 1))
    bits = yield from beep_wave_broadcast(message, d, d_max, d_max)
    k.J = frozenset(i + 1 for i, bit in enumerate(bits) if bit)
    k.in_spj = any(sp[j - 1] for j in k.J)
    return k.in_spj


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def hbd_role(direction: str, ell: int, layer: int, d_max: int) -> str | None:
    """Role of a layer in preprocessing subphase ``(direction, ell)``.

    ``"edge"`` nodes listen and receive a colour, ``"vertex"`` nodes beep and
    collect a colour set.
    """
    lower = layer % 3 == ell and layer <= d_max - 1  # i of a pair (L_i, L_i+1)
    upper = layer >= 1 and (layer - 1) % 3 == ell  # i+1 of a pair
    if direction == "out":
        return "edge" if lower else "vertex" if upper else None
    if direction == "in":
        return "edge" if upper else "vertex" if lower else None
    raise ValueError(f"unknown direction {direction!r}")


def beeping_hbd_vertex(params: HBDParams, rng: np.random.Generator):
    """Vertex side: per iteration sample X ~ Bernoulli(2^-epoch); if set, beep once per
    sub-iteration in a random one of its two rounds. Returns the colour set."""
    E, T, S = params.epochs, params.iterations, params.sub_iterations
    iters = E * T
    p = 2.0 ** -np.repeat(np.arange(E, dtype=np.float64), T)
    joined = rng.random(iters) < p
    slot = rng.integers(0, 2, size=(iters, S))
    pl = np.full((iters, S, 2), IDLE, dtype=np.int8)
    it, sub = np.nonzero(np.broadcast_to(joined[:, None], (iters, S)))
    pl[it, sub, slot[it, sub]] = BEEP
    yield pl.reshape(-1)
    return frozenset(int(i) + 1 for i in np.flatnonzero(joined))


def beeping_hbd_edge(params: HBDParams):
    """Hyperedge side: take colour (i, j) iff every sub-iteration of iteration (i, j)
    carried exactly one heard beep; idle once coloured. Returns the colour or None."""
    S = params.sub_iterations
    iters = params.epochs * params.iterations
    for it in range(iters):
        obs = yield _listen(2 * S)
        per_sub = (obs.reshape(S, 2) == Observation.BEEP).sum(axis=1)
        if (per_sub == 1).all():
            rest = (iters - it - 1) * 2 * S
            if rest:
                yield _idle(rest)
            return it + 1
    return None


def preprocessing(ctx: NodeContext):
    k = ctx.knowledge
    params = ctx.config.hbd
    for direction, ell in PREPROCESSING_SUBPHASES:
        ctx.enter(f"pre.{direction}{ell}")
        role = hbd_role(direction, ell, k.d_v, k.d_max)
        if role == "edge":
            color = yield from beeping_hbd_edge(params)
            if direction == "out":
                k.c_out = color
            else:
                k.c_in = color
        elif role == "vertex":
            colors = yield from beeping_hbd_vertex(params, ctx.rng)
            if direction == "out":
                k.cs_out = colors
            else:
                k.cs_in = colors
        else:
            yield _idle(params.subphase_rounds)


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------


def single_path(ctx: NodeContext):
    """Grow one shortest path outward; iteration ``l`` moves the path to layer ``l``."""
    k = ctx.knowledge
    ctx.enter("path")
    W = ctx.config.hbd.word_width
    j_max = max(k.J)
    x = k.d_v
    active = k.is_source
    used = 0
    if 1 <= x <= j_max:
        if x > 1:
            yield _idle((x - 1) * W)
        obs = yield _listen(W)
        used = x * W
        value = decode_word(obs == Observation.BEEP)
        if value in k.cs_out:
            active = True
            k.activated_at = ctx.local - 1
    if active and not k.in_target and x + 1 <= j_max and k.c_out is not None:
        yield np.array([BEEP if b else IDLE for b in color_word(k.c_out, W)], dtype=np.int8)
        used = (x + 1) * W
    if j_max * W > used:
        yield _idle(j_max * W - used)
    if k.is_source:
        k.activated_at = k.marks["path"] - 1
    k.z = int(active)


def tree(ctx: NodeContext):
    """Grow paths inward from the target destinations; iteration ``l`` hands over
    from layer ``j_max - l + 1`` to layer ``j_max - l``."""
    k = ctx.knowledge
    ctx.enter("tree")
    K = ctx.config.hbd.k
    j_max = max(k.J)
    x = k.d_v
    active = k.in_target
    if active:
        k.activated_at = k.marks["tree"] - 1
    used = 0
    if x <= j_max - 1:
        listen_iter = j_max - x
        if listen_iter > 1:
            yield _idle((listen_iter - 1) * K)
        obs = yield _listen(K)
        used = listen_iter * K
        colors = {int(i) + 1 for i in np.flatnonzero(obs == Observation.BEEP)}
        if not active and colors & k.cs_in:
            active = True
            k.activated_at = ctx.local - 1
    if active and 1 <= x <= j_max and k.c_in is not None:
        beep_iter = j_max - x + 1
        start = (beep_iter - 1) * K
        if start > used:
            yield _idle(start - used)
        window = _idle(K)
        window[k.c_in - 1] = BEEP
        yield window
        used = beep_iter * K
    if j_max * K > used:
        yield _idle(j_max * K - used)
    k.z = int(active)


def node_main(ctx: NodeContext):
    k = ctx.knowledge
    in_spj = yield from wakeup(ctx)
    if ctx.wakeup_only or not in_spj:
        k.z = 0
        k.marks["end"] = ctx.local
        return k
    yield from preprocessing(ctx)
    if ctx.config.task == "single":
        yield from single_path(ctx)
    else:
        yield from tree(ctx)
    k.marks["end"] = ctx.local
    return k


def make_node_program(is_source: bool, is_destination: bool, config: ProtocolConfig, wakeup_only: bool = False):
    ctx = NodeContext(NodeKnowledge(is_source, is_destination), config, wakeup_only)
    return FragmentProgram(node_main, ctx)


# ---------------------------------------------------------------------------
# harness
# ---------------------------------------------------------------------------


def round_budget(n: int, config: ProtocolConfig) -> int:
    """Generous upper bound on the global rounds of a run on ``n`` nodes."""
    D = n
    W_N = config.diameter_width
    steps = 3 * (D + 1) + 3 * W_N + 2 + D
    wake = 2 * D + 8 + 3 * steps + D + 3 * (4 * D) + broadcast_rounds(D, D)
    pre = 6 * config.hbd.subphase_rounds
    build = D * max(config.hbd.word_width, config.hbd.k)
    return wake + pre + build + 16


@dataclass
class ProtocolRun:
    graph: Graph
    source: int
    destinations: frozenset[int]
    schedule: dict[int, int]
    config: ProtocolConfig
    seed: int
    knowledge: list[NodeKnowledge]
    trace: Trace
    rounds: dict[str, int]
    phase_starts: dict[str, list[int | None]]  # per node, global round each phase started
    failure: str | None = None

    @property
    def z(self) -> list[int]:
        return [k.z for k in self.knowledge]

    @property
    def J(self) -> frozenset[int]:
        return self.knowledge[self.source].J


def _phase_of(tag: str) -> str | None:
    if tag.startswith("wakeup"):
        return "wakeup"
    if tag.startswith("pre"):
        return "preprocessing"
    if tag in ("path", "tree"):
        return "construction"
    return None


def run_full_protocol(
    g: Graph,
    s: int,
    Y: Iterable[int],
    schedule: WakeSchedule | Mapping[int, int] | None,
    config: ProtocolConfig,
    seed: int = 0,
    wakeup_only: bool = False,
    max_rounds: int | None = None,
) -> ProtocolRun:
    Y = frozenset(int(y) for y in Y)
    if not 0 <= s < g.n:
        raise ValueError(f"source {s} out of range")
    if not Y:
        raise ValueError("at least one destination is required")
    if s in Y:
        raise ValueError("the source cannot be a destination")
    if any(not 0 <= y < g.n for y in Y):
        raise ValueError("destination out of range")
    if config.N < g.n:
        raise ValueError(f"size bound N={config.N} is below n={g.n}")
    bfs_layers(g, s)  # raises on disconnected graphs
    if schedule is None:
        schedule = {y: 1 for y in Y}
    sched = dict(schedule.rounds if isinstance(schedule, WakeSchedule) else schedule)
    WakeSchedule(sched)  # validates the minimum round
    if not set(sched) <= Y:
        raise ValueError("only destinations may be woken externally")

    programs = [make_node_program(v == s, v in Y, config, wakeup_only) for v in range(g.n)]
    budget = max_rounds or round_budget(g.n, config) + max(sched.values())
    failure = None
    try:
        trace = run_simulation(g, programs, sched, budget, seed)
    except SimulationTimeout as exc:
        trace = exc.trace
        failure = f"timeout: {exc}"
    knowledge = [p.ctx.knowledge for p in programs]

    phase_starts: dict[str, list[int | None]] = {}
    for v, kn in enumerate(knowledge):
        w = int(trace.wake_round[v])
        for tag, local in kn.marks.items():
            phase_starts.setdefault(tag, [None] * g.n)[v] = w + local - 1 if w else None

    per_tag = trace.phase_spans(lambda t: t or None)
    per_phase = trace.phase_spans(_phase_of)
    rounds = {
        "wakeup": per_phase["wakeup"][1] if "wakeup" in per_phase else 0,
        "preprocessing": _span_len(per_phase.get("preprocessing")),
        "construction": _span_len(per_phase.get("construction")),
        "total": trace.rounds,
    }
    for tag in ("wakeup.1", "wakeup.2", "wakeup.3", "wakeup.4"):
        rounds[tag] = _span_len(per_tag.get(tag))

    if failure is None:
        problems = [f"node {v}: {msg}" for v, kn in enumerate(knowledge) for msg in kn.violations]
        if problems:
            failure = "protocol violation: " + "; ".join(problems[:5])
    return ProtocolRun(g, s, Y, sched, config, seed, knowledge, trace, rounds, phase_starts, failure)


def _span_len(span: tuple[int, int] | None) -> int:
    return span[1] - span[0] + 1 if span else 0
