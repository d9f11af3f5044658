"""Synchronous beeping-model round engine.

Semantics per global round ``r`` (1-indexed):

* nodes scheduled for ``r`` wake (already-awake nodes ignore the event) and act
  in local round 1 at ``r``;
* every awake node beeps, listens or idles;
* a listener hears a beep iff at least one neighbour beeped in ``r``; beepers
  and idlers observe nothing;
* an asleep node with a beeping neighbour in ``r`` wakes with local round 1 at
  ``r + 1``.

Programs are driven through :class:`NodeProgram`. ``step`` may return a single
:class:`Action` or a whole plan (a sequence of actions for consecutive rounds);
it is called again only when the plan is exhausted and then receives the
observations of every planned round. A :class:`Plan` may also carry a watch mask:
the plan then ends early, right after the first watched round in which the node
heard a beep (a "listen until a beep" loop in one call). Planned rounds are
executed in vectorised chunks, so long idle or listening stretches cost almost
nothing.
"""

from __future__ import annotations

import json
from bisect import bisect_right
from collections.abc import Callable, Generator, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, TextIO

import numpy as np

from .graph import Graph

__all__ = [
    "Action",
    "Observation",
    "NodeProgram",
    "FragmentProgram",
    "Context",
    "Plan",
    "WakeSchedule",
    "Trace",
    "SimulationTimeout",
    "run_simulation",
    "node_rng",
    "export_trace",
    "iter_trace_records",
    "load_trace",
    "summarize",
    "check_conformance",
    "idle",
    "listen",
]


class Action(IntEnum):
    BEEP = 1
    LISTEN = 2
    IDLE = 3


class Observation(IntEnum):
    NOTHING = 0
    BEEP = 1
    SILENCE = 2


ASLEEP = 0
_ACTION_CODE = {Action.BEEP: "B", Action.LISTEN: "L", Action.IDLE: "I"}
_CODE_ACTION = {v: k for k, v in _ACTION_CODE.items()}
_OBS_CODE = {Observation.NOTHING: None, Observation.BEEP: "beep", Observation.SILENCE: "silence"}
_CODE_OBS = {v: k for k, v in _OBS_CODE.items()}

@dataclass(frozen=True)
class Plan:
    """Actions for consecutive rounds plus an optional watch mask.

    The plan ends right after the first watched round in which the node listened
    and heard a beep; the program then receives the (shorter) observation array.
    """

    actions: np.ndarray
    watch: np.ndarray

    def __post_init__(self) -> None:
        if len(self.actions) != len(self.watch):
            raise ValueError("watch mask must match the plan length")


def idle(rounds: int) -> np.ndarray:
    return np.full(rounds, Action.IDLE, dtype=np.int8)


def listen(rounds: int) -> np.ndarray:
    return np.full(rounds, Action.LISTEN, dtype=np.int8)


class NodeProgram:
    """Per-node state machine driven by the engine.

    ``on_wake`` is called once when the node wakes. ``step(local_round, observations)``
    returns the action(s) starting at ``local_round`` or ``None`` once the program
    has finished; ``observations`` holds one :class:`Observation` code per round
    since the previous call (empty on the first call). ``tag`` labels the trace,
    ``output`` is the terminal record.
    """

    tag: str = ""
    output: Any = None

    def on_wake(self, rng: np.random.Generator) -> None:
        pass

    def step(self, local_round: int, observations: np.ndarray):
        raise NotImplementedError


Fragment = Generator[np.ndarray, np.ndarray, Any]


class FragmentProgram(NodeProgram):
    """Adapts a generator-based program to :class:`NodeProgram`.

    ``factory(ctx)`` must return a generator that yields plans (arrays of action
    codes), receives the matching observation arrays and returns the output.
    ``ctx`` is any object with ``rng``, ``tag`` and ``local`` attributes; ``local`` is
    kept equal to the local round at which the next yielded plan starts.
    """

    def __init__(self, factory: Callable[[Any], Fragment], ctx: Any):
        self._factory = factory
        self.ctx = ctx
        self._gen: Fragment | None = None

    @property
    def tag(self) -> str:  # type: ignore[override]
        return self.ctx.tag

    def on_wake(self, rng: np.random.Generator) -> None:
        self.ctx.rng = rng
        self._gen = self._factory(self.ctx)

    def step(self, local_round, observations):
        self.ctx.local = int(local_round)
        try:
            if local_round == 1:
                return next(self._gen)
            return self._gen.send(observations)
        except StopIteration as stop:
            self.output = stop.value
            self.ctx.tag = "done"
            return None


@dataclass
class Context:
    """Minimal fragment context: per-node generator, trace tag and local clock."""

    rng: np.random.Generator | None = None
    tag: str = ""
    local: int = 0


@dataclass(frozen=True)
class WakeSchedule:
    """External wake-up events: node id -> global round."""

    rounds: Mapping[int, int]

    def __post_init__(self) -> None:
        if not self.rounds:
            raise ValueError("wake schedule is empty")
        if any(r < 1 for r in self.rounds.values()):
            raise ValueError("wake rounds are 1-based")
        if min(self.rounds.values()) != 1:
            raise ValueError("the earliest scheduled wake-up must be round 1")

    @classmethod
    def parse(cls, text: str) -> WakeSchedule:
        rounds = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'node_id wake_round'")
            try:
                node, rnd = int(parts[0]), int(parts[1])
            except ValueError:
                raise ValueError(f"line {lineno}: non-integer token") from None
            if node in rounds:
                raise ValueError(f"line {lineno}: node {node} listed twice")
            rounds[node] = rnd
        return cls(rounds)

    def dump(self) -> str:
        return "".join(f"{v} {r}\n" for v, r in sorted(self.rounds.items()))


class SimulationTimeout(RuntimeError):
    def __init__(self, message: str, trace: Trace):
        super().__init__(message)
        self.trace = trace


@dataclass
class Trace:
    """Everything that happened in a run.

    ``actions[r-1, v]`` is the action code of node ``v`` in global round ``r`` (0 while
    asleep); ``observations`` likewise. ``tags[v]`` lists ``(round, tag)`` change
    points. ``finish_round[v]`` is the last round of the node's program (0 if it
    never finished).
    """

    n: int
    rounds: int
    actions: np.ndarray
    observations: np.ndarray
    wake_round: np.ndarray
    finish_round: np.ndarray
    tags: list[list[tuple[int, str]]]
    outputs: list[Any]
    schedule: dict[int, int] = field(default_factory=dict)

    def tag_at(self, v: int, rnd: int) -> str:
        points = self.tags[v]
        i = bisect_right(points, (rnd, "￿")) - 1
        return points[i][1] if i >= 0 else ""

    def phase_spans(self, phase_of: Callable[[str], str | None] | None = None) -> dict[str, tuple[int, int]]:
        """First and last global round in which any node carried a tag of each phase.

        ``phase_of`` maps a tag to its phase name (default: text before the first dot).
        """
        phase_of = phase_of or (lambda t: t.split(".", 1)[0] if t else None)
        spans: dict[str, list[int]] = {}
        for v in range(self.n):
            points = self.tags[v]
            end_of_node = self.rounds
            for i, (start, tag) in enumerate(points):
                end = points[i + 1][0] - 1 if i + 1 < len(points) else end_of_node
                phase = phase_of(tag)
                if phase is None or end < start:
                    continue
                lo_hi = spans.setdefault(phase, [start, end])
                lo_hi[0] = min(lo_hi[0], start)
                lo_hi[1] = max(lo_hi[1], end)
        return {k: (a, b) for k, (a, b) in spans.items()}

    def beep_count(self) -> int:
        return int(np.count_nonzero(self.actions == Action.BEEP))


class _Buffer:
    def __init__(self, n: int, capacity: int = 256):
        self.actions = np.zeros((capacity, n), dtype=np.int8)
        self.obs = np.zeros((capacity, n), dtype=np.int8)
        self.watch = np.zeros((capacity, n), dtype=bool)

    def ensure(self, rows: int) -> None:
        cap = self.actions.shape[0]
        if rows <= cap:
            return
        new = max(rows, 2 * cap)
        for name in ("actions", "obs", "watch"):
            old = getattr(self, name)
            grown = np.zeros((new, old.shape[1]), dtype=old.dtype)
            grown[:cap] = old
            setattr(self, name, grown)


def node_rng(seed: int, node: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(node)])


_VALID = (int(Action.BEEP), int(Action.IDLE))
_SHORT_CHUNK = 64
_LONG_CHUNK = 4096


def _as_plan(result) -> tuple[np.ndarray, np.ndarray | None]:
    watch = None
    if isinstance(result, Plan):
        plan, watch = result.actions, result.watch
    elif isinstance(result, np.ndarray):
        plan = result.astype(np.int8, copy=False)
    elif isinstance(result, (int, Action)):
        plan = np.array([int(result)], dtype=np.int8)
    else:
        plan = np.asarray(list(result), dtype=np.int8)
    if plan.ndim != 1 or len(plan) == 0:
        raise ValueError("a program must return at least one action")
    if plan.min() < _VALID[0] or plan.max() > _VALID[1]:
        raise ValueError("invalid action code in plan")
    return plan, watch


def run_simulation(
    g: Graph,
    programs: Sequence[NodeProgram],
    schedule: WakeSchedule | Mapping[int, int],
    max_rounds: int,
    seed: int = 0,
) -> Trace:
    """Run ``programs`` on ``g`` until all finish.

    Raises :class:`SimulationTimeout` (carrying the partial trace) when
    ``max_rounds`` pass with unfinished programs or when nothing can happen any more.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    if len(programs) != g.n:
        raise ValueError("need exactly one program per node")
    sched = dict(schedule.rounds if isinstance(schedule, WakeSchedule) else schedule)
    for v in sched:
        if not 0 <= v < g.n:
            raise ValueError(f"scheduled node {v} out of range")
    n = g.n
    adj = g.csr()
    buf = _Buffer(n)
    wake = np.zeros(n, dtype=np.int64)
    plan_end = np.zeros(n, dtype=np.int64)  # last round covered by the current plan
    plan_start = np.zeros(n, dtype=np.int64)
    finished = np.zeros(n, dtype=bool)
    finish_round = np.zeros(n, dtype=np.int64)
    tags: list[list[tuple[int, str]]] = [[] for _ in range(n)]
    outputs: list[Any] = [None] * n
    beep_wake = np.zeros(n, dtype=np.int64)
    sched_round = np.zeros(n, dtype=np.int64)
    for v, when in sched.items():
        sched_round[v] = when
    pending = sorted(set(sched.values()))
    watching = np.zeros(n, dtype=bool)  # current plan carries a watch mask

    def record_tag(v: int, rnd: int) -> None:
        tag = programs[v].tag
        if not tags[v] or tags[v][-1][1] != tag:
            tags[v].append((rnd, tag))

    def submit(v: int, result, start: int) -> None:
        if result is None:
            finished[v] = True
            finish_round[v] = start - 1
            outputs[v] = programs[v].output
            record_tag(v, start)
            return
        plan, watch = _as_plan(result)
        rows = slice(start - 1, start - 1 + len(plan))
        buf.ensure(rows.stop)
        buf.actions[rows, v] = plan
        if watch is not None:
            buf.watch[rows, v] = watch
            watching[v] = True
        elif watching[v]:
            buf.watch[rows, v] = False
            watching[v] = False
        plan_start[v] = start
        plan_end[v] = start + len(plan) - 1
        record_tag(v, start)

    def make_trace(rounds: int) -> Trace:
        return Trace(
            n,
            rounds,
            buf.actions[:rounds].copy(),
            buf.obs[:rounds].copy(),
            wake.copy(),
            finish_round.copy(),
            tags,
            outputs,
            sched,
        )

    r = 1
    while True:
        if r > max_rounds:
            raise SimulationTimeout(f"max_rounds={max_rounds} exhausted", make_trace(max_rounds))
        waking = np.flatnonzero((wake == 0) & ((sched_round == r) | (beep_wake == r)))
        for v in waking:
            wake[v] = r
            programs[v].on_wake(node_rng(seed, v))
            submit(v, programs[v].step(1, np.zeros(0, dtype=np.int8)), r)
        running = (wake > 0) & ~finished
        awake = wake > 0
        if not running.any():
            future = [x for x in pending if x > r]
            if awake.all() or not future:
                if finished[awake].all() and awake.all():
                    return make_trace(r - 1)
                raise SimulationTimeout("no node can act any more", make_trace(r - 1))
            # nothing to do until the next external event
            buf.ensure(future[0] - 1)
            buf.actions[r - 1 : future[0] - 1, awake] = Action.IDLE
            r = future[0]
            continue
        end = int(plan_end[running].min())
        future = [x for x in pending if x > r]
        if future:
            end = min(end, future[0] - 1)
        # chunks that may be cut short are kept small so the cut wastes little work
        cap = _SHORT_CHUNK if watching[running].any() or not awake.all() else _LONG_CHUNK
        end = min(end, max_rounds, r + cap - 1)
        buf.ensure(end)
        acts = buf.actions[r - 1 : end]
        acts[:, finished] = Action.IDLE
        acts[:, ~awake] = ASLEEP
        beeps = acts == Action.BEEP
        if beeps.any():
            heard = (adj @ beeps.T.astype(np.float32)).T > 0
        else:
            heard = np.zeros(acts.shape, dtype=bool)
        listening = acts == Action.LISTEN
        cut = []
        asleep_rows = np.flatnonzero(heard[:, ~awake].any(axis=1))
        if len(asleep_rows):
            cut.append(int(asleep_rows[0]))
        watch_hits = None
        if watching[running].any():
            watch_hits = buf.watch[r - 1 : end] & listening & heard
            watch_rows = np.flatnonzero(watch_hits.any(axis=1))
            if len(watch_rows):
                cut.append(int(watch_rows[0]))
        if cut:
            last = min(cut)
            end = r + last
            acts, heard, listening = acts[: last + 1], heard[: last + 1], listening[: last + 1]
            for v in np.flatnonzero(~awake & heard[last]):
                beep_wake[v] = end + 1
            if watch_hits is not None:
                for v in np.flatnonzero(watch_hits[last]):
                    if plan_end[v] > end:
                        buf.actions[end : plan_end[v], v] = 0
                        buf.watch[end : plan_end[v], v] = False
                        plan_end[v] = end
        obs = np.where(listening, np.where(heard, Observation.BEEP, Observation.SILENCE), Observation.NOTHING)
        buf.obs[r - 1 : end] = obs
        for v in np.flatnonzero(running & (plan_end == end)):
            seen = buf.obs[plan_start[v] - 1 : end, v].copy()
            submit(v, programs[v].step(end + 2 - wake[v], seen), end + 1)
        if finished.all():
            return make_trace(end)
        r = end + 1


# ---------------------------------------------------------------------------
# trace export / import / analysis
# ---------------------------------------------------------------------------


def iter_trace_records(trace: Trace) -> Iterable[dict]:
    for r in range(1, trace.rounds + 1):
        row = trace.actions[r - 1]
        orow = trace.observations[r - 1]
        for v in np.flatnonzero(row):
            yield {
                "round": r,
                "node": int(v),
                "action": _ACTION_CODE[Action(int(row[v]))],
                "obs": _OBS_CODE[Observation(int(orow[v]))],
                "state": trace.tag_at(int(v), r),
            }


def export_trace(trace: Trace, out: TextIO) -> int:
    """Write one JSON object per (round, awake node); returns the record count."""
    count = 0
    for rec in iter_trace_records(trace):
        out.write(json.dumps(rec, separators=(",", ":")))
        out.write("\n")
        count += 1
    return count


def load_trace(lines: Iterable[str], n: int) -> Trace:
    """Rebuild a :class:`Trace` (without outputs) from JSONL records."""
    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            r, v = int(rec["round"]), int(rec["node"])
            act = _CODE_ACTION[rec["action"]]
            obs = _CODE_OBS[rec.get("obs")]
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"line {lineno}: bad trace record ({exc})") from None
        if not 0 <= v < n or r < 1:
            raise ValueError(f"line {lineno}: node or round out of range")
        records.append((r, v, act, obs, str(rec.get("state", ""))))
    rounds = max((rec[0] for rec in records), default=0)
    actions = np.zeros((rounds, n), dtype=np.int8)
    observations = np.zeros((rounds, n), dtype=np.int8)
    tags: list[list[tuple[int, str]]] = [[] for _ in range(n)]
    for r, v, act, obs, state in sorted(records):
        actions[r - 1, v] = act
        observations[r - 1, v] = obs
        if not tags[v] or tags[v][-1][1] != state:
            tags[v].append((r, state))
    wake = np.zeros(n, dtype=np.int64)
    for v in range(n):
        nz = np.flatnonzero(actions[:, v])
        if len(nz):
            wake[v] = nz[0] + 1
    return Trace(n, rounds, actions, observations, wake, np.zeros(n, dtype=np.int64), tags, [None] * n)


def summarize(trace: Trace) -> dict:
    spans = trace.phase_spans()
    return {
        "rounds": trace.rounds,
        "beeps": trace.beep_count(),
        "phases": {k: b - a + 1 for k, (a, b) in sorted(spans.items()) if k != "done"},
    }


def check_conformance(trace: Trace, g: Graph, schedule: Mapping[int, int] | None = None) -> list[str]:
    """Replay the model rules over a trace; returns human-readable violations.

    (i) beepers and idlers observe nothing; (ii) a listener's observation is the OR of
    its neighbours' beeps; (iii) every wake-up is caused by an external event or by a
    neighbour's beep in the previous round; (iv) a node has no actions before its
    wake-up and none missing after it (woken nodes stay present).
    When ``schedule`` is None, wake-ups without a beeping neighbour are taken to be
    external events.
    """
    if trace.n != g.n:
        return [f"trace has {trace.n} nodes, graph has {g.n}"]
    out: list[str] = []
    acts = trace.actions
    obs = trace.observations
    if trace.rounds == 0:
        return out
    bad = np.argwhere((acts != Action.LISTEN) & (obs != Observation.NOTHING))
    for r, v in bad[:20]:
        out.append(f"(i) round {r + 1} node {v}: non-listener recorded an observation")
    beeps = (acts == Action.BEEP).astype(np.float32)
    heard = (g.csr() @ beeps.T).T > 0
    listening = acts == Action.LISTEN
    expected = np.where(heard, Observation.BEEP, Observation.SILENCE)
    bad = np.argwhere(listening & (obs != expected))
    for r, v in bad[:20]:
        out.append(f"(ii) round {r + 1} node {v}: observation {int(obs[r, v])} but expected {int(expected[r, v])}")
    present = acts != ASLEEP
    for v in range(g.n):
        rows = np.flatnonzero(present[:, v])
        if len(rows) == 0:
            continue
        w = int(rows[0]) + 1
        beeped_before = w >= 2 and bool(heard[w - 2, v])
        external = schedule.get(v) == w if schedule is not None else True
        if not (beeped_before or external):
            out.append(f"(iii) node {v} woke in round {w} without cause")
        nbr_beeps = np.flatnonzero(heard[:, v])
        expected_wake = int(nbr_beeps[0]) + 2 if len(nbr_beeps) else None
        if schedule is not None and v in schedule:
            expected_wake = min(x for x in (expected_wake, schedule[v]) if x is not None)
        if expected_wake is not None and expected_wake <= trace.rounds and w != expected_wake:
            out.append(f"(iv) node {v} first acts in round {w}, expected wake-up in round {expected_wake}")
        if len(rows) != trace.rounds - w + 1:
            out.append(f"(iv) node {v} has gaps after waking in round {w}")
    return out
