"""Reusable program fragments: beep waves, reverse beep waves, diameter estimation.

A fragment is a generator that yields plans (int8 arrays of :class:`Action` codes
for consecutive rounds), receives the observations of the planned rounds and
returns its result. Fragments compose with ``yield from``.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .sim import Action, Observation, Plan

__all__ = [
    "BEEP",
    "LISTEN",
    "IDLE",
    "plan",
    "heard",
    "beep_wave_broadcast",
    "broadcast_rounds",
    "reverse_beep_wave",
    "ReverseWaveEvent",
    "estimate_diameter",
    "DiameterEstimate",
    "diameter_word_width",
    "triplet_simulate",
    "triplet_slot",
]

BEEP, LISTEN, IDLE = int(Action.BEEP), int(Action.LISTEN), int(Action.IDLE)
HEARD, SILENT, NOTHING = int(Observation.BEEP), int(Observation.SILENCE), int(Observation.NOTHING)


def plan(*actions: int) -> np.ndarray:
    return np.array(actions, dtype=np.int8)


def heard(obs: np.ndarray) -> bool:
    return HEARD in obs


def watched(actions: np.ndarray, watch: np.ndarray) -> Plan:
    return Plan(np.asarray(actions, dtype=np.int8), np.asarray(watch, dtype=bool))


def hit_index(obs: np.ndarray, watch: np.ndarray) -> int | None:
    """Position of the watched beep that ended a plan, if any."""
    if len(obs) and watch[len(obs) - 1] and obs[-1] == HEARD:
        return len(obs) - 1
    return None


# ---------------------------------------------------------------------------
# beep waves (synchronised clocks, known length)
# ---------------------------------------------------------------------------


def broadcast_rounds(length: int, d_max: int) -> int:
    return 3 * (length + d_max)


def beep_wave_broadcast(message: Sequence[int] | None, layer: int, length: int, d_max: int):
    """Broadcast ``length`` bits from the source over ``length`` pipelined beep waves.

    The source (``layer == 0``) passes the message; every other node passes ``None``.
    Wave ``b`` leaves the source in round ``3b + 1`` and a layer-``x`` node listens in
    round ``3b + x``, relays in ``3b + x + 1`` and ignores ``3b + x + 2``. Everyone
    spends exactly :func:`broadcast_rounds` rounds and returns the decoded bits.
    """
    budget = broadcast_rounds(length, d_max)
    if layer == 0:
        if message is None or len(message) != length:
            raise ValueError("the source needs a message of the announced length")
        bits = tuple(1 if b else 0 for b in message)
        p = np.full(budget, IDLE, dtype=np.int8)
        for b, bit in enumerate(bits):
            if bit:
                p[3 * b] = BEEP
        yield p
        return bits
    if not 1 <= layer <= d_max:
        raise ValueError(f"layer {layer} outside [0, {d_max}]")
    bits = [0] * length
    if layer > 1:
        yield np.full(layer - 1, IDLE, dtype=np.int8)
    b = 0
    while b < length:
        acts = np.tile(np.array([LISTEN, IDLE, IDLE], dtype=np.int8), length - b)
        watch = acts == LISTEN
        obs = yield watched(acts, watch)
        hit = hit_index(obs, watch)
        if hit is None:
            break
        b += hit // 3
        bits[b] = 1
        yield plan(BEEP, IDLE)
        b += 1
    used = layer - 1 + 3 * length
    if budget > used:
        yield np.full(budget - used, IDLE, dtype=np.int8)
    return tuple(bits)


# ---------------------------------------------------------------------------
# reverse beep waves (synchronised triplets)
# ---------------------------------------------------------------------------


def triplet_slot(layer: int) -> int:
    """Offset within a triplet in which a layer-``layer`` node beeps."""
    return layer % 3


@dataclass(frozen=True)
class ReverseWaveEvent:
    triplet: int
    kind: str  # "initiate" | "relay"


def reverse_beep_wave(layer: int, triplets: int, initiate_at: frozenset[int] | set[int] = frozenset()):
    """Run ``triplets`` triplets of the inward-only wave primitive.

    A node initiates in its slot of every triplet in ``initiate_at``; otherwise it
    listens to the whole triplet, and a beep heard in slot ``(layer + 1) mod 3`` of
    triplet ``r`` (i.e. from the next layer out) is relayed in triplet ``r + 1``.
    Returns the initiation and relay events in order.
    """
    own = triplet_slot(layer)
    outer = triplet_slot(layer + 1)
    beep_triplet = np.full(3, IDLE, dtype=np.int8)
    beep_triplet[own] = BEEP
    events: list[ReverseWaveEvent] = []
    r = 1
    relay = False
    while r <= triplets:
        if r in initiate_at or relay:
            yield beep_triplet
            events.append(ReverseWaveEvent(r, "initiate" if r in initiate_at else "relay"))
            relay = False
            r += 1
            continue
        stop = min((t for t in initiate_at if t > r), default=triplets + 1)
        acts = np.full(3 * (stop - r), LISTEN, dtype=np.int8)
        watch = np.zeros(len(acts), dtype=bool)
        watch[outer::3] = True
        obs = yield watched(acts, watch)
        hit = hit_index(obs, watch)
        if hit is None:
            r = stop
            continue
        if outer < 2:  # finish listening to the rest of the triplet
            yield np.full(2 - outer, LISTEN, dtype=np.int8)
        r += hit // 3 + 1
        relay = True
    return events


# ---------------------------------------------------------------------------
# EstimateDiameter (in steps)
# ---------------------------------------------------------------------------


def diameter_word_width(N: int) -> int:
    return max(1, math.ceil(math.log2(N + 1)))


@dataclass
class DiameterEstimate:
    d_v: int
    d_max: int
    steps: int
    r: int | None = None  # the source's three-silent-steps round
    violations: list[str] = field(default_factory=list)


def _word(value: int, width: int) -> tuple[int, ...]:
    if not 0 <= value < 2**width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return tuple((value >> (width - 1 - b)) & 1 for b in range(width))


def estimate_diameter(is_source: bool, width: int, horizon: int = 64):
    """Step-level diameter estimation; every yielded action is one step.

    All nodes must start in the same step. The source learns ``d_max`` from the
    round ``r`` ending the first three silent steps and broadcasts it as a start
    bit plus a ``width``-bit word; everyone ends after the same number of steps.
    ``horizon`` only sizes open-ended listening plans.
    """
    if is_source:
        yield plan(BEEP)
        step = 1
        while True:
            watch = np.ones(3, dtype=bool)
            obs = yield watched(np.full(3, LISTEN, dtype=np.int8), watch)
            step += len(obs)
            if hit_index(obs, watch) is None:
                break
        r = step + 1
        out = DiameterEstimate(0, r // 3 - 1, 0, r)
        if r % 3:
            out.violations.append(f"three-silent round r={r} is not a multiple of 3")
        bits = (1, *_word(out.d_max, width))
        p = np.full(3 * len(bits) - 1, IDLE, dtype=np.int8)
        for b, bit in enumerate(bits):
            p[3 * b] = BEEP if bit else LISTEN
        obs = yield p
        if heard(obs):
            out.violations.append("source heard a beep after computing d_max")
        if out.d_max:
            yield np.full(out.d_max, IDLE, dtype=np.int8)
        out.steps = r + 3 * width + 1 + out.d_max
        return out

    step = 0
    while True:
        watch = np.ones(horizon, dtype=bool)
        obs = yield watched(np.full(horizon, LISTEN, dtype=np.int8), watch)
        step += len(obs)
        if hit_index(obs, watch) is not None:
            break
    d_v = step
    # relay the first beep, then one reverse wave per three steps while they keep coming
    while True:
        obs = yield plan(BEEP, LISTEN, IDLE)
        step += 3
        if not heard(obs):
            break
    yield plan(IDLE)
    step += 1
    # wait for the start bit, ignoring beeps outside this layer's receive slot
    while True:
        watch = (np.arange(step + 1, step + 1 + horizon) - (d_v - 1)) % 3 == 0
        obs = yield watched(np.full(horizon, LISTEN, dtype=np.int8), watch)
        step += len(obs)
        if hit_index(obs, watch) is not None:
            break
    bits = []
    for _ in range(width):
        obs = yield plan(BEEP if not bits or bits[-1] else IDLE, IDLE, LISTEN)
        bits.append(int(heard(obs)))
        step += 3
    yield plan(BEEP if bits[-1] else IDLE, IDLE)
    step += 2
    d_max = 0
    for b in bits:
        d_max = (d_max << 1) | b
    out = DiameterEstimate(d_v, d_max, 0)
    if d_max < d_v:
        out.violations.append(f"received d_max={d_max} below own distance {d_v}")
    elif d_max > d_v:
        yield np.full(d_max - d_v, IDLE, dtype=np.int8)
        step += d_max - d_v
    out.steps = step
    return out


# ---------------------------------------------------------------------------
# step -> triplet simulation
# ---------------------------------------------------------------------------

_ROUNDS_OF_STEP = np.zeros((4, 3), dtype=np.int8)
_ROUNDS_OF_STEP[BEEP] = (IDLE, BEEP, IDLE)
_ROUNDS_OF_STEP[LISTEN] = (LISTEN, LISTEN, LISTEN)
_ROUNDS_OF_STEP[IDLE] = (IDLE, IDLE, IDLE)


def triplet_simulate(step_fragment):
    """Run a step-level fragment with one triplet of rounds per step.

    A beep step beeps in the middle round only; a listen step listens to all three
    rounds and records a beep if any of them carried one. A watched step ends the
    step plan once its triplet is complete.
    """
    try:
        item = next(step_fragment)
        while True:
            step_watch = None
            if isinstance(item, Plan):
                steps, step_watch = item.actions, item.watch
            else:
                steps = np.asarray(item, dtype=np.int8)
            rounds = _ROUNDS_OF_STEP[steps].reshape(-1)
            if step_watch is None:
                obs = yield rounds
            else:
                obs = yield watched(rounds, np.repeat(step_watch, 3))
                if len(obs) % 3:  # stopped mid-triplet: listen to its remaining rounds
                    rest = yield np.full(3 - len(obs) % 3, LISTEN, dtype=np.int8)
                    obs = np.concatenate([obs, rest])
            done = len(obs) // 3
            per_step = obs.reshape(-1, 3)
            step_obs = np.where(
                steps[:done] == LISTEN,
                np.where((per_step == HEARD).any(axis=1), HEARD, SILENT),
                NOTHING,
            ).astype(np.int8)
            item = step_fragment.send(step_obs)
    except StopIteration as stop:
        return stop.value
