"""Run-and-verify harness shared by the CLI and the acceptance suite."""

from __future__ import annotations

import csv
import io
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .graph import Graph, bfs_layers
from .hbd import color_pair
from .protocol import ProtocolConfig, ProtocolRun, run_full_protocol
from .sim import check_conformance
from .verify import (
    Verdict,
    check_lemma8,
    check_lemma9,
    check_round_formulas,
    check_single_path,
    check_spt,
    check_theorem5_conditions,
    check_wakeup,
    compute_sp_sets,
)

__all__ = ["RunSummary", "run_instance", "sweep", "activation_iterations", "summaries_to_csv", "CSV_FIELDS"]


@dataclass
class RunSummary:
    instance: str
    seed: int
    task: str
    policy: str
    success: bool
    failure_reason: str | None
    rounds: dict[str, int]
    palette: dict[str, int]
    verdicts: dict[str, dict[str, Any]] = field(default_factory=dict)
    n: int = 0
    d_max: int = 0
    J: list[int] = field(default_factory=list)
    z: list[int] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "instance": self.instance,
            "seed": self.seed,
            "task": self.task,
            "policy": self.policy,
            "success": self.success,
            "failure_reason": self.failure_reason,
            "rounds": {k: self.rounds.get(k, 0) for k in ("wakeup", "preprocessing", "construction", "total")},
            "palette": self.palette,
            "verdicts": self.verdicts,
            "n": self.n,
            "d_max": self.d_max,
            "J": self.J,
            "z": self.z,
        }


CSV_FIELDS = (
    "instance",
    "seed",
    "task",
    "policy",
    "success",
    "failure_reason",
    "n",
    "d_max",
    "J",
    "rounds_wakeup",
    "rounds_preprocessing",
    "rounds_construction",
    "rounds_total",
    "k",
    "W",
    "max_epoch_used",
)


def summaries_to_csv(rows: Iterable[RunSummary]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(
            {
                "instance": r.instance,
                "seed": r.seed,
                "task": r.task,
                "policy": r.policy,
                "success": r.success,
                "failure_reason": r.failure_reason or "",
                "n": r.n,
                "d_max": r.d_max,
                "J": " ".join(str(j) for j in r.J),
                "rounds_wakeup": r.rounds.get("wakeup", 0),
                "rounds_preprocessing": r.rounds.get("preprocessing", 0),
                "rounds_construction": r.rounds.get("construction", 0),
                "rounds_total": r.rounds.get("total", 0),
                **r.palette,
            }
        )
    return buf.getvalue()


def activation_iterations(run: ProtocolRun) -> list[int | None]:
    """Construction iteration after which each node was active (0 = from the start)."""
    tag = "path" if run.config.task == "single" else "tree"
    unit = run.config.hbd.word_width if tag == "path" else run.config.hbd.k
    starts = run.phase_starts.get(tag)
    out: list[int | None] = []
    for v, kn in enumerate(run.knowledge):
        if not kn.z or kn.activated_at is None or starts is None or starts[v] is None:
            out.append(None)
            continue
        last = int(run.trace.wake_round[v]) + kn.activated_at - 1
        out.append((last - starts[v]) // unit + 1)
    return out


def _max_epoch(run: ProtocolRun) -> int:
    T = run.config.hbd.iterations
    used = [c for kn in run.knowledge for c in (kn.c_out, kn.c_in) if c is not None]
    return max((color_pair(c, T)[0] for c in used), default=0)


def run_instance(
    g: Graph,
    s: int,
    Y: Iterable[int],
    schedule: Mapping[int, int] | None,
    config: ProtocolConfig,
    seed: int = 0,
    instance: str = "",
    conformance: bool = True,
) -> tuple[RunSummary, ProtocolRun]:
    """Execute the full pipeline and every oracle check on it."""
    run = run_full_protocol(g, s, Y, schedule, config, seed)
    Y = run.destinations
    verdicts: list[Verdict] = [check_wakeup(g, s, Y, run.knowledge, run.phase_starts)]
    J = run.J
    d_max = bfs_layers(g, s).d_max
    if run.failure is None or not run.failure.startswith("timeout"):
        verdicts.append(check_round_formulas(run.rounds, config.hbd, d_max, J, config.task))
        if J:
            spj = compute_sp_sets(g, s, Y).union(J)
            verdicts.append(check_theorem5_conditions(g, s, spj, run.knowledge, config.hbd.k))
            acts = activation_iterations(run)
            if config.task == "single":
                verdicts.append(check_single_path(g, s, Y, J, run.z))
                verdicts.append(check_lemma8(g, s, Y, J, acts))
            else:
                verdicts.append(check_spt(g, s, Y, J, run.z))
                verdicts.append(check_lemma9(g, s, Y, J, acts))
        else:
            empty = Verdict("empty_target_set")
            if any(run.z):
                empty.fail("J is empty but some node output 1")
            verdicts.append(empty)
    if conformance:
        conf = Verdict("conformance")
        for msg in check_conformance(run.trace, g, run.schedule):
            conf.fail(msg)
        verdicts.append(conf)

    failure = run.failure
    if failure is None:
        bad = next((v for v in verdicts if not v.ok), None)
        if bad is not None:
            failure = f"{bad.name}: {bad.reason}"
    summary = RunSummary(
        instance=instance,
        seed=seed,
        task=config.task,
        policy=str(config.policy),
        success=failure is None,
        failure_reason=failure,
        rounds=dict(run.rounds),
        palette={"k": config.hbd.k, "W": config.hbd.word_width, "max_epoch_used": _max_epoch(run)},
        verdicts={v.name: v.to_dict() for v in verdicts},
        n=g.n,
        d_max=d_max,
        J=sorted(J),
        z=list(run.z),
    )
    return summary, run


def sweep(jobs: Sequence[tuple], workers: int = 1) -> list[RunSummary]:
    """Run ``(g, s, Y, schedule, config, seed, instance)`` jobs; results keep job order."""
    if workers <= 1:
        return [run_instance(*job, conformance=True)[0] for job in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _run_job(job: tuple) -> RunSummary:
    return run_instance(*job)[0]
