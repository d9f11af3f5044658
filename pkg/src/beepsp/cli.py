"""Command-line experiment runner: ``beepsp run|sweep|hbd|gen|verify``.

Exit codes: operational errors (unreadable or malformed input, bad flags) are
nonzero; a protocol run that fails its checks is reported as data
(``success: false``) with exit code 0.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .experiment import RunSummary, run_instance, summaries_to_csv, sweep
from .graph import Graph, GraphError, gen_graph, load_graph, parse_generator_spec, save_graph
from .hbd import HBDParams, HypergraphFormatError, load_hypergraph, palette_stats, random_hypergraph, save_hypergraph
from .hbd import solve_hbd_abstract, verify_hbd
from .protocol import DistancePolicy, ProtocolConfig
from .sim import WakeSchedule, check_conformance, export_trace, load_trace

__all__ = ["main"]


# ---------------------------------------------------------------------------
# input helpers
# ---------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise click.ClickException(f"cannot read {path}: {exc.strerror or exc}") from None


def _load_graph_arg(graph: str | None, gen: str | None, seed: int) -> tuple[Graph, str]:
    if (graph is None) == (gen is None):
        raise click.UsageError("give exactly one of --graph or --gen")
    try:
        if graph is not None:
            return load_graph(_read(graph)), graph
        family, params = parse_generator_spec(gen)
        return gen_graph(family, params, seed), f"gen:{gen}"
    except GraphError as exc:
        raise click.ClickException(str(exc)) from None


def _load_schedule(path: str) -> WakeSchedule:
    try:
        return WakeSchedule.parse(_read(path))
    except ValueError as exc:
        raise click.ClickException(f"{path}: {exc}") from None


def random_destinations(g: Graph, s: int, count: int, max_wake: int, seed: int) -> dict[int, int]:
    """Pick ``count`` destinations (not ``s``) with wake rounds in ``1..max_wake``; one wakes at 1."""
    rng = np.random.default_rng([seed, 1])
    others = [v for v in range(g.n) if v != s]
    if not 1 <= count <= len(others):
        raise click.UsageError(f"--random-dests must lie in [1, {len(others)}]")
    ys = sorted(int(v) for v in rng.choice(others, size=count, replace=False))
    rounds = {y: int(rng.integers(1, max_wake + 1)) for y in ys}
    rounds[ys[int(rng.integers(len(ys)))]] = 1
    return rounds


def _parse_seeds(text: str) -> range:
    """``"a:b"`` (half-open) or ``"a-b"`` (inclusive) or a single seed."""
    try:
        if ":" in text:
            a, b = text.split(":", 1)
            return range(int(a), int(b))
        if "-" in text.lstrip("-"):
            a, b = text.split("-", 1)
            return range(int(a), int(b) + 1)
        v = int(text)
        return range(v, v + 1)
    except ValueError:
        raise click.BadParameter(f"bad seed range {text!r}", param_hint="--seeds") from None


def _policy(text: str) -> DistancePolicy:
    try:
        return DistancePolicy.parse(text)
    except ValueError as exc:
        raise click.BadParameter(str(exc), param_hint="--policy") from None


def _emit(summaries: list[RunSummary], out: str, single: bool = False) -> None:
    if out == "csv":
        click.echo(summaries_to_csv(summaries), nl=False)
    elif len(summaries) == 1 and single:
        click.echo(json.dumps(summaries[0].to_dict(), indent=2))
    else:
        click.echo(json.dumps([s.to_dict() for s in summaries], indent=2))


_c_option = click.FloatRange(min=1.0)


def _config_options(f):
    f = click.option("--c2", type=_c_option, default=4.0, show_default=True, help="Sub-iteration constant.")(f)
    f = click.option("--c1", type=_c_option, default=4.0, show_default=True, help="Iteration constant.")(f)
    f = click.option("--n-bound", type=click.IntRange(min=2), default=None, help="Known size bound N (default n).")(f)
    f = click.option("--policy", default="all", show_default=True, help="min | max | all | fixed:<csv>.")(f)
    f = click.option("--task", type=click.Choice(["single", "tree"]), default="single", show_default=True)(f)
    return f


def _make_config(n: int, n_bound: int | None, task: str, policy: str, c1: float, c2: float) -> ProtocolConfig:
    N = n_bound if n_bound is not None else max(n, 2)
    if N < n:
        raise click.BadParameter(f"N={N} is below n={n}", param_hint="--n-bound")
    return ProtocolConfig.make(N, task, _policy(policy), c1, c2)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Beeping-model shortest-path protocols: simulate, sweep and verify."""


@main.command("run")
@click.option("--graph", type=click.Path(dir_okay=False), help="Edge-list graph file.")
@click.option("--gen", help='Generator spec, e.g. "random_gnp:n=50,p=0.1".')
@click.option("--source", type=int, default=0, show_default=True)
@click.option("--dest", type=click.Path(dir_okay=False), help='Destination file: lines "node_id wake_round".')
@click.option("--random-dests", type=int, default=None, help="Draw this many destinations instead of --dest.")
@click.option("--max-wake", type=click.IntRange(min=1), default=1, show_default=True, help="Latest random wake round.")
@_config_options
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), help="Write the JSONL trace here.")
@click.option("--out", type=click.Choice(["json", "csv"]), default="json", show_default=True)
def cmd_run(graph, gen, source, dest, random_dests, max_wake, task, policy, n_bound, c1, c2, seed, trace_path, out):
    """Run the full pipeline once and check every oracle."""
    g, instance = _load_graph_arg(graph, gen, seed)
    if (dest is None) == (random_dests is None):
        raise click.UsageError("give exactly one of --dest or --random-dests")
    if dest is not None:
        schedule = dict(_load_schedule(dest).rounds)
    else:
        schedule = random_destinations(g, source, random_dests, max_wake, seed)
    config = _make_config(g.n, n_bound, task, policy, c1, c2)
    try:
        summary, run = run_instance(g, source, schedule, schedule, config, seed, instance)
    except (GraphError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    if trace_path is not None:
        try:
            with open(trace_path, "w") as fh:
                export_trace(run.trace, fh)
        except OSError as exc:
            raise click.ClickException(f"cannot write {trace_path}: {exc.strerror or exc}") from None
    _emit([summary], out, single=True)


@main.command("sweep")
@click.option("--gen", "gens", multiple=True, required=True, help="Generator spec; repeat for a grid.")
@click.option("--seeds", default="0:10", show_default=True, help='"a:b" half-open, "a-b" inclusive, or one seed.')
@click.option("--source", type=int, default=0, show_default=True)
@click.option("--random-dests", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--max-wake", type=click.IntRange(min=1), default=1, show_default=True)
@_config_options
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--out", type=click.Choice(["json", "csv"]), default="csv", show_default=True)
def cmd_sweep(gens, seeds, source, random_dests, max_wake, task, policy, n_bound, c1, c2, workers, out):
    """Run every (generator, seed) pair; one row per run, in grid-then-seed order."""
    seed_range = _parse_seeds(seeds)
    jobs = []
    for spec in gens:
        for seed in seed_range:
            g, instance = _load_graph_arg(None, spec, seed)
            schedule = random_destinations(g, source, min(random_dests, g.n - 1), max_wake, seed)
            config = _make_config(g.n, n_bound, task, policy, c1, c2)
            jobs.append((g, source, schedule, schedule, config, seed, instance))
    try:
        rows = sweep(jobs, workers)
    except (GraphError, ValueError) as exc:
        raise click.ClickException(str(exc)) from None
    _emit(rows, out)
    ok = sum(r.success for r in rows)
    rate = ok / len(rows) if rows else 1.0
    click.echo(f"success rate: {ok}/{len(rows)} = {rate:.4f}", err=True)


@main.command("hbd")
@click.argument("hypergraph", type=click.Path(dir_okay=False))
@click.option("--n-bound", type=click.IntRange(min=2), default=None, help="Size bound N (default |V|+|E|).")
@click.option("--c1", type=_c_option, default=4.0, show_default=True)
@click.option("--c2", type=_c_option, default=4.0, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def cmd_hbd(hypergraph, n_bound, c1, c2, seed):
    """Solve hitting-beep decomposition on a hypergraph file and verify it."""
    try:
        h = load_hypergraph(_read(hypergraph))
    except (HypergraphFormatError, ValueError) as exc:
        raise click.ClickException(f"{hypergraph}: {exc}") from None
    N = n_bound if n_bound is not None else max(2, h.size)
    params = HBDParams(N, c1, c2)
    sol = solve_hbd_abstract(h, params, seed)
    violations = verify_hbd(h, sol)
    report = {
        "params": {
            "N": N,
            "c1": c1,
            "c2": c2,
            "epochs": params.epochs,
            "iterations": params.iterations,
            "k": params.k,
            "W": params.word_width,
        },
        "feasible": not violations,
        "violations": [{"edge": v.edge, "kind": v.kind} for v in violations],
        "solution": {
            "edge_color": list(sol.edge_color),
            "vertex_colorset": [sorted(cs) for cs in sol.vertex_colorset],
        },
        "stats": palette_stats(sol, h),
    }
    click.echo(json.dumps(report, indent=2))


@main.group("gen")
def cmd_gen() -> None:
    """Write graph, hypergraph or destination-schedule files."""


def _write(text: str, output: str | None) -> None:
    if output is None:
        click.echo(text, nl=False)
        return
    try:
        Path(output).write_text(text)
    except OSError as exc:
        raise click.ClickException(f"cannot write {output}: {exc.strerror or exc}") from None


@cmd_gen.command("graph")
@click.argument("spec")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def gen_graph_cmd(spec, seed, output):
    """Generate a graph from SPEC, e.g. "path:n=4" or "grid:rows=3,cols=5"."""
    g, _ = _load_graph_arg(None, spec, seed)
    _write(save_graph(g), output)


@cmd_gen.command("hypergraph")
@click.option("--vertices", type=click.IntRange(min=0), required=True)
@click.option("--edges", type=click.IntRange(min=0), required=True)
@click.option("--max-rank", type=click.IntRange(min=0), default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def gen_hypergraph_cmd(vertices, edges, max_rank, seed, output):
    """Generate a random hypergraph."""
    _write(save_hypergraph(random_hypergraph(vertices, edges, max_rank, seed)), output)


@cmd_gen.command("schedule")
@click.option("--graph", type=click.Path(dir_okay=False), help="Graph file.")
@click.option("--gen", help="Generator spec (with --seed) instead of --graph.")
@click.option("--source", type=int, default=0, show_default=True)
@click.option("--count", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--max-wake", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("-o", "--output", type=click.Path(dir_okay=False))
def gen_schedule_cmd(graph, gen, source, count, max_wake, seed, output):
    """Draw destinations and their external wake rounds."""
    g, _ = _load_graph_arg(graph, gen, seed)
    _write(WakeSchedule(random_destinations(g, source, count, max_wake, seed)).dump(), output)


@main.command("verify")
@click.option("--trace", "trace_path", type=click.Path(dir_okay=False), required=True)
@click.option("--graph", type=click.Path(dir_okay=False), required=True)
@click.option("--dest", type=click.Path(dir_okay=False), help="Schedule used for the run (checks wake causes).")
def cmd_verify(trace_path, graph, dest):
    """Replay the beeping-model conformance rules over a stored trace."""
    try:
        g = load_graph(_read(graph))
    except GraphError as exc:
        raise click.ClickException(f"{graph}: {exc}") from None
    schedule = _load_schedule(dest).rounds if dest is not None else None
    try:
        trace = load_trace(_read(trace_path).splitlines(), g.n)
    except ValueError as exc:
        raise click.ClickException(f"{trace_path}: {exc}") from None
    violations = check_conformance(trace, g, schedule)
    report = {
        "rounds": trace.rounds,
        "records": int(np.count_nonzero(trace.actions)),
        "ok": not violations,
        "violations": violations,
    }
    click.echo(json.dumps(report, indent=2))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
