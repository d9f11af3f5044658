"""Beeping-model simulator and shortest-path construction protocols."""

from .experiment import RunSummary, run_instance
from .graph import Graph, bfs_layers, gen_graph, load_graph, save_graph
from .hbd import HBDParams, Hypergraph, solve_hbd_abstract, verify_hbd
from .protocol import DistancePolicy, ProtocolConfig, run_full_protocol
from .sim import Action, Observation, WakeSchedule, run_simulation

__all__ = [
    "Action",
    "DistancePolicy",
    "Graph",
    "HBDParams",
    "Hypergraph",
    "Observation",
    "ProtocolConfig",
    "RunSummary",
    "WakeSchedule",
    "bfs_layers",
    "gen_graph",
    "load_graph",
    "run_full_protocol",
    "run_instance",
    "run_simulation",
    "save_graph",
    "solve_hbd_abstract",
    "verify_hbd",
]

__version__ = "0.1.0"
