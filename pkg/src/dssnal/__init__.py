"""Distributed semismooth-Newton augmented Lagrangian solver on a simulated agent network."""

from .netsim import CommLedger, Network
from .problems import ProblemInstance, make_instance
from .solver import SolverConfig, SolveResult, kkt_residual, solve
from .topology import (GossipMatrix, Graph, build_gossip, build_laplacian_gossip,
                       build_projection_gossip, make_graph, validate_gossip)

__all__ = [
    "CommLedger", "Network", "ProblemInstance", "make_instance", "SolverConfig", "SolveResult",
    "kkt_residual", "solve", "GossipMatrix", "Graph", "build_gossip", "build_laplacian_gossip",
    "build_projection_gossip", "make_graph", "validate_gossip",
]

__version__ = "0.1.0"
