"""Incentivized content sharing on latency networks: activation processes,
coverage-process tooling, seed selection and payment experiments."""

from .process import BehaviorModel, run_to_fixpoint
from .topology import LatencyMatrix, Topology, derive_quality, grid_latency, load_latency_matrix
from .welfare import WelfareFunction, evaluate

__all__ = [
    "BehaviorModel", "LatencyMatrix", "Topology", "WelfareFunction",
    "derive_quality", "evaluate", "grid_latency", "load_latency_matrix", "run_to_fixpoint",
]
__version__ = "0.1.0"
